#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vit4lpa/model.hpp"

namespace vit4lpa::model {

/// Checkpoint sidecar data: the configuration, the seed the weights were
/// created from, a digest of the dataset manifest the run used, and
/// free-form extras (epoch, loss, ...).
struct CheckpointMeta {
    ModelConfig config;
    std::uint64_t creation_seed = 0;
    std::string dataset_digest = "none";
    std::vector<std::pair<std::string, std::string>> extra;
};

// Binary layout: magic "V4LP", u16 LE format version, u32 LE metadata byte
// length + metadata text (key = value lines), u32 LE record count, then per
// parameter: u32 LE name length + name, u32 LE rank, rank u32 LE dims, and
// raw little-endian f64 values. Readers reject unknown versions.
inline constexpr char kCheckpointMagic[4] = {'V', '4', 'L', 'P'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const ModelState& state, const CheckpointMeta& meta);

ModelState load_checkpoint(const std::string& path, CheckpointMeta* meta_out = nullptr);

}  // namespace vit4lpa::model
