#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vit4lpa/adam.hpp"
#include "vit4lpa/checkpoint.hpp"
#include "vit4lpa/codec.hpp"
#include "vit4lpa/model.hpp"
#include "vit4lpa/patcher.hpp"

namespace vit4lpa::train {

enum class LossScope { masked_only, all_pixels };
enum class MaskMode { grid, random };

struct PretrainConfig {
    int batch_size = 64;
    int epochs = 50;
    int patch_size = 4;  // N_P
    MaskMode mask_mode = MaskMode::grid;  // grid parity alternates per batch
    double random_mask_ratio = 0.5;
    LossScope loss_scope = LossScope::masked_only;
    num::AdamConfig optimizer;  // constant learning rate
    double dropout = 0.1;
    std::uint64_t seed = 0;
    int checkpoint_every = 0;  // epochs between checkpoints; 0 = final only
    // Fixed fraction of images held out (seeded shuffle, never trained on).
    // When it rounds down to zero images the training set doubles as the
    // validation set for logging.
    double validation_fraction = 0.05;
    int validation_log_images = 8;  // cap on per-step validation forward cost
    int max_steps = 0;              // 0 = run all epochs
    std::string out_dir;            // empty = keep everything in memory
    std::string dataset_digest = "none";
};

struct TrainLogEntry {
    int epoch = 0;
    long step = 0;
    double loss = 0.0;
    double val_nmae_percent = 0.0;
    double wall_seconds = 0.0;
    int mask_parity = -1;  // grid mode only; -1 otherwise
};

struct TrainLog {
    std::vector<TrainLogEntry> entries;
    void write_csv(const std::string& path) const;
};

struct PretrainResult {
    model::ModelState state;
    TrainLog log;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::string final_checkpoint_path;  // empty when out_dir is empty
};

/// Mean squared error between a reconstruction and the original image,
/// scored over the pixels of masked patches (masked_only) or the whole
/// image (all_pixels), all three channels included.
double mae_loss(const std::vector<double>& reconstructed_pixels,
                const std::vector<double>& original_pixels, const patch::MaskPattern& pattern,
                LossScope scope);

/// Mean absolute error over masked pixels of the load channel, as a percent.
/// Pixels are already range-normalized, so this is a normalized MAE.
double reconstruction_nmae(const std::vector<double>& reconstructed_pixels,
                           const std::vector<double>& original_pixels,
                           const patch::MaskPattern& pattern);

/// Eval-mode masked reconstruction of one image (full pixel buffer out).
std::vector<double> reconstruct_image(const model::ModelState& state, const data::LoadImage& image,
                                      const patch::MaskPattern& pattern, int patch_size = 4);

/// Masked-image-modeling pre-training. Deterministic per seed: shuffles,
/// mask draws and dropout all derive from config.seed. A NaN loss aborts
/// with the last good checkpoint written (when out_dir is set) and a
/// diagnostic naming the step.
PretrainResult pretrain(const std::vector<data::LoadImage>& dataset, const PretrainConfig& config,
                        const model::ModelConfig& model_config = {});

}  // namespace vit4lpa::train
