#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vit4lpa/codec.hpp"
#include "vit4lpa/tape.hpp"
#include "vit4lpa/tensor.hpp"

namespace vit4lpa::patch {

/// Patch lattice geometry. The patch side must divide the image exactly.
struct PatchGrid {
    int patch_size = 4;  // N_P, pixels per patch side
    int rows = 6;        // image days / N_P
    int cols = 6;        // image slots / N_P
    int channels = data::kChannels;

    static PatchGrid for_image(int image_days, int image_slots, int patch_size,
                               int channels = data::kChannels);

    int total() const { return rows * cols; }
    int patch_dim() const { return patch_size * patch_size * channels; }

    // row-major lattice numbering <-> (row, col)
    int index_of(int row, int col) const { return row * cols + col; }
    int row_of(int index) const { return index / cols; }
    int col_of(int index) const { return index % cols; }
};

/// Flattened patches in row-major lattice order. Within one patch the
/// flattening is row-major over pixels with channel last, so element
/// (pr, pc, ch) sits at (pr*N_P + pc)*channels + ch.
struct PatchSequence {
    PatchGrid grid;
    std::vector<std::vector<double>> patches;
};

PatchSequence patchify(const data::LoadImage& image, const PatchGrid& grid);
// channel-agnostic variant for single-channel targets
PatchSequence patchify_pixels(const std::vector<double>& pixels, int image_rows, int image_cols,
                              const PatchGrid& grid);

/// Exact inverse of patchify: the pixel buffer, bit-identical.
std::vector<double> unpatchify(const PatchSequence& seq);

/// Boolean mask over the patch lattice. Serializes as one character per
/// patch in row-major order, '1' = masked.
struct MaskPattern {
    enum class Mode { grid, random };
    int rows = 0;
    int cols = 0;
    Mode mode = Mode::grid;
    std::uint64_t seed = 0;  // meaningful in random mode
    std::vector<std::uint8_t> masked;  // row-major, 1 = masked

    int total() const { return rows * cols; }
    int masked_count() const;
    bool is_masked(int index) const { return masked[static_cast<std::size_t>(index)] != 0; }
    std::string to_string() const;
};

/// Checkerboard over the lattice: patch (i,j) masked iff (i+j) mod 2 ==
/// parity. Requires an even cell count so exactly half the patches mask.
MaskPattern grid_mask(int rows, int cols, int parity);

/// Exactly round(mask_ratio * total) cells masked, drawn by seeded shuffle.
MaskPattern random_mask(int rows, int cols, double mask_ratio, std::uint64_t seed);

struct MaskedSelection {
    std::vector<std::vector<double>> visible;  // original relative order kept
    std::vector<int> visible_indices;          // row-major lattice positions
    std::vector<int> masked_indices;
};

MaskedSelection apply_mask(const PatchSequence& seq, const MaskPattern& pattern);

/// Full-length embedding sequence for the decoder: position k holds its row
/// of `visible` when k was visible, the shared mask embedding otherwise.
/// Differentiable in both inputs. Throws on duplicate or out-of-range
/// indices and on count mismatch.
num::Tensor reassemble(num::Tape* tape, const num::Tensor& visible,
                       const std::vector<int>& visible_indices,
                       const num::Tensor& mask_embedding, int total);

}  // namespace vit4lpa::patch
