#pragma once

#include <string>
#include <vector>

#include "vit4lpa/codec.hpp"
#include "vit4lpa/model.hpp"

namespace vit4lpa::analysis {

/// Cosine similarities between every pair of position embeddings, arranged
/// as one 6x6 matrix per anchor position: atlas[k][i][j] holds
/// cosine(P_k, P_{6i+j}). Symmetric across anchors, 1 at each anchor's own
/// lattice cell.
struct SimilarityAtlas {
    int rows = 0;
    int cols = 0;
    std::vector<std::vector<double>> matrices;  // [total][total], row-major cells

    double at(int anchor, int i, int j) const {
        return matrices[static_cast<std::size_t>(anchor)][static_cast<std::size_t>(i) * cols + j];
    }
};

/// Throws ContractError naming the index of any zero-norm embedding.
SimilarityAtlas position_similarity(const model::ModelState& state);

/// Mean attention weight received by each key patch in one encoder layer,
/// averaged over heads, query positions and the sample images, reshaped to
/// the patch lattice. Entries are nonnegative and sum to 1. Images are
/// encoded unmasked (all 36 patches); layer is 0-based.
std::vector<double> mean_attention(const model::ModelState& state,
                                   const std::vector<data::LoadImage>& images, int layer,
                                   int patch_size = 4);

struct Histogram {
    double bin_width = 0.0;
    std::vector<long> counts;  // left-closed bins [k*w, (k+1)*w) from 0
    double mean = 0.0;
    double stddev = 0.0;  // population
    double median = 0.0;
};

/// Left-closed bins from 0 through the bin containing the maximum value.
/// Negative values are a contract error; so is an empty input.
Histogram error_histogram(const std::vector<double>& values, double bin_width);

enum class HeatmapFormat { csv, pgm };

/// CSV: plain numeric grid, 12 significant digits. PGM: binary 8-bit
/// grayscale, min-max scaled per file with the scale recorded in a comment
/// line; a constant matrix writes all zeros and a degenerate-scale comment.
/// Byte-stable for identical inputs.
void export_heatmap(const std::vector<double>& matrix, int rows, int cols,
                    const std::string& path, HeatmapFormat format);

/// Soft diagnostics over a trained model; informative, never load-bearing.
struct Diagnostics {
    double mean_same_column_similarity = 0.0;
    double mean_same_row_similarity = 0.0;
    bool column_dominance = false;      // column mean > row mean
    std::vector<double> attention_entropy;  // one value per encoder layer
    bool entropy_nondecreasing = false;     // last layer >= first layer

    std::string to_string() const;
};

Diagnostics run_diagnostics(const model::ModelState& state,
                            const std::vector<data::LoadImage>& images);

/// Writes the full analysis artifact set into dir:
/// pos_sim_<k>.csv for all 36 anchors, attn_layer_<l>.csv/.pgm per encoder
/// layer (1-based), recon_hist.csv, and diagnostics.txt.
void export_analysis(const model::ModelState& state, const std::vector<data::LoadImage>& images,
                     const std::vector<double>& recon_errors_percent, double hist_bin_width,
                     const std::string& dir);

}  // namespace vit4lpa::analysis
