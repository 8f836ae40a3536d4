#include "vit4lpa/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vit4lpa/error.hpp"
#include "vit4lpa/ops.hpp"
#include "vit4lpa/patcher.hpp"
#include "vit4lpa/text_io.hpp"

namespace vit4lpa::analysis {

SimilarityAtlas position_similarity(const model::ModelState& state) {
    const num::Tensor& pos = state.enc_pos;
    const int total = pos.dim(0);
    const int d = pos.dim(1);
    const int cols = static_cast<int>(std::lround(std::sqrt(static_cast<double>(total))));
    if (cols * cols != total) {
        throw ContractError("position_similarity: " + std::to_string(total) +
                            " positions do not form a square lattice");
    }

    std::vector<double> norms(static_cast<std::size_t>(total));
    for (int k = 0; k < total; ++k) {
        double acc = 0.0;
        for (int c = 0; c < d; ++c) acc += pos.at(k, c) * pos.at(k, c);
        norms[static_cast<std::size_t>(k)] = std::sqrt(acc);
        if (norms[static_cast<std::size_t>(k)] == 0.0) {
            throw ContractError("position_similarity: zero-norm embedding at index " +
                                std::to_string(k));
        }
    }

    SimilarityAtlas atlas;
    atlas.rows = cols;
    atlas.cols = cols;
    atlas.matrices.assign(static_cast<std::size_t>(total),
                          std::vector<double>(static_cast<std::size_t>(total)));
    for (int a = 0; a < total; ++a) {
        for (int b = 0; b < total; ++b) {
            double dot = 0.0;
            for (int c = 0; c < d; ++c) dot += pos.at(a, c) * pos.at(b, c);
            atlas.matrices[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] =
                dot / (norms[static_cast<std::size_t>(a)] * norms[static_cast<std::size_t>(b)]);
        }
    }
    return atlas;
}

namespace {

num::Tensor full_image_tokens(const model::ModelState& state, const data::LoadImage& image,
                              int patch_size) {
    const auto grid = patch::PatchGrid::for_image(image.days, image.slots_per_day, patch_size);
    const auto seq = patch::patchify(image, grid);
    num::Tensor patches({grid.total(), grid.patch_dim()});
    auto pv = patches.values_mut();
    std::vector<int> positions(static_cast<std::size_t>(grid.total()));
    for (int k = 0; k < grid.total(); ++k) {
        std::copy(seq.patches[static_cast<std::size_t>(k)].begin(),
                  seq.patches[static_cast<std::size_t>(k)].end(),
                  pv.begin() + static_cast<std::size_t>(k) * grid.patch_dim());
        positions[static_cast<std::size_t>(k)] = k;
    }
    return model::embed_patches(nullptr, state, patches, positions, {});
}

}  // namespace

std::vector<double> mean_attention(const model::ModelState& state,
                                   const std::vector<data::LoadImage>& images, int layer,
                                   int patch_size) {
    if (images.empty()) throw ContractError("mean_attention: empty image sample");
    if (layer < 0 || layer >= state.config().encoder_layers) {
        throw ContractError("mean_attention: layer " + std::to_string(layer) + " out of [0," +
                            std::to_string(state.config().encoder_layers) + ")");
    }
    const int total = state.config().num_positions;
    // Neumaier-compensated column sums; plain accumulation would leave the
    // zero-QK uniform heatmap a few ulps away from exactly 1/36.
    std::vector<double> sum(static_cast<std::size_t>(total), 0.0);
    std::vector<double> comp(static_cast<std::size_t>(total), 0.0);
    long contributions = 0;
    for (const auto& image : images) {
        num::Tensor tokens = full_image_tokens(state, image, patch_size);
        model::ForwardOptions opt;
        opt.capture_attention = true;
        model::AttentionRecord record;
        model::encoder_forward(nullptr, state, tokens, 1, total, opt, &record);
        for (const auto& attn : record.layers[static_cast<std::size_t>(layer)]) {
            // average attention received by each key: column mean
            for (int q = 0; q < total; ++q) {
                for (int k = 0; k < total; ++k) {
                    const std::size_t kk = static_cast<std::size_t>(k);
                    const double v = attn.at(q, k);
                    const double t = sum[kk] + v;
                    comp[kk] += std::abs(sum[kk]) >= std::abs(v) ? (sum[kk] - t) + v : (v - t) + sum[kk];
                    sum[kk] = t;
                }
            }
            contributions += total;  // rows averaged per head
        }
    }
    std::vector<double> mean(static_cast<std::size_t>(total));
    for (int k = 0; k < total; ++k) {
        const std::size_t kk = static_cast<std::size_t>(k);
        mean[kk] = (sum[kk] + comp[kk]) / static_cast<double>(contributions);
    }
    return mean;
}

Histogram error_histogram(const std::vector<double>& values, double bin_width) {
    if (values.empty()) throw ContractError("error_histogram: empty input");
    if (!(bin_width > 0.0)) throw ContractError("error_histogram: bin_width must be > 0");
    Histogram h;
    h.bin_width = bin_width;
    double sum = 0.0, max_v = 0.0;
    for (double v : values) {
        if (v < 0.0) throw ContractError("error_histogram: negative value");
        sum += v;
        max_v = std::max(max_v, v);
    }
    h.mean = sum / static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - h.mean) * (v - h.mean);
    h.stddev = std::sqrt(var / static_cast<double>(values.size()));

    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    h.median = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);

    const auto n_bins = static_cast<std::size_t>(std::floor(max_v / bin_width)) + 1;
    h.counts.assign(n_bins, 0);
    for (double v : values) {
        auto bin = static_cast<std::size_t>(std::floor(v / bin_width));
        if (bin >= n_bins) bin = n_bins - 1;  // v == max on the closing edge
        h.counts[bin] += 1;
    }
    return h;
}

void export_heatmap(const std::vector<double>& matrix, int rows, int cols,
                    const std::string& path, HeatmapFormat format) {
    if (rows < 1 || cols < 1 || matrix.size() != static_cast<std::size_t>(rows) * cols) {
        throw ContractError("export_heatmap: matrix size does not match " + std::to_string(rows) +
                            "x" + std::to_string(cols));
    }
    for (double v : matrix) {
        if (!std::isfinite(v)) throw ContractError("export_heatmap: non-finite value");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write: " + path);
    if (format == HeatmapFormat::csv) {
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) {
                if (c) out << ',';
                out << format_g12(matrix[static_cast<std::size_t>(r) * cols + c]);
            }
            out << '\n';
        }
    } else {
        const auto [lo_it, hi_it] = std::minmax_element(matrix.begin(), matrix.end());
        const double lo = *lo_it, hi = *hi_it;
        out << "P5\n";
        if (hi > lo) {
            out << "# scale min=" << format_g12(lo) << " max=" << format_g12(hi) << "\n";
        } else {
            out << "# scale degenerate value=" << format_g12(lo) << "\n";
        }
        out << cols << ' ' << rows << "\n255\n";
        for (double v : matrix) {
            const double scaled = hi > lo ? (v - lo) / (hi - lo) : 0.0;
            out.put(static_cast<char>(static_cast<unsigned char>(std::lround(scaled * 255.0))));
        }
    }
    if (!out) throw IoError("write failed: " + path);
}

Diagnostics run_diagnostics(const model::ModelState& state,
                            const std::vector<data::LoadImage>& images) {
    Diagnostics diag;
    const auto atlas = position_similarity(state);
    const int rows = atlas.rows, cols = atlas.cols;
    const int total = rows * cols;
    double col_sum = 0.0, row_sum = 0.0;
    long col_n = 0, row_n = 0;
    for (int a = 0; a < total; ++a) {
        const int ai = a / cols, aj = a % cols;
        for (int b = 0; b < total; ++b) {
            if (a == b) continue;
            const int bi = b / cols, bj = b % cols;
            const double sim = atlas.matrices[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
            if (aj == bj) {
                col_sum += sim;
                ++col_n;
            }
            if (ai == bi) {
                row_sum += sim;
                ++row_n;
            }
        }
    }
    diag.mean_same_column_similarity = col_sum / static_cast<double>(col_n);
    diag.mean_same_row_similarity = row_sum / static_cast<double>(row_n);
    diag.column_dominance = diag.mean_same_column_similarity > diag.mean_same_row_similarity;

    for (int l = 0; l < state.config().encoder_layers; ++l) {
        const auto heat = mean_attention(state, images, l);
        double entropy = 0.0;
        for (double p : heat) {
            if (p > 0.0) entropy -= p * std::log(p);
        }
        diag.attention_entropy.push_back(entropy);
    }
    diag.entropy_nondecreasing =
        !diag.attention_entropy.empty() &&
        diag.attention_entropy.back() >= diag.attention_entropy.front() - 1e-12;
    return diag;
}

std::string Diagnostics::to_string() const {
    std::ostringstream os;
    os << "mean_same_column_similarity = " << format_g12(mean_same_column_similarity) << '\n';
    os << "mean_same_row_similarity = " << format_g12(mean_same_row_similarity) << '\n';
    os << "column_dominance = " << (column_dominance ? "pass" : "fail") << '\n';
    for (std::size_t l = 0; l < attention_entropy.size(); ++l) {
        os << "attention_entropy_layer_" << (l + 1) << " = " << format_g12(attention_entropy[l]) << '\n';
    }
    os << "entropy_nondecreasing = " << (entropy_nondecreasing ? "pass" : "fail") << '\n';
    return os.str();
}

void export_analysis(const model::ModelState& state, const std::vector<data::LoadImage>& images,
                     const std::vector<double>& recon_errors_percent, double hist_bin_width,
                     const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory: " + dir);

    const auto atlas = position_similarity(state);
    for (std::size_t k = 0; k < atlas.matrices.size(); ++k) {
        export_heatmap(atlas.matrices[k], atlas.rows, atlas.cols,
                       dir + "/pos_sim_" + std::to_string(k) + ".csv", HeatmapFormat::csv);
    }
    for (int l = 0; l < state.config().encoder_layers; ++l) {
        const auto heat = mean_attention(state, images, l);
        const std::string stem = dir + "/attn_layer_" + std::to_string(l + 1);
        export_heatmap(heat, atlas.rows, atlas.cols, stem + ".csv", HeatmapFormat::csv);
        export_heatmap(heat, atlas.rows, atlas.cols, stem + ".pgm", HeatmapFormat::pgm);
    }
    if (!recon_errors_percent.empty()) {
        const Histogram h = error_histogram(recon_errors_percent, hist_bin_width);
        std::ofstream out(dir + "/recon_hist.csv", std::ios::binary);
        if (!out) throw IoError("cannot write: " + dir + "/recon_hist.csv");
        out << "bin_left,count\n";
        for (std::size_t b = 0; b < h.counts.size(); ++b) {
            out << format_g12(static_cast<double>(b) * h.bin_width) << ',' << h.counts[b] << '\n';
        }
        out << "# mean=" << format_full(h.mean) << " std=" << format_full(h.stddev)
            << " median=" << format_full(h.median) << '\n';
    }
    write_text_file(dir + "/diagnostics.txt", run_diagnostics(state, images).to_string());
}

}  // namespace vit4lpa::analysis
