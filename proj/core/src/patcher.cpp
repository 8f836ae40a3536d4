#include "vit4lpa/patcher.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vit4lpa/error.hpp"
#include "vit4lpa/rng.hpp"

namespace vit4lpa::patch {

PatchGrid PatchGrid::for_image(int image_days, int image_slots, int patch_size, int channels) {
    if (patch_size < 1) throw ConfigError("patch size must be >= 1");
    if (image_days % patch_size != 0 || image_slots % patch_size != 0) {
        throw ConfigError("patch size " + std::to_string(patch_size) + " does not divide image " +
                          std::to_string(image_days) + "x" + std::to_string(image_slots));
    }
    PatchGrid g;
    g.patch_size = patch_size;
    g.rows = image_days / patch_size;
    g.cols = image_slots / patch_size;
    g.channels = channels;
    return g;
}

PatchSequence patchify_pixels(const std::vector<double>& pixels, int image_rows, int image_cols,
                              const PatchGrid& grid) {
    if (image_rows != grid.rows * grid.patch_size || image_cols != grid.cols * grid.patch_size) {
        throw ConfigError("patchify: image " + std::to_string(image_rows) + "x" +
                          std::to_string(image_cols) + " does not match grid");
    }
    const int ch = grid.channels;
    if (pixels.size() != static_cast<std::size_t>(image_rows) * image_cols * ch) {
        throw ShapeError("patchify: pixel buffer size " + std::to_string(pixels.size()) +
                         " does not match " + std::to_string(image_rows) + "x" +
                         std::to_string(image_cols) + "x" + std::to_string(ch));
    }
    PatchSequence seq;
    seq.grid = grid;
    seq.patches.resize(static_cast<std::size_t>(grid.total()));
    const int np = grid.patch_size;
    for (int i = 0; i < grid.rows; ++i) {
        for (int j = 0; j < grid.cols; ++j) {
            auto& p = seq.patches[static_cast<std::size_t>(grid.index_of(i, j))];
            p.resize(static_cast<std::size_t>(grid.patch_dim()));
            for (int pr = 0; pr < np; ++pr) {
                const int row = i * np + pr;
                const std::size_t src = (static_cast<std::size_t>(row) * image_cols + j * np) * ch;
                std::copy(pixels.begin() + src, pixels.begin() + src + static_cast<std::size_t>(np) * ch,
                          p.begin() + static_cast<std::size_t>(pr) * np * ch);
            }
        }
    }
    return seq;
}

PatchSequence patchify(const data::LoadImage& image, const PatchGrid& grid) {
    if (grid.channels != data::kChannels) {
        throw ConfigError("patchify: load images have 3 channels");
    }
    return patchify_pixels(image.pixels, image.days, image.slots_per_day, grid);
}

std::vector<double> unpatchify(const PatchSequence& seq) {
    const PatchGrid& grid = seq.grid;
    if (seq.patches.size() != static_cast<std::size_t>(grid.total())) {
        throw ShapeError("unpatchify: sequence length " + std::to_string(seq.patches.size()) +
                         " does not match grid of " + std::to_string(grid.total()));
    }
    const int np = grid.patch_size;
    const int ch = grid.channels;
    const int image_rows = grid.rows * np;
    const int image_cols = grid.cols * np;
    std::vector<double> pixels(static_cast<std::size_t>(image_rows) * image_cols * ch);
    for (int i = 0; i < grid.rows; ++i) {
        for (int j = 0; j < grid.cols; ++j) {
            const auto& p = seq.patches[static_cast<std::size_t>(grid.index_of(i, j))];
            if (p.size() != static_cast<std::size_t>(grid.patch_dim())) {
                throw ShapeError("unpatchify: patch " + std::to_string(grid.index_of(i, j)) +
                                 " has length " + std::to_string(p.size()));
            }
            for (int pr = 0; pr < np; ++pr) {
                const int row = i * np + pr;
                const std::size_t dst = (static_cast<std::size_t>(row) * image_cols + j * np) * ch;
                std::copy(p.begin() + static_cast<std::size_t>(pr) * np * ch,
                          p.begin() + static_cast<std::size_t>(pr + 1) * np * ch, pixels.begin() + dst);
            }
        }
    }
    return pixels;
}

int MaskPattern::masked_count() const {
    int n = 0;
    for (auto m : masked) n += m != 0;
    return n;
}

std::string MaskPattern::to_string() const {
    std::string s;
    s.reserve(masked.size());
    for (auto m : masked) s.push_back(m ? '1' : '0');
    return s;
}

MaskPattern grid_mask(int rows, int cols, int parity) {
    if (rows < 1 || cols < 1) throw ContractError("grid_mask: empty lattice");
    if ((rows * cols) % 2 != 0) {
        throw ContractError("grid_mask: lattice of " + std::to_string(rows * cols) +
                            " cells cannot be half-masked exactly");
    }
    if (parity != 0 && parity != 1) throw ContractError("grid_mask: parity must be 0 or 1");
    MaskPattern p;
    p.rows = rows;
    p.cols = cols;
    p.mode = MaskPattern::Mode::grid;
    p.masked.resize(static_cast<std::size_t>(rows) * cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            p.masked[static_cast<std::size_t>(i) * cols + j] = ((i + j) % 2 == parity) ? 1 : 0;
        }
    }
    return p;
}

MaskPattern random_mask(int rows, int cols, double mask_ratio, std::uint64_t seed) {
    if (rows < 1 || cols < 1) throw ContractError("random_mask: empty lattice");
    if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) {
        throw ContractError("random_mask: mask_ratio must lie in (0,1)");
    }
    const int total = rows * cols;
    const int n_masked = static_cast<int>(std::lround(mask_ratio * total));
    MaskPattern p;
    p.rows = rows;
    p.cols = cols;
    p.mode = MaskPattern::Mode::random;
    p.seed = seed;
    p.masked.assign(static_cast<std::size_t>(total), 0);
    std::vector<int> order(static_cast<std::size_t>(total));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);
    for (int k = 0; k < n_masked; ++k) p.masked[static_cast<std::size_t>(order[k])] = 1;
    return p;
}

MaskedSelection apply_mask(const PatchSequence& seq, const MaskPattern& pattern) {
    const PatchGrid& grid = seq.grid;
    if (pattern.rows != grid.rows || pattern.cols != grid.cols ||
        seq.patches.size() != static_cast<std::size_t>(pattern.total())) {
        throw ContractError("apply_mask: pattern " + std::to_string(pattern.rows) + "x" +
                            std::to_string(pattern.cols) + " does not match grid " +
                            std::to_string(grid.rows) + "x" + std::to_string(grid.cols));
    }
    MaskedSelection sel;
    for (int k = 0; k < pattern.total(); ++k) {
        if (pattern.is_masked(k)) {
            sel.masked_indices.push_back(k);
        } else {
            sel.visible.push_back(seq.patches[static_cast<std::size_t>(k)]);
            sel.visible_indices.push_back(k);
        }
    }
    return sel;
}

num::Tensor reassemble(num::Tape* tape, const num::Tensor& visible,
                       const std::vector<int>& visible_indices,
                       const num::Tensor& mask_embedding, int total) {
    if (visible.rank() != 2) {
        throw ShapeError("reassemble: visible embeddings must be rank 2, got " +
                         num::shape_str(visible.shape()));
    }
    const int n_visible = visible.dim(0);
    const int d = visible.dim(1);
    if (mask_embedding.rank() != 1 || mask_embedding.dim(0) != d) {
        throw ShapeError("reassemble: mask embedding " + num::shape_str(mask_embedding.shape()) +
                         " does not match width " + std::to_string(d));
    }
    if (static_cast<int>(visible_indices.size()) != n_visible) {
        throw ContractError("reassemble: " + std::to_string(n_visible) + " embeddings but " +
                            std::to_string(visible_indices.size()) + " indices");
    }
    if (n_visible > total) throw ContractError("reassemble: more visible embeddings than positions");
    std::vector<std::uint8_t> seen(static_cast<std::size_t>(total), 0);
    for (int idx : visible_indices) {
        if (idx < 0 || idx >= total) {
            throw ContractError("reassemble: index " + std::to_string(idx) + " out of [0," +
                                std::to_string(total) + ")");
        }
        if (seen[static_cast<std::size_t>(idx)]) {
            throw ContractError("reassemble: duplicate index " + std::to_string(idx));
        }
        seen[static_cast<std::size_t>(idx)] = 1;
    }

    num::Tensor out({total, d});
    auto ov = out.values_mut();
    const auto vv = visible.values();
    const auto mv = mask_embedding.values();
    for (int k = 0; k < total; ++k) {
        double* row = ov.data() + static_cast<std::size_t>(k) * d;
        for (int c = 0; c < d; ++c) row[c] = mv[c];
    }
    for (int i = 0; i < n_visible; ++i) {
        double* row = ov.data() + static_cast<std::size_t>(visible_indices[i]) * d;
        const double* src = vv.data() + static_cast<std::size_t>(i) * d;
        for (int c = 0; c < d; ++c) row[c] = src[c];
    }

    if (num::tracing(tape, {&visible, &mask_embedding})) {
        out.set_requires_grad(true);
        tape->record({{visible, mask_embedding},
                      out,
                      [visible_indices, seen = std::move(seen), total, d](const num::TapeNode& nd) {
            const auto gout = nd.output.grad();
            num::Tensor tv = nd.inputs[0];
            num::Tensor tm = nd.inputs[1];
            if (tv.requires_grad()) {
                auto g = tv.grad_mut();
                for (std::size_t i = 0; i < visible_indices.size(); ++i) {
                    const std::size_t src = static_cast<std::size_t>(visible_indices[i]) * d;
                    for (int c = 0; c < d; ++c) g[i * d + c] += gout[src + c];
                }
            }
            if (tm.requires_grad()) {
                auto g = tm.grad_mut();
                for (int k = 0; k < total; ++k) {
                    if (seen[static_cast<std::size_t>(k)]) continue;
                    const std::size_t src = static_cast<std::size_t>(k) * d;
                    for (int c = 0; c < d; ++c) g[c] += gout[src + c];
                }
            }
        }});
    }
    return out;
}

}  // namespace vit4lpa::patch
