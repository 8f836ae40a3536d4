#include "vit4lpa/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "vit4lpa/error.hpp"

namespace vit4lpa::num {

namespace {

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(t.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shapes disagree: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

int last_dim(const Tensor& t) {
    if (t.rank() < 1) throw ShapeError("expected rank >= 1, got " + shape_str(t.shape()));
    return t.shape().back();
}

}  // namespace

void matmul_raw(const double* a, int ar, int ac, bool ta,
                const double* b, int br, int bc, bool tb,
                double* out, bool accumulate) {
    const int m = ta ? ac : ar;
    const int k = ta ? ar : ac;
    const int n = tb ? br : bc;
    if (!accumulate) std::fill(out, out + static_cast<std::size_t>(m) * n, 0.0);
    if (!ta && !tb) {
        for (int i = 0; i < m; ++i) {
            const double* arow = a + static_cast<std::size_t>(i) * ac;
            double* orow = out + static_cast<std::size_t>(i) * n;
            for (int p = 0; p < k; ++p) {
                const double av = arow[p];
                if (av == 0.0) continue;
                const double* brow = b + static_cast<std::size_t>(p) * bc;
                for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
            }
        }
    } else if (!ta && tb) {
        // out[i][j] = sum_p a[i][p] * b[j][p]; both rows contiguous
        for (int i = 0; i < m; ++i) {
            const double* arow = a + static_cast<std::size_t>(i) * ac;
            double* orow = out + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) {
                const double* brow = b + static_cast<std::size_t>(j) * bc;
                double acc = 0.0;
                for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
                orow[j] += acc;
            }
        }
    } else if (ta && !tb) {
        // out[i][j] = sum_p a[p][i] * b[p][j]
        for (int p = 0; p < k; ++p) {
            const double* arow = a + static_cast<std::size_t>(p) * ac;
            const double* brow = b + static_cast<std::size_t>(p) * bc;
            for (int i = 0; i < m; ++i) {
                const double av = arow[i];
                if (av == 0.0) continue;
                double* orow = out + static_cast<std::size_t>(i) * n;
                for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
            }
        }
    } else {
        // out[i][j] = sum_p a[p][i] * b[j][p]
        for (int i = 0; i < m; ++i) {
            double* orow = out + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) {
                const double* brow = b + static_cast<std::size_t>(j) * bc;
                double acc = 0.0;
                for (int p = 0; p < k; ++p) acc += a[static_cast<std::size_t>(p) * ac + i] * brow[p];
                orow[j] += acc;
            }
        }
    }
}

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const int m = a.dim(0), k = a.dim(1);
    const int k2 = b.dim(0), n = b.dim(1);
    if (k != k2) {
        throw ShapeError("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    Tensor out({m, n});
    matmul_raw(a.values().data(), m, k, false, b.values().data(), k, n, false,
               out.values_mut().data(), false);
    if (tracing(tape, {&a, &b})) {
        out.set_requires_grad(true);
        tape->record({{a, b}, out, [m, k, n](const TapeNode& nd) {
            const double* gout = nd.output.grad().data();
            Tensor ta = nd.inputs[0];
            Tensor tb = nd.inputs[1];
            if (ta.requires_grad()) {
                matmul_raw(gout, m, n, false, tb.values().data(), k, n, true,
                           ta.grad_mut().data(), true);
            }
            if (tb.requires_grad()) {
                matmul_raw(ta.values().data(), m, k, true, gout, m, n, false,
                           tb.grad_mut().data(), true);
            }
        }});
    }
    return out;
}

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out(a.shape());
    const auto av = a.values();
    const auto bv = b.values();
    auto ov = out.values_mut();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
    if (tracing(tape, {&a, &b})) {
        out.set_requires_grad(true);
        tape->record({{a, b}, out, [](const TapeNode& nd) {
            const auto gout = nd.output.grad();
            for (int s = 0; s < 2; ++s) {
                Tensor t = nd.inputs[s];
                if (!t.requires_grad()) continue;
                auto g = t.grad_mut();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i];
            }
        }});
    }
    return out;
}

Tensor sub(Tape* tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out(a.shape());
    const auto av = a.values();
    const auto bv = b.values();
    auto ov = out.values_mut();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
    if (tracing(tape, {&a, &b})) {
        out.set_requires_grad(true);
        tape->record({{a, b}, out, [](const TapeNode& nd) {
            const auto gout = nd.output.grad();
            Tensor ta = nd.inputs[0];
            Tensor tb = nd.inputs[1];
            if (ta.requires_grad()) {
                auto g = ta.grad_mut();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i];
            }
            if (tb.requires_grad()) {
                auto g = tb.grad_mut();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] -= gout[i];
            }
        }});
    }
    return out;
}

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out(a.shape());
    const auto av = a.values();
    const auto bv = b.values();
    auto ov = out.values_mut();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
    if (tracing(tape, {&a, &b})) {
        out.set_requires_grad(true);
        tape->record({{a, b}, out, [](const TapeNode& nd) {
            const auto gout = nd.output.grad();
            Tensor ta = nd.inputs[0];
            Tensor tb = nd.inputs[1];
            if (ta.requires_grad()) {
                auto g = ta.grad_mut();
                const auto bv2 = tb.values();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i] * bv2[i];
            }
            if (tb.requires_grad()) {
                auto g = tb.grad_mut();
                const auto av2 = ta.values();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i] * av2[i];
            }
        }});
    }
    return out;
}

Tensor scale(Tape* tape, const Tensor& a, double c) {
    Tensor out(a.shape());
    const auto av = a.values();
    auto ov = out.values_mut();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = c * av[i];
    if (tracing(tape, {&a})) {
        out.set_requires_grad(true);
        tape->record({{a}, out, [c](const TapeNode& nd) {
            const auto gout = nd.output.grad();
            Tensor t = nd.inputs[0];
            auto g = t.grad_mut();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * gout[i];
        }});
    }
    return out;
}

Tensor add_row_vector(Tape* tape, const Tensor& m, const Tensor& v) {
    require_rank2(m, "add_row_vector");
    if (v.rank() != 1 || v.dim(0) != m.dim(1)) {
        throw ShapeError("add_row_vector: vector " + shape_str(v.shape()) +
                         " does not match matrix " + shape_str(m.shape()));
    }
    const int rows = m.dim(0), cols = m.dim(1);
    Tensor out({rows, cols});
    const auto mv = m.values();
    const auto vv = v.values();
    auto ov = out.values_mut();
    for (int r = 0; r < rows; ++r) {
        const std::size_t off = static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) ov[off + c] = mv[off + c] + vv[c];
    }
    if (tracing(tape, {&m, &v})) {
        out.set_requires_grad(true);
        tape->record({{m, v}, out, [rows, cols](const TapeNode& nd) {
            const auto gout = nd.output.grad();
            Tensor tm = nd.inputs[0];
            Tensor tv = nd.inputs[1];
            if (tm.requires_grad()) {
                auto g = tm.grad_mut();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i];
            }
            if (tv.requires_grad()) {
                auto g = tv.grad_mut();
                for (int r = 0; r < rows; ++r) {
                    const std::size_t off = static_cast<std::size_t>(r) * cols;
                    for (int c = 0; c < cols; ++c) g[c] += gout[off + c];
                }
            }
        }});
    }
    return out;
}

Tensor gather_rows(Tape* tape, const Tensor& table, const std::vector<int>& indices) {
    require_rank2(table, "gather_rows");
    const int n_rows = table.dim(0), cols = table.dim(1);
    for (int idx : indices) {
        if (idx < 0 || idx >= n_rows) {
            throw ContractError("gather_rows: index " + std::to_string(idx) + " out of [0," +
                                std::to_string(n_rows) + ")");
        }
    }
    const int m = static_cast<int>(indices.size());
    Tensor out({m, cols});
    const auto tv = table.values();
    auto ov = out.values_mut();
    for (int i = 0; i < m; ++i) {
        const std::size_t src = static_cast<std::size_t>(indices[i]) * cols;
        const std::size_t dst = static_cast<std::size_t>(i) * cols;
        for (int c = 0; c < cols; ++c) ov[dst + c] = tv[src + c];
    }
    if (tracing(tape, {&table})) {
        out.set_requires_grad(true);
        tape->record({{table}, out, [indices, cols](const TapeNode& nd) {
            const auto gout = nd.output.grad();
            Tensor t = nd.inputs[0];
            auto g = t.grad_mut();
            for (std::size_t i = 0; i < indices.size(); ++i) {
                const std::size_t dst = static_cast<std::size_t>(indices[i]) * cols;
                const std::size_t src = i * cols;
                for (int c = 0; c < cols; ++c) g[dst + c] += gout[src + c];
            }
        }});
    }
    return out;
}

Tensor slice_rows(Tape* tape, const Tensor& x, int row_begin, int row_end) {
    require_rank2(x, "slice_rows");
    const int rows = x.dim(0), cols = x.dim(1);
    if (row_begin < 0 || row_end > rows || row_begin >= row_end) {
        throw ContractError("slice_rows: invalid range [" + std::to_string(row_begin) + "," +
                            std::to_string(row_end) + ") for " + shape_str(x.shape()));
    }
    const int m = row_end - row_begin;
    Tensor out({m, cols});
    const auto xv = x.values();
    auto ov = out.values_mut();
    std::copy(xv.begin() + static_cast<std::size_t>(row_begin) * cols,
              xv.begin() + static_cast<std::size_t>(row_end) * cols, ov.begin());
    if (tracing(tape, {&x})) {
        out.set_requires_grad(true);
        tape->record({{x}, out, [row_begin, m, cols](const TapeNode& nd) {
            const auto gout = nd.output.grad();
            Tensor t = nd.inputs[0];
            auto g = t.grad_mut();
            const std::size_t off = static_cast<std::size_t>(row_begin) * cols;
            for (std::size_t i = 0; i < static_cast<std::size_t>(m) * cols; ++i) g[off + i] += gout[i];
        }});
    }
    return out;
}

Tensor slice_cols(Tape* tape, const Tensor& x, int col_begin, int col_end) {
    require_rank2(x, "slice_cols");
    const int rows = x.dim(0), cols = x.dim(1);
    if (col_begin < 0 || col_end > cols || col_begin >= col_end) {
        throw ContractError("slice_cols: invalid range [" + std::to_string(col_begin) + "," +
                            std::to_string(col_end) + ") for " + shape_str(x.shape()));
    }
    const int n = col_end - col_begin;
    Tensor out({rows, n});
    const auto xv = x.values();
    auto ov = out.values_mut();
    for (int r = 0; r < rows; ++r) {
        const std::size_t src = static_cast<std::size_t>(r) * cols + col_begin;
        const std::size_t dst = static_cast<std::size_t>(r) * n;
        for (int c = 0; c < n; ++c) ov[dst + c] = xv[src + c];
    }
    if (tracing(tape, {&x})) {
        out.set_requires_grad(true);
        tape->record({{x}, out, [rows, cols, col_begin, n](const TapeNode& nd) {
            const auto gout = nd.output.grad();
            Tensor t = nd.inputs[0];
            auto g = t.grad_mut();
            for (int r = 0; r < rows; ++r) {
                const std::size_t dst = static_cast<std::size_t>(r) * cols + col_begin;
                const std::size_t src = static_cast<std::size_t>(r) * n;
                for (int c = 0; c < n; ++c) g[dst + c] += gout[src + c];
            }
        }});
    }
    return out;
}

Tensor concat_rows(Tape* tape, const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_rows: empty input");
    const int cols = parts[0].rank() == 2 ? parts[0].dim(1) : -1;
    int rows = 0;
    for (const Tensor& p : parts) {
        require_rank2(p, "concat_rows");
        if (p.dim(1) != cols) {
            throw ShapeError("concat_rows: column mismatch: " + shape_str(parts[0].shape()) +
                             " vs " + shape_str(p.shape()));
        }
        rows += p.dim(0);
    }
    Tensor out({rows, cols});
    auto ov = out.values_mut();
    std::size_t off = 0;
    for (const Tensor& p : parts) {
        const auto pv = p.values();
        std::copy(pv.begin(), pv.end(), ov.begin() + off);
        off += pv.size();
    }
    bool any_grad = false;
    for (const Tensor& p : parts) any_grad = any_grad || p.requires_grad();
    if (tape && any_grad) {
        out.set_requires_grad(true);
        tape->record({parts, out, [](const TapeNode& nd) {
            const auto gout = nd.output.grad();
            std::size_t off2 = 0;
            for (const Tensor& pc : nd.inputs) {
                Tensor p = pc;
                const std::size_t n = p.size();
                if (p.requires_grad()) {
                    auto g = p.grad_mut();
                    for (std::size_t i = 0; i < n; ++i) g[i] += gout[off2 + i];
                }
                off2 += n;
            }
        }});
    }
    return out;
}

Tensor concat_cols(Tape* tape, const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: empty input");
    const int rows = parts[0].rank() == 2 ? parts[0].dim(0) : -1;
    int cols = 0;
    for (const Tensor& p : parts) {
        require_rank2(p, "concat_cols");
        if (p.dim(0) != rows) {
            throw ShapeError("concat_cols: row mismatch: " + shape_str(parts[0].shape()) + " vs " +
                             shape_str(p.shape()));
        }
        cols += p.dim(1);
    }
    Tensor out({rows, cols});
    auto ov = out.values_mut();
    int col_off = 0;
    for (const Tensor& p : parts) {
        const auto pv = p.values();
        const int pc = p.dim(1);
        for (int r = 0; r < rows; ++r) {
            std::copy(pv.begin() + static_cast<std::size_t>(r) * pc,
                      pv.begin() + static_cast<std::size_t>(r + 1) * pc,
                      ov.begin() + static_cast<std::size_t>(r) * cols + col_off);
        }
        col_off += pc;
    }
    bool any_grad = false;
    for (const Tensor& p : parts) any_grad = any_grad || p.requires_grad();
    if (tape && any_grad) {
        out.set_requires_grad(true);
        tape->record({parts, out, [rows, cols](const TapeNode& nd) {
            const auto gout = nd.output.grad();
            int col_off2 = 0;
            for (const Tensor& pc : nd.inputs) {
                Tensor p = pc;
                const int pcols = p.dim(1);
                if (p.requires_grad()) {
                    auto g = p.grad_mut();
                    for (int r = 0; r < rows; ++r) {
                        const std::size_t src = static_cast<std::size_t>(r) * cols + col_off2;
                        const std::size_t dst = static_cast<std::size_t>(r) * pcols;
                        for (int c = 0; c < pcols; ++c) g[dst + c] += gout[src + c];
                    }
                }
                col_off2 += pcols;
            }
        }});
    }
    return out;
}

Tensor transpose(Tape* tape, const Tensor& x) {
    require_rank2(x, "transpose");
    const int rows = x.dim(0), cols = x.dim(1);
    Tensor out({cols, rows});
    const auto xv = x.values();
    auto ov = out.values_mut();
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            ov[static_cast<std::size_t>(c) * rows + r] = xv[static_cast<std::size_t>(r) * cols + c];
        }
    }
    if (tracing(tape, {&x})) {
        out.set_requires_grad(true);
        tape->record({{x}, out, [rows, cols](const TapeNode& nd) {
            const auto gout = nd.output.grad();
            Tensor t = nd.inputs[0];
            auto g = t.grad_mut();
            for (int r = 0; r < rows; ++r) {
                for (int c = 0; c < cols; ++c) {
                    g[static_cast<std::size_t>(r) * cols + c] +=
                        gout[static_cast<std::size_t>(c) * rows + r];
                }
            }
        }});
    }
    return out;
}

Tensor reshape(Tape* tape, const Tensor& x, std::vector<int> new_shape) {
    if (shape_numel(new_shape) != x.size()) {
        throw ShapeError("reshape: cannot reshape " + shape_str(x.shape()) + " to " +
                         shape_str(new_shape));
    }
    Tensor out(std::move(new_shape), std::vector<double>(x.values().begin(), x.values().end()));
    if (tracing(tape, {&x})) {
        out.set_requires_grad(true);
        tape->record({{x}, out, [](const TapeNode& nd) {
            const auto gout = nd.output.grad();
            Tensor t = nd.inputs[0];
            auto g = t.grad_mut();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i];
        }});
    }
    return out;
}

Tensor softmax(Tape* tape, const Tensor& x) {
    const int cols = last_dim(x);
    if (cols < 1) throw ShapeError("softmax: empty last axis in " + shape_str(x.shape()));
    const std::size_t rows = x.size() / cols;
    Tensor out(x.shape());
    const auto xv = x.values();
    auto ov = out.values_mut();
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t off = r * cols;
        double mx = xv[off];
        for (int c = 1; c < cols; ++c) mx = std::max(mx, xv[off + c]);
        double sum = 0.0;
        for (int c = 0; c < cols; ++c) {
            const double e = std::exp(xv[off + c] - mx);
            ov[off + c] = e;
            sum += e;
        }
        const double inv = 1.0 / sum;
        for (int c = 0; c < cols; ++c) ov[off + c] *= inv;
    }
    if (tracing(tape, {&x})) {
        out.set_requires_grad(true);
        tape->record({{x}, out, [rows, cols](const TapeNode& nd) {
            const auto gout = nd.output.grad();
            const auto y = nd.output.values();
            Tensor t = nd.inputs[0];
            auto g = t.grad_mut();
            for (std::size_t r = 0; r < rows; ++r) {
                const std::size_t off = r * cols;
                double dot = 0.0;
                for (int c = 0; c < cols; ++c) dot += gout[off + c] * y[off + c];
                for (int c = 0; c < cols; ++c) g[off + c] += y[off + c] * (gout[off + c] - dot);
            }
        }});
    }
    return out;
}

Tensor layer_norm(Tape* tape, const Tensor& x, const Tensor& gain, const Tensor& bias) {
    const int d = last_dim(x);
    if (d < 2) throw ContractError("layer_norm: last dimension must be >= 2");
    if (gain.rank() != 1 || gain.dim(0) != d || bias.rank() != 1 || bias.dim(0) != d) {
        throw ShapeError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " +
                         shape_str(bias.shape()) + " do not match " + shape_str(x.shape()));
    }
    const std::size_t rows = x.size() / d;
    Tensor out(x.shape());
    std::vector<double> xhat(x.size());
    std::vector<double> inv_std(rows);
    const auto xv = x.values();
    const auto gv = gain.values();
    const auto bv = bias.values();
    auto ov = out.values_mut();
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t off = r * d;
        double mean = 0.0;
        for (int c = 0; c < d; ++c) mean += xv[off + c];
        mean /= d;
        double var = 0.0;
        for (int c = 0; c < d; ++c) {
            const double e = xv[off + c] - mean;
            var += e * e;
        }
        var /= d;
        const double inv = 1.0 / std::sqrt(var + kLayerNormEpsilon);
        inv_std[r] = inv;
        for (int c = 0; c < d; ++c) {
            const double h = (xv[off + c] - mean) * inv;
            xhat[off + c] = h;
            ov[off + c] = h * gv[c] + bv[c];
        }
    }
    if (tracing(tape, {&x, &gain, &bias})) {
        out.set_requires_grad(true);
        tape->record({{x, gain, bias},
                      out,
                      [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](const TapeNode& nd) {
            const auto gout = nd.output.grad();
            Tensor tx = nd.inputs[0];
            Tensor tg = nd.inputs[1];
            Tensor tb = nd.inputs[2];
            const auto gv2 = tg.values();
            if (tg.requires_grad()) {
                auto gg = tg.grad_mut();
                for (std::size_t r = 0; r < rows; ++r) {
                    const std::size_t off = r * d;
                    for (int c = 0; c < d; ++c) gg[c] += gout[off + c] * xhat[off + c];
                }
            }
            if (tb.requires_grad()) {
                auto gb = tb.grad_mut();
                for (std::size_t r = 0; r < rows; ++r) {
                    const std::size_t off = r * d;
                    for (int c = 0; c < d; ++c) gb[c] += gout[off + c];
                }
            }
            if (tx.requires_grad()) {
                auto gx = tx.grad_mut();
                for (std::size_t r = 0; r < rows; ++r) {
                    const std::size_t off = r * d;
                    double mean_dh = 0.0, mean_dhh = 0.0;
                    for (int c = 0; c < d; ++c) {
                        const double dh = gout[off + c] * gv2[c];
                        mean_dh += dh;
                        mean_dhh += dh * xhat[off + c];
                    }
                    mean_dh /= d;
                    mean_dhh /= d;
                    for (int c = 0; c < d; ++c) {
                        const double dh = gout[off + c] * gv2[c];
                        gx[off + c] += inv_std[r] * (dh - mean_dh - xhat[off + c] * mean_dhh);
                    }
                }
            }
        }});
    }
    return out;
}

namespace {
constexpr double kGeluC0 = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluC1 = 0.044715;
}  // namespace

Tensor gelu(Tape* tape, const Tensor& x) {
    Tensor out(x.shape());
    const auto xv = x.values();
    auto ov = out.values_mut();
    for (std::size_t i = 0; i < ov.size(); ++i) {
        const double v = xv[i];
        const double t = std::tanh(kGeluC0 * (v + kGeluC1 * v * v * v));
        ov[i] = 0.5 * v * (1.0 + t);
    }
    if (tracing(tape, {&x})) {
        out.set_requires_grad(true);
        tape->record({{x}, out, [](const TapeNode& nd) {
            const auto gout = nd.output.grad();
            Tensor t = nd.inputs[0];
            const auto xv2 = t.values();
            auto g = t.grad_mut();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double v = xv2[i];
                const double th = std::tanh(kGeluC0 * (v + kGeluC1 * v * v * v));
                const double du = kGeluC0 * (1.0 + 3.0 * kGeluC1 * v * v);
                g[i] += gout[i] * (0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du);
            }
        }});
    }
    return out;
}

namespace {
double stable_sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}
}  // namespace

Tensor sigmoid(Tape* tape, const Tensor& x) {
    Tensor out(x.shape());
    const auto xv = x.values();
    auto ov = out.values_mut();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = stable_sigmoid(xv[i]);
    if (tracing(tape, {&x})) {
        out.set_requires_grad(true);
        tape->record({{x}, out, [](const TapeNode& nd) {
            const auto gout = nd.output.grad();
            const auto y = nd.output.values();
            Tensor t = nd.inputs[0];
            auto g = t.grad_mut();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i] * y[i] * (1.0 - y[i]);
        }});
    }
    return out;
}

Tensor dropout(Tape* tape, const Tensor& x, double p, bool training, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw ContractError("dropout: p must be in [0,1)");
    if (!training || p == 0.0) return x;
    const double keep = 1.0 - p;
    const double inv_keep = 1.0 / keep;
    std::vector<double> mask(x.size());
    for (auto& m : mask) m = rng.bernoulli(keep) ? inv_keep : 0.0;
    Tensor out(x.shape());
    const auto xv = x.values();
    auto ov = out.values_mut();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] * mask[i];
    if (tracing(tape, {&x})) {
        out.set_requires_grad(true);
        tape->record({{x}, out, [mask = std::move(mask)](const TapeNode& nd) {
            const auto gout = nd.output.grad();
            Tensor t = nd.inputs[0];
            auto g = t.grad_mut();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i] * mask[i];
        }});
    }
    return out;
}

Tensor sum_all(Tape* tape, const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    Tensor out = Tensor::scalar(s);
    if (tracing(tape, {&x})) {
        out.set_requires_grad(true);
        tape->record({{x}, out, [](const TapeNode& nd) {
            const double gout = nd.output.grad()[0];
            Tensor t = nd.inputs[0];
            auto g = t.grad_mut();
            for (auto& v : g) v += gout;
        }});
    }
    return out;
}

Tensor mean_all(Tape* tape, const Tensor& x) {
    if (x.size() == 0) throw ContractError("mean_all: empty tensor");
    double s = 0.0;
    for (double v : x.values()) s += v;
    const double inv_n = 1.0 / static_cast<double>(x.size());
    Tensor out = Tensor::scalar(s * inv_n);
    if (tracing(tape, {&x})) {
        out.set_requires_grad(true);
        tape->record({{x}, out, [inv_n](const TapeNode& nd) {
            const double gout = nd.output.grad()[0] * inv_n;
            Tensor t = nd.inputs[0];
            auto g = t.grad_mut();
            for (auto& v : g) v += gout;
        }});
    }
    return out;
}

Tensor bce_with_logits(Tape* tape, const Tensor& logits, const Tensor& targets) {
    require_same_shape(logits, targets, "bce_with_logits");
    if (logits.size() == 0) throw ContractError("bce_with_logits: empty input");
    const auto zv = logits.values();
    const auto tv = targets.values();
    double loss = 0.0;
    for (std::size_t i = 0; i < zv.size(); ++i) {
        const double z = zv[i];
        loss += std::max(z, 0.0) - z * tv[i] + std::log1p(std::exp(-std::abs(z)));
    }
    const double inv_n = 1.0 / static_cast<double>(zv.size());
    Tensor out = Tensor::scalar(loss * inv_n);
    if (tracing(tape, {&logits})) {
        out.set_requires_grad(true);
        tape->record({{logits, targets}, out, [inv_n](const TapeNode& nd) {
            const double gout = nd.output.grad()[0] * inv_n;
            Tensor tz = nd.inputs[0];
            const auto tv2 = nd.inputs[1].values();
            if (!tz.requires_grad()) return;
            const auto zv2 = tz.values();
            auto g = tz.grad_mut();
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += gout * (stable_sigmoid(zv2[i]) - tv2[i]);
            }
        }});
    }
    return out;
}

}  // namespace vit4lpa::num
