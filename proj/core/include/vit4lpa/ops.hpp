#pragma once

#include <vector>

#include "vit4lpa/rng.hpp"
#include "vit4lpa/tape.hpp"
#include "vit4lpa/tensor.hpp"

namespace vit4lpa::num {

// Differentiable dense ops. Every function takes an optional tape; pass
// nullptr for pure evaluation (no recording). Shapes are checked on every
// call and silent broadcasting is disallowed -- the only implicit expansion
// is the explicitly named add_row_vector.

// [m,k] x [k,n] -> [m,n]
Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b);

// Elementwise; shapes must match exactly.
Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);

Tensor scale(Tape* tape, const Tensor& a, double c);

// [r,c] + [c], the vector added to every row.
Tensor add_row_vector(Tape* tape, const Tensor& m, const Tensor& v);

// Row lookup: out[i] = table[indices[i]]. Backward scatter-adds.
Tensor gather_rows(Tape* tape, const Tensor& table, const std::vector<int>& indices);

Tensor slice_rows(Tape* tape, const Tensor& x, int row_begin, int row_end);
Tensor slice_cols(Tape* tape, const Tensor& x, int col_begin, int col_end);
Tensor concat_rows(Tape* tape, const std::vector<Tensor>& parts);
Tensor concat_cols(Tape* tape, const std::vector<Tensor>& parts);

Tensor transpose(Tape* tape, const Tensor& x);  // rank 2

Tensor reshape(Tape* tape, const Tensor& x, std::vector<int> new_shape);

// Softmax over the last axis, computed with max subtraction. Rows of the
// output are nonnegative and sum to 1.
Tensor softmax(Tape* tape, const Tensor& x);

// Per-row standardization over the last axis (epsilon 1e-5), then elementwise
// gain and bias. gain and bias have length D = last dimension, D >= 2.
Tensor layer_norm(Tape* tape, const Tensor& x, const Tensor& gain, const Tensor& bias);
inline constexpr double kLayerNormEpsilon = 1e-5;

// Tanh-approximation GELU, elementwise. Constants fixed so checkpoint and
// golden-file values are stable.
Tensor gelu(Tape* tape, const Tensor& x);

Tensor sigmoid(Tape* tape, const Tensor& x);

// Inverted dropout: keep with probability 1-p, scale kept values by 1/(1-p).
// Identity (and no rng draw) when training is false or p == 0.
Tensor dropout(Tape* tape, const Tensor& x, double p, bool training, Rng& rng);

Tensor sum_all(Tape* tape, const Tensor& x);   // -> scalar
Tensor mean_all(Tape* tape, const Tensor& x);  // -> scalar

// Numerically stable mean binary cross-entropy on raw logits.
// targets hold 0/1 values and receive no gradient.
Tensor bce_with_logits(Tape* tape, const Tensor& logits, const Tensor& targets);

// Raw (never-recorded) matmul helper used by backward rules:
// out(+)= op_a(a) * op_b(b) with optional transposes.
void matmul_raw(const double* a, int ar, int ac, bool ta,
                const double* b, int br, int bc, bool tb,
                double* out, bool accumulate);

}  // namespace vit4lpa::num
