#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vit4lpa/adam.hpp"
#include "vit4lpa/rng.hpp"
#include "vit4lpa/tape.hpp"
#include "vit4lpa/tensor.hpp"

namespace vit4lpa::num {

/// A scalar-valued function of the tensors it closes over. Called with a
/// tape for the analytic pass and with nullptr for finite-difference
/// evaluations, so it must be deterministic (no dropout).
using GradFn = std::function<Tensor(Tape*)>;

/// Central-difference verification of the reverse-mode gradient.
///
/// `point` must hold the same tensor handles `f` reads (perturbations are
/// applied in place). Sweeps every coordinate of every tensor and returns
///   max_i |analytic_i - central_difference_i| / max(1, |central_difference_i|).
/// eps must lie in [1e-7, 1e-3]. Throws Error on a non-finite function value.
double grad_check(const GradFn& f, std::vector<Tensor> point, double eps);

struct GroupCheckResult {
    std::string name;
    double max_rel_error = 0.0;
    int coords_checked = 0;
};

/// Sampled variant for model-sized parameter sets: checks
/// `coords_per_group` randomly chosen coordinates of every named group
/// (all coordinates when the group is at most that small). Same error
/// definition as grad_check.
std::vector<GroupCheckResult> grad_check_sampled(const GradFn& f,
                                                 std::vector<NamedTensor>& params, double eps,
                                                 int coords_per_group, Rng& rng);

}  // namespace vit4lpa::num
