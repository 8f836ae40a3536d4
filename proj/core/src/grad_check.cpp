#include "vit4lpa/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "vit4lpa/error.hpp"

namespace vit4lpa::num {

namespace {

void require_eps(double eps) {
    if (eps < 1e-7 || eps > 1e-3) {
        throw ContractError("grad_check: eps must lie in [1e-7, 1e-3]");
    }
}

double eval_scalar(const GradFn& f) {
    const Tensor out = f(nullptr);
    if (out.size() != 1) throw ContractError("grad_check: function must return a scalar");
    const double v = out[0];
    if (!std::isfinite(v)) throw Error("grad_check: non-finite function value");
    return v;
}

// Analytic gradients for the tensors in `point`, via one taped pass.
std::vector<std::vector<double>> analytic_grads(const GradFn& f, std::vector<Tensor>& point) {
    for (auto& t : point) {
        t.set_requires_grad(true);
        t.ensure_grad();
        t.zero_grad();
    }
    Tape tape;
    Tensor loss = f(&tape);
    if (loss.size() != 1) throw ContractError("grad_check: function must return a scalar");
    if (!std::isfinite(loss[0])) throw Error("grad_check: non-finite function value");
    tape.backward(loss);
    std::vector<std::vector<double>> grads;
    grads.reserve(point.size());
    for (auto& t : point) {
        auto g = t.grad();
        grads.emplace_back(g.begin(), g.end());
    }
    return grads;
}

double check_coordinate(const GradFn& f, Tensor& t, std::size_t i, double analytic, double eps) {
    const double saved = t[i];
    t[i] = saved + eps;
    const double f_plus = eval_scalar(f);
    t[i] = saved - eps;
    const double f_minus = eval_scalar(f);
    t[i] = saved;
    const double fd = (f_plus - f_minus) / (2.0 * eps);
    return std::abs(analytic - fd) / std::max(1.0, std::abs(fd));
}

}  // namespace

double grad_check(const GradFn& f, std::vector<Tensor> point, double eps) {
    require_eps(eps);
    const auto grads = analytic_grads(f, point);
    double worst = 0.0;
    for (std::size_t p = 0; p < point.size(); ++p) {
        for (std::size_t i = 0; i < point[p].size(); ++i) {
            worst = std::max(worst, check_coordinate(f, point[p], i, grads[p][i], eps));
        }
    }
    return worst;
}

std::vector<GroupCheckResult> grad_check_sampled(const GradFn& f,
                                                 std::vector<NamedTensor>& params, double eps,
                                                 int coords_per_group, Rng& rng) {
    require_eps(eps);
    if (coords_per_group < 1) throw ContractError("grad_check_sampled: coords_per_group must be >= 1");

    std::vector<Tensor> point;
    point.reserve(params.size());
    for (auto& p : params) point.push_back(p.tensor);
    const auto grads = analytic_grads(f, point);

    std::vector<GroupCheckResult> results;
    results.reserve(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
        GroupCheckResult res;
        res.name = params[p].name;
        Tensor& t = point[p];
        const std::size_t n = t.size();
        std::vector<std::size_t> coords;
        if (n <= static_cast<std::size_t>(coords_per_group)) {
            for (std::size_t i = 0; i < n; ++i) coords.push_back(i);
        } else {
            for (int c = 0; c < coords_per_group; ++c) {
                coords.push_back(static_cast<std::size_t>(rng.uniform_int(static_cast<int>(n))));
            }
        }
        for (std::size_t i : coords) {
            res.max_rel_error =
                std::max(res.max_rel_error, check_coordinate(f, t, i, grads[p][i], eps));
            res.coords_checked += 1;
        }
        results.push_back(std::move(res));
    }
    return results;
}

}  // namespace vit4lpa::num
