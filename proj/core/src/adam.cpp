#include "vit4lpa/adam.hpp"

#include <cmath>

#include "vit4lpa/error.hpp"

namespace vit4lpa::num {

AdamState::AdamState(AdamConfig config) : cfg_(config) {
    if (cfg_.learning_rate <= 0.0) throw ContractError("adam: learning_rate must be > 0");
    if (cfg_.beta1 < 0.0 || cfg_.beta1 >= 1.0 || cfg_.beta2 < 0.0 || cfg_.beta2 >= 1.0) {
        throw ContractError("adam: betas must lie in [0,1)");
    }
}

void AdamState::set_learning_rate(double lr) {
    if (lr <= 0.0) throw ContractError("adam: learning_rate must be > 0");
    cfg_.learning_rate = lr;
}

std::span<const double> AdamState::first_moment(const std::string& name) const {
    auto it = moments_.find(name);
    if (it == moments_.end()) return {};
    return it->second.m;
}

std::span<const double> AdamState::second_moment(const std::string& name) const {
    auto it = moments_.find(name);
    if (it == moments_.end()) return {};
    return it->second.v;
}

void adam_step(std::vector<NamedTensor>& params, AdamState& state) {
    // Validate every gradient before touching any parameter so a NaN aborts
    // the update atomically.
    for (const auto& p : params) {
        if (!p.tensor.has_grad()) continue;
        for (double g : p.tensor.grad()) {
            if (std::isnan(g)) {
                throw Error("adam_step: NaN gradient in parameter '" + p.name + "'; update aborted");
            }
        }
    }

    const auto& cfg = state.cfg_;
    state.step_count_ += 1;
    const double t = static_cast<double>(state.step_count_);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);

    for (auto& p : params) {
        auto& mom = state.moments_[p.name];
        if (mom.m.empty()) {
            mom.m.assign(p.tensor.size(), 0.0);
            mom.v.assign(p.tensor.size(), 0.0);
        } else if (mom.m.size() != p.tensor.size()) {
            throw ShapeError("adam_step: moment size " + std::to_string(mom.m.size()) +
                             " does not match parameter '" + p.name + "' of size " +
                             std::to_string(p.tensor.size()));
        }
        auto values = p.tensor.values_mut();
        const bool has_grad = p.tensor.has_grad();
        std::span<const double> grad;
        if (has_grad) grad = p.tensor.grad();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double g = has_grad ? grad[i] : 0.0;
            mom.m[i] = cfg.beta1 * mom.m[i] + (1.0 - cfg.beta1) * g;
            mom.v[i] = cfg.beta2 * mom.v[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = mom.m[i] / bc1;
            const double vhat = mom.v[i] / bc2;
            values[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
        }
    }
}

}  // namespace vit4lpa::num
