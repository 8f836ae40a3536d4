#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "vit4lpa/tensor.hpp"

namespace vit4lpa::num {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double learning_rate = 1e-3;
};

/// Per-parameter Adam moments plus the shared step counter. One state drives
/// one parameter group; groups with different learning rates get their own
/// state instance.
class AdamState {
 public:
    explicit AdamState(AdamConfig config = {});

    const AdamConfig& config() const { return cfg_; }
    void set_learning_rate(double lr);
    long step_count() const { return step_count_; }

    /// First/second moment for a parameter, empty spans until first step.
    std::span<const double> first_moment(const std::string& name) const;
    std::span<const double> second_moment(const std::string& name) const;

    friend void adam_step(std::vector<NamedTensor>& params, AdamState& state);

 private:
    struct Moments {
        std::vector<double> m;
        std::vector<double> v;
    };
    AdamConfig cfg_;
    long step_count_ = 0;
    std::unordered_map<std::string, Moments> moments_;
};

/// One bias-corrected Adam update over every parameter, reading each
/// tensor's accumulated gradient (a missing gradient buffer counts as zero).
/// Any NaN gradient aborts the whole update, before any parameter moves,
/// with a diagnostic naming the offending parameter.
void adam_step(std::vector<NamedTensor>& params, AdamState& state);

}  // namespace vit4lpa::num
