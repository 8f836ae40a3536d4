#pragma once

#include <functional>
#include <vector>

#include "vit4lpa/tensor.hpp"

namespace vit4lpa::num {

/// Recording of one differentiable operation: the tensors it read, the
/// tensor it produced, and a rule that moves the output gradient onto the
/// input gradients.
struct TapeNode {
    std::vector<Tensor> inputs;
    Tensor output;
    // Reads output.grad(), accumulates into the inputs' grads.
    std::function<void(const TapeNode&)> backward;
};

/// Ordered operation record for one forward pass. Nodes are appended in
/// execution order, so every node's inputs were recorded (or are leaves)
/// before the node itself; backward() replays them in exact reverse order.
class Tape {
 public:
    void record(TapeNode node);

    /// Reverse sweep from a scalar loss. Seeds d(loss)/d(loss)=1 and runs
    /// every node's rule, newest first. Gradients accumulate (sum) across
    /// fan-out. Throws ContractError if loss is not scalar.
    void backward(const Tensor& loss);

    std::size_t node_count() const { return nodes_.size(); }
    void clear();

 private:
    std::vector<TapeNode> nodes_;
};

/// True when an op with these inputs must be recorded: some input wants a
/// gradient and a tape is present.
inline bool tracing(const Tape* tape, std::initializer_list<const Tensor*> inputs) {
    if (!tape) return false;
    for (const Tensor* t : inputs) {
        if (t->requires_grad()) return true;
    }
    return false;
}

}  // namespace vit4lpa::num
