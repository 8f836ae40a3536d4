#include "vit4lpa/tape.hpp"

#include "vit4lpa/error.hpp"

namespace vit4lpa::num {

void Tape::record(TapeNode node) {
    nodes_.push_back(std::move(node));
}

void Tape::backward(const Tensor& loss) {
    if (loss.size() != 1) {
        throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    }
    Tensor l = loss;
    l.grad_mut()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        // Nodes whose output never received a gradient are dead branches.
        if (!it->output.has_grad()) continue;
        it->backward(*it);
    }
}

void Tape::clear() {
    nodes_.clear();
}

}  // namespace vit4lpa::num
