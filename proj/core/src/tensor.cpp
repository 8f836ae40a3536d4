#include "vit4lpa/tensor.hpp"

#include <sstream>

#include "vit4lpa/error.hpp"

namespace vit4lpa::num {

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

Tensor::Tensor() : d_(std::make_shared<Data>()) {
    d_->shape = {0};
}

Tensor::Tensor(std::vector<int> shape) : d_(std::make_shared<Data>()) {
    d_->values.assign(shape_numel(shape), 0.0);
    d_->shape = std::move(shape);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values) : d_(std::make_shared<Data>()) {
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("shape " + shape_str(shape) + " does not match value count " +
                         std::to_string(values.size()));
    }
    d_->shape = std::move(shape);
    d_->values = std::move(values);
}

Tensor Tensor::scalar(double v) {
    return Tensor({1}, {v});
}

Tensor Tensor::zeros(std::vector<int> shape) {
    return Tensor(std::move(shape));
}

Tensor Tensor::full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    for (auto& x : t.d_->values) x = v;
    return t;
}

const std::vector<int>& Tensor::shape() const { return d_->shape; }
int Tensor::rank() const { return static_cast<int>(d_->shape.size()); }
int Tensor::dim(int i) const { return d_->shape.at(static_cast<std::size_t>(i)); }
std::size_t Tensor::size() const { return d_->values.size(); }

std::span<const double> Tensor::values() const { return d_->values; }
std::span<double> Tensor::values_mut() { return d_->values; }

double Tensor::operator[](std::size_t i) const { return d_->values[i]; }
double& Tensor::operator[](std::size_t i) { return d_->values[i]; }

double Tensor::at(int r, int c) const {
    return d_->values[static_cast<std::size_t>(r) * d_->shape.back() + c];
}
double& Tensor::at(int r, int c) {
    return d_->values[static_cast<std::size_t>(r) * d_->shape.back() + c];
}

double Tensor::item() const {
    if (size() != 1) throw ContractError("item() on tensor of size " + std::to_string(size()));
    return d_->values[0];
}

bool Tensor::requires_grad() const { return d_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool v) {
    d_->requires_grad = v;
    return *this;
}

bool Tensor::has_grad() const { return d_->grad_present; }

std::span<const double> Tensor::grad() const {
    if (!d_->grad_present) throw ContractError("gradient not present; run backward first");
    return d_->grad;
}

std::span<double> Tensor::grad_mut() {
    ensure_grad();
    return d_->grad;
}

void Tensor::ensure_grad() {
    if (!d_->grad_present) {
        d_->grad.assign(d_->values.size(), 0.0);
        d_->grad_present = true;
    }
}

void Tensor::zero_grad() {
    if (d_->grad_present) {
        for (auto& g : d_->grad) g = 0.0;
    }
}

void Tensor::drop_grad() {
    d_->grad.clear();
    d_->grad_present = false;
}

Tensor Tensor::clone() const {
    Tensor t(d_->shape, d_->values);
    t.d_->requires_grad = d_->requires_grad;
    if (d_->grad_present) {
        t.d_->grad = d_->grad;
        t.d_->grad_present = true;
    }
    return t;
}

const void* Tensor::data_ptr() const { return d_.get(); }

}  // namespace vit4lpa::num
