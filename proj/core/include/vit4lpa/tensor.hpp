#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace vit4lpa::num {

std::string shape_str(const std::vector<int>& shape);
std::size_t shape_numel(const std::vector<int>& shape);

/// Dense row-major tensor of 64-bit floats.
///
/// A Tensor is a handle: copies share one storage block (values, gradient,
/// requires_grad flag), which is what lets the tape reference operation
/// inputs and outputs cheaply and lets backward() accumulate into the
/// original parameter. Use clone() for an independent deep copy.
class Tensor {
 public:
    Tensor();  // empty scalar-less tensor, size 0
    explicit Tensor(std::vector<int> shape);  // zero-filled
    Tensor(std::vector<int> shape, std::vector<double> values);

    static Tensor scalar(double v);
    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double v);

    const std::vector<int>& shape() const;
    int rank() const;
    int dim(int i) const;
    std::size_t size() const;

    std::span<const double> values() const;
    std::span<double> values_mut();

    double operator[](std::size_t i) const;
    double& operator[](std::size_t i);
    // 2-D convenience accessors (row, col); unchecked beyond rank.
    double at(int r, int c) const;
    double& at(int r, int c);

    double item() const;  // requires size()==1

    bool requires_grad() const;
    Tensor& set_requires_grad(bool v);

    bool has_grad() const;
    std::span<const double> grad() const;       // throws if absent
    std::span<double> grad_mut();                // allocates zeros if absent
    void ensure_grad();
    void zero_grad();
    void drop_grad();

    Tensor clone() const;

    // Storage identity; two handles to the same data compare equal.
    const void* data_ptr() const;

 private:
    struct Data {
        std::vector<int> shape;
        std::vector<double> values;
        std::vector<double> grad;  // empty until needed
        bool requires_grad = false;
        bool grad_present = false;
    };
    std::shared_ptr<Data> d_;
};

}  // namespace vit4lpa::num
