#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace rts {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array of doubles. Value semantics; copies are deep.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor scalar(double v) { return Tensor(Shape{1}, v); }

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const;
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    const std::vector<double>& storage() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // Indexed access for rank-2/3/4 tensors.
    double& at(int i, int j) { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }
    double at(int i, int j) const { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }
    double& at(int c, int i, int j) { return data_[offset3(c, i, j)]; }
    double at(int c, int i, int j) const { return data_[offset3(c, i, j)]; }
    double& at(int n, int c, int i, int j) { return data_[offset4(n, c, i, j)]; }
    double at(int n, int c, int i, int j) const { return data_[offset4(n, c, i, j)]; }

    double item() const;

    /// Same data, new shape. Element count must match.
    Tensor reshaped(Shape shape) const;
    void fill(double v);

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

private:
    std::size_t offset3(int c, int i, int j) const {
        return (static_cast<std::size_t>(c) * shape_[1] + i) * shape_[2] + j;
    }
    std::size_t offset4(int n, int c, int i, int j) const {
        return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + i) * shape_[3] + j;
    }

    Shape shape_;
    std::vector<double> data_;
};

// Raw tensor arithmetic used by kernels, backward passes and the optimizer.
void axpy(double a, const Tensor& x, Tensor& y);  // y += a * x
double dot(const Tensor& a, const Tensor& b);
double sum(const Tensor& a);
double squared_norm(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);

}  // namespace rts
