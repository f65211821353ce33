#include "rts/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "rts/errors.hpp"

namespace rts {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw ConfigError("negative dimension in shape " + shape_str(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_))
        throw ConfigError("tensor data size " + std::to_string(data_.size()) + " does not match shape " +
                          shape_str(shape_));
}

int Tensor::dim(int i) const {
    if (i < 0) i += rank();
    if (i < 0 || i >= rank()) throw ConfigError("dimension index out of range for " + shape_str(shape_));
    return shape_[i];
}

double Tensor::item() const {
    if (data_.size() != 1) throw ConfigError("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size())
        throw ConfigError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void axpy(double a, const Tensor& x, Tensor& y) {
    if (x.size() != y.size()) throw ConfigError("axpy size mismatch");
    const double* xs = x.data();
    double* ys = y.data();
    for (std::size_t i = 0; i < x.size(); ++i) ys[i] += a * xs[i];
}

double dot(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size()) throw ConfigError("dot size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double sum(const Tensor& a) { return std::accumulate(a.storage().begin(), a.storage().end(), 0.0); }

double squared_norm(const Tensor& a) { return dot(a, a); }

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size()) throw ConfigError("max_abs_diff size mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

Tensor operator+(const Tensor& a, const Tensor& b) {
    Tensor out = a;
    axpy(1.0, b, out);
    return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
    Tensor out = a;
    axpy(-1.0, b, out);
    return out;
}

Tensor operator*(double s, const Tensor& a) {
    Tensor out = a;
    for (double& v : out.values()) v *= s;
    return out;
}

}  // namespace rts
