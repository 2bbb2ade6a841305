#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "collab/error.hpp"

namespace collab {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

// Dense row-major tensor of doubles, rank <= 4. All model compute runs in
// 64-bit; 32-bit enters only at the simulated wire boundary.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        if (shape_.empty() || shape_.size() > 4)
            throw DimensionError("tensor rank must be 1..4, got rank " + std::to_string(shape_.size()));
        std::size_t n = 1;
        for (std::size_t e : shape_) {
            if (e == 0) throw DimensionError("tensor extent must be positive");
            n *= e;
        }
        data_.assign(n, 0.0);
    }

    Tensor(Shape shape, std::vector<double> values) : Tensor(std::move(shape)) {
        if (values.size() != data_.size())
            throw DimensionError("tensor data length " + std::to_string(values.size()) +
                                 " does not match shape " + shape_str(shape_));
        data_ = std::move(values);
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, double v) {
        Tensor t(std::move(shape));
        for (double& x : t.data_) x = v;
        return t;
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    const Shape& shape() const { return shape_; }
    std::size_t extent(std::size_t d) const { return shape_.at(d); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t i) { return data_[i]; }
    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double& at(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double at(std::size_t i) const { return data_[i]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) {
        for (double& x : data_) x = v;
    }

    Tensor& operator+=(const Tensor& o) {
        require_same_shape(o, "operator+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    void require_same_shape(const Tensor& o, const char* ctx) const {
        if (!same_shape(o))
            throw DimensionError(std::string(ctx) + ": shape " + shape_str(shape_) +
                                 " vs " + shape_str(o.shape_));
    }

    bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

private:
    Shape shape_;
    std::vector<double> data_;
};

// Per-cell class labels for a view, values in [0, C).
struct LabelGrid {
    std::size_t h = 0, w = 0;
    std::vector<std::uint8_t> v;

    LabelGrid() = default;
    LabelGrid(std::size_t h_, std::size_t w_) : h(h_), w(w_), v(h_ * w_, 0) {}

    std::uint8_t& at(std::size_t i, std::size_t j) { return v[i * w + j]; }
    std::uint8_t at(std::size_t i, std::size_t j) const { return v[i * w + j]; }
    std::size_t size() const { return v.size(); }

    bool operator==(const LabelGrid& o) const { return h == o.h && w == o.w && v == o.v; }
};

// Shared numeric kernels. Both the autodiff ops and the pure protocol-side
// functions call these, so scores computed on either path agree bit-for-bit.
namespace kernels {

inline double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

// y[r] = W[r x c] * v[c]
inline void matvec(const double* w, const double* v, double* y, std::size_t r, std::size_t c) {
    for (std::size_t i = 0; i < r; ++i) y[i] = dot(w + i * c, v, c);
}

}  // namespace kernels

}  // namespace collab
