#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace dnf {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& dims) {
    std::size_t n = 1;
    for (std::size_t d : dims) n *= d;
    return n;
}

// Dense row-major tensor. All in-memory arithmetic runs in 64-bit floats;
// persisted tensors are narrowed to 32-bit by the container codec.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape dims)
        : dims_(std::move(dims)), data_(shape_numel(dims_), 0.0) {}

    Tensor(Shape dims, std::vector<double> values)
        : dims_(std::move(dims)), data_(std::move(values)) {
        if (data_.size() != shape_numel(dims_))
            throw std::invalid_argument("tensor: value count does not match shape");
    }

    static Tensor full(Shape dims, double value) {
        Tensor t(std::move(dims));
        for (double& v : t.data_) v = value;
        return t;
    }

    static Tensor scalar(double value) { return Tensor({}, {value}); }

    const Shape& shape() const { return dims_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    // 2-D accessors for image-shaped tensors {H, W}.
    std::size_t rows() const { return dims_.size() == 2 ? dims_[0] : 0; }
    std::size_t cols() const { return dims_.size() == 2 ? dims_[1] : 0; }
    double& at(std::size_t r, std::size_t c) { return data_[r * dims_[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * dims_[1] + c]; }

    bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }

    Tensor& operator+=(const Tensor& o) {
        require_same_shape(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    Tensor& operator-=(const Tensor& o) {
        require_same_shape(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }

    Tensor& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    // Rounds every element to its nearest 32-bit float value. Fused features
    // pass through this so cached (f32) and in-memory features agree bitwise.
    Tensor& narrow_to_f32() {
        for (double& v : data_) v = static_cast<double>(static_cast<float>(v));
        return *this;
    }

private:
    void require_same_shape(const Tensor& o) const {
        if (dims_ != o.dims_)
            throw std::invalid_argument("tensor: shape mismatch");
    }

    Shape dims_;
    std::vector<double> data_;
};

inline Tensor operator+(Tensor a, const Tensor& b) { a += b; return a; }
inline Tensor operator-(Tensor a, const Tensor& b) { a -= b; return a; }
inline Tensor operator*(Tensor a, double s) { a *= s; return a; }
inline Tensor operator*(double s, Tensor a) { a *= s; return a; }

}  // namespace dnf
