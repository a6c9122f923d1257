#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "dgar/errors.hpp"

namespace dgar {

enum class Dtype { f32, f64 };

inline const char* dtype_name(Dtype d) { return d == Dtype::f32 ? "f32" : "f64"; }

template <class S>
constexpr Dtype dtype_of() {
    static_assert(std::is_same_v<S, float> || std::is_same_v<S, double>);
    if constexpr (std::is_same_v<S, float>) return Dtype::f32;
    return Dtype::f64;
}

// Dense row-major real array. The universal value carrier for signals,
// features and parameters. Rank is dynamic; everything in this project is
// rank 0..3.
template <class S>
class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(std::vector<int64_t> shape, S fill = S(0))
        : shape_(std::move(shape)), data_(checked_numel(shape_), fill) {}

    static Tensor from(std::vector<int64_t> shape, std::vector<S> data) {
        Tensor t;
        t.shape_ = std::move(shape);
        if (checked_numel(t.shape_) != static_cast<int64_t>(data.size()))
            throw ShapeError("Tensor::from: data size " + std::to_string(data.size()) +
                             " does not match shape " + shape_string(t.shape_));
        t.data_ = std::move(data);
        return t;
    }

    static Tensor scalar(S v) { return from({1}, {v}); }

    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    const std::vector<int64_t>& shape() const { return shape_; }

    S* data() { return data_.data(); }
    const S* data() const { return data_.data(); }
    std::vector<S>& vec() { return data_; }
    const std::vector<S>& vec() const { return data_; }

    S& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    S operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // 2-D / 3-D strided access (row-major).
    S& at(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
    S at(int64_t i, int64_t j) const { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
    S& at(int64_t i, int64_t j, int64_t k) {
        return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
    }
    S at(int64_t i, int64_t j, int64_t k) const {
        return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool is_scalar() const { return numel() == 1; }
    S scalar_value() const {
        if (!is_scalar()) throw ShapeError("scalar_value on tensor of shape " + shape_str());
        return data_[0];
    }

    bool all_finite() const {
        for (S v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    void fill(S v) { std::fill(data_.begin(), data_.end(), v); }

    std::string shape_str() const { return shape_string(shape_); }

    static std::string shape_string(const std::vector<int64_t>& s) {
        std::ostringstream os;
        os << "[";
        for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
        os << "]";
        return os.str();
    }

    template <class T>
    Tensor<T> cast() const {
        Tensor<T> out;
        std::vector<T> d(data_.size());
        for (size_t i = 0; i < data_.size(); ++i) d[i] = static_cast<T>(data_[i]);
        return Tensor<T>::from(shape_, std::move(d));
    }

  private:
    static int64_t checked_numel(const std::vector<int64_t>& shape) {
        int64_t n = 1;
        for (int64_t e : shape) {
            if (e < 0) throw ShapeError("negative extent in shape " + shape_string(shape));
            n *= e;
        }
        return n;
    }

    std::vector<int64_t> shape_;
    std::vector<S> data_;
};

}  // namespace dgar
