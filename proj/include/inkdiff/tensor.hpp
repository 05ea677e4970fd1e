#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "inkdiff/errors.hpp"

namespace inkdiff {

// Dense row-major tensor, rank 1..3. Small and deliberately dumb: the
// heavy lifting (GEMM) goes through Eigen maps over data().
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        check_shape();
        d_.assign(static_cast<size_t>(numel_of(shape_)), T(0));
    }

    Tensor(std::vector<int> shape, std::vector<T> data)
        : shape_(std::move(shape)), d_(std::move(data)) {
        check_shape();
        if (d_.size() != static_cast<size_t>(numel_of(shape_)))
            throw DataError("tensor data size does not match shape");
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, T v) {
        Tensor t(std::move(shape));
        std::fill(t.d_.begin(), t.d_.end(), v);
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(d_.size()); }
    bool empty() const { return d_.empty(); }

    T* data() { return d_.data(); }
    const T* data() const { return d_.data(); }
    std::vector<T>& vec() { return d_; }
    const std::vector<T>& vec() const { return d_; }

    T& operator[](int64_t i) { return d_[static_cast<size_t>(i)]; }
    T operator[](int64_t i) const { return d_[static_cast<size_t>(i)]; }

    // 2-D access: (row, col)
    T& operator()(int r, int c) { return d_[static_cast<size_t>(r) * shape_[1] + c]; }
    T operator()(int r, int c) const { return d_[static_cast<size_t>(r) * shape_[1] + c]; }

    // 3-D access: (i, j, k)
    T& operator()(int i, int j, int k) {
        return d_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
    }
    T operator()(int i, int j, int k) const {
        return d_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
    }

    int rows() const { return shape_[0]; }
    int cols() const { return shape_[1]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (T v : d_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    void fill(T v) { std::fill(d_.begin(), d_.end(), v); }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(d_.size());
        for (size_t i = 0; i < d_.size(); ++i) out[i] = static_cast<U>(d_[i]);
        return Tensor<U>(shape_, std::move(out));
    }

    static int64_t numel_of(const std::vector<int>& shape) {
        int64_t n = 1;
        for (int s : shape) n *= s;
        return n;
    }

    static std::string shape_str(const std::vector<int>& shape) {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }

private:
    void check_shape() const {
        if (shape_.empty() || shape_.size() > 3)
            throw DataError("tensor rank must be 1..3");
        for (int s : shape_)
            if (s < 0) throw DataError("negative tensor dimension");
    }

    std::vector<int> shape_;
    std::vector<T> d_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace inkdiff
