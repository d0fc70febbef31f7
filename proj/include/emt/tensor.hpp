#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace emt {

// Dense row-major tensor of 64-bit floats. Values are validated to be finite
// at construction; every operation downstream may assume finiteness.
class Tensor {
public:
    Tensor() = default;

    Tensor(std::vector<size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        size_t n = 1;
        for (size_t d : shape_) {
            if (d == 0) throw std::invalid_argument("Tensor: zero dimension in shape");
            n *= d;
        }
        if (n != data_.size())
            throw std::invalid_argument("Tensor: shape product " + std::to_string(n) +
                                        " != data length " + std::to_string(data_.size()));
        for (double v : data_)
            if (!std::isfinite(v)) throw std::invalid_argument("Tensor: non-finite value");
    }

    static Tensor zeros(std::vector<size_t> shape) {
        size_t n = 1;
        for (size_t d : shape) n *= d;
        return Tensor(std::move(shape), std::vector<double>(n, 0.0));
    }

    static Tensor full(std::vector<size_t> shape, double v) {
        size_t n = 1;
        for (size_t d : shape) n *= d;
        return Tensor(std::move(shape), std::vector<double>(n, v));
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    const std::vector<size_t>& shape() const { return shape_; }
    size_t ndim() const { return shape_.size(); }
    size_t dim(size_t i) const { return shape_.at(i); }
    size_t size() const { return data_.size(); }

    std::span<const double> data() const { return data_; }
    double at(size_t i) const { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    // Raw write access, used by the autograd engine and the optimizer. Shared
    // tensors must not be mutated; ownership stays with a single pass/thread.
    double* mut_data() { return data_.data(); }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape_[i]);
        }
        return s + "]";
    }

private:
    std::vector<size_t> shape_;
    std::vector<double> data_;
};

namespace detail {

// C[M,N] += A[M,K] * B[K,N]
inline void matmul_nn(double* c, const double* a, const double* b, size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[M,N] += A[M,K] * B[N,K]^T   (i.e. C[i][j] += dot(A[i,:], B[j,:]))
inline void matmul_nt(double* c, const double* a, const double* b, size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

// C[K,N] += A[M,K]^T * B[M,N]
inline void matmul_tn(double* c, const double* a, const double* b, size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            double* crow = c + p * n;
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace detail

}  // namespace emt
