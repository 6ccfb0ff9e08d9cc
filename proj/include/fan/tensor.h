#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fan/error.h"

namespace fan {

// Dense row-major tensor. T is float for training, double for
// verification-precision gradient checks.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> dims)
        : dims_(std::move(dims)), data_(checked_numel(dims_), T(0)) {}

    Tensor(std::vector<std::size_t> dims, std::vector<T> data)
        : dims_(std::move(dims)), data_(std::move(data)) {
        if (checked_numel(dims_) != data_.size()) {
            throw contract_error("tensor data length does not match dims");
        }
    }

    static Tensor scalar(T value) { return Tensor({1}, {value}); }

    const std::vector<std::size_t>& dims() const { return dims_; }
    std::size_t rank() const { return dims_.size(); }
    std::size_t numel() const { return data_.size(); }
    bool is_scalar() const { return data_.size() == 1; }

    std::size_t dim(std::size_t i) const { return dims_.at(i); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    T operator[](std::size_t i) const { return data_[i]; }

    T& at2(std::size_t r, std::size_t c) { return data_[r * dims_[1] + c]; }
    T at2(std::size_t r, std::size_t c) const { return data_[r * dims_[1] + c]; }

    T& at4(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
        return data_[((n * dims_[1] + c) * dims_[2] + y) * dims_[3] + x];
    }
    T at4(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
        return data_[((n * dims_[1] + c) * dims_[2] + y) * dims_[3] + x];
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    bool same_dims(const Tensor& other) const { return dims_ == other.dims_; }

    bool all_finite() const {
        for (const T v : data_) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return Tensor<U>(dims_, std::move(out));
    }

    std::string shape_string() const {
        std::ostringstream os;
        os << "[";
        for (std::size_t i = 0; i < dims_.size(); ++i) {
            if (i) os << "x";
            os << dims_[i];
        }
        os << "]";
        return os.str();
    }

private:
    static std::size_t checked_numel(const std::vector<std::size_t>& dims) {
        if (dims.empty()) {
            throw contract_error("tensor rank must be >= 1");
        }
        std::size_t n = 1;
        for (const std::size_t d : dims) {
            if (d == 0) {
                throw contract_error("tensor extents must be positive");
            }
            n *= d;
        }
        return n;
    }

    std::vector<std::size_t> dims_;
    std::vector<T> data_;
};

template <typename T>
void require_same_dims(const Tensor<T>& a, const Tensor<T>& b, const char* where) {
    if (!a.same_dims(b)) {
        throw contract_error(std::string(where) + ": dim mismatch " + a.shape_string() +
                             " vs " + b.shape_string());
    }
}

template <typename T>
void require_finite(const Tensor<T>& t, const std::string& where) {
    if (!t.all_finite()) {
        throw numeric_error(where + ": non-finite values in tensor " + t.shape_string());
    }
}

}  // namespace fan
