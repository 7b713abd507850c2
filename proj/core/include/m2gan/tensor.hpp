#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "m2gan/common.hpp"

namespace m2gan {

// Dense row-major tensor of doubles. Feature maps are stored as {H, W, C},
// conv kernels as {OC, KH, KW, IC}, vectors as {N}, scalars as {1}.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::initializer_list<int> shape) : Tensor(std::vector<int>(shape)) {}

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, double value);
    static Tensor scalar(double value);
    static Tensor from_data(std::vector<int> shape, std::vector<double> data);

    bool empty() const { return data_.empty(); }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    const std::vector<int>& shape() const { return shape_; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

    double& operator[](std::int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // {H, W, C} accessors for feature maps and images.
    int height() const { return dim(0); }
    int width() const { return dim(1); }
    int channels() const { return rank() >= 3 ? dim(2) : 1; }
    double& at(int h, int w, int c) {
        return data_[static_cast<size_t>((static_cast<std::int64_t>(h) * dim(1) + w) * dim(2) + c)];
    }
    double at(int h, int w, int c) const {
        return data_[static_cast<size_t>((static_cast<std::int64_t>(h) * dim(1) + w) * dim(2) + c)];
    }

    // {R, C} accessors for rank-2 matrices.
    double& at(int r, int c) {
        return data_[static_cast<size_t>(static_cast<std::int64_t>(r) * dim(1) + c)];
    }
    double at(int r, int c) const {
        return data_[static_cast<size_t>(static_cast<std::int64_t>(r) * dim(1) + c)];
    }

    void fill(double value);
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    double min_value() const;
    double max_value() const;
    double sum() const;
    double mean() const { return size() > 0 ? sum() / static_cast<double>(size()) : 0.0; }

    // Elementwise in-place helpers used by optimizers.
    void add_scaled(const Tensor& other, double scale);
    void scale(double factor);

    std::string shape_string() const;

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

std::int64_t shape_numel(const std::vector<int>& shape);

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (!a.same_shape(b)) {
        throw PreconditionError(msg(where, ": shape mismatch ", a.shape_string(), " vs ", b.shape_string()));
    }
}

}  // namespace m2gan
