#include "m2gan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace m2gan {

std::int64_t shape_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    if (shape_.empty()) throw ConfigError("Tensor: empty shape");
    for (int d : shape_) {
        if (d < 1) throw ConfigError(msg("Tensor: nonpositive dimension in shape ", shape_string()));
    }
    data_.assign(static_cast<size_t>(shape_numel(shape_)), 0.0);
}

Tensor Tensor::full(std::vector<int> shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

Tensor Tensor::scalar(double value) {
    Tensor t({1});
    t[0] = value;
    return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data) {
    Tensor t(std::move(shape));
    if (static_cast<std::int64_t>(data.size()) != t.size()) {
        throw ConfigError(msg("Tensor::from_data: ", data.size(), " values for shape ", t.shape_string()));
    }
    t.data_ = std::move(data);
    return t;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double Tensor::min_value() const {
    double m = std::numeric_limits<double>::infinity();
    for (double v : data_) m = std::min(m, v);
    return m;
}

double Tensor::max_value() const {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : data_) m = std::max(m, v);
    return m;
}

double Tensor::sum() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
}

void Tensor::add_scaled(const Tensor& other, double scale) {
    require_same_shape(*this, other, "Tensor::add_scaled");
    const double* o = other.data();
    for (size_t i = 0; i < data_.size(); ++i) data_[i] += scale * o[i];
}

void Tensor::scale(double factor) {
    for (double& v : data_) v *= factor;
}

std::string Tensor::shape_string() const {
    std::ostringstream os;
    os << '{';
    for (size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << 'x';
        os << shape_[i];
    }
    os << '}';
    return os.str();
}

}  // namespace m2gan
