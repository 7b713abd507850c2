#include "m2gan/module.hpp"

#include <cmath>

namespace m2gan {

std::vector<NamedParam> Module::named_parameters() const {
    std::vector<NamedParam> out;
    collect_params("", out);
    return out;
}

std::vector<Var> Module::parameters() const {
    std::vector<Var> out;
    for (auto& np : named_parameters()) out.push_back(np.var);
    return out;
}

std::vector<NamedBuffer> Module::named_buffers() {
    std::vector<NamedBuffer> out;
    collect_buffers("", out);
    return out;
}

std::int64_t Module::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& np : named_parameters()) n += np.var.value().size();
    return n;
}

void Module::zero_grad() {
    for (auto& np : named_parameters()) np.var.zero_grad();
}

Var Module::register_param(const std::string& name, Tensor init) {
    Var v = Var::leaf(std::move(init), true);
    params_.push_back({name, v});
    return v;
}

void Module::register_buffer(const std::string& name, Tensor* tensor) {
    buffers_.push_back({name, tensor});
}

void Module::register_module(const std::string& name, Module& child) {
    children_.emplace_back(name, &child);
}

void Module::collect_params(const std::string& prefix, std::vector<NamedParam>& out) const {
    for (const auto& p : params_) out.push_back({prefix.empty() ? p.name : prefix + "." + p.name, p.var});
    for (const auto& [name, child] : children_) {
        child->collect_params(prefix.empty() ? name : prefix + "." + name, out);
    }
}

void Module::collect_buffers(const std::string& prefix, std::vector<NamedBuffer>& out) {
    for (const auto& b : buffers_) out.push_back({prefix.empty() ? b.name : prefix + "." + b.name, b.tensor});
    for (const auto& [name, child] : children_) {
        child->collect_buffers(prefix.empty() ? name : prefix + "." + name, out);
    }
}

Tensor init_conv_weight(std::vector<int> shape, Rng& rng) {
    std::int64_t fan_in = 1;
    for (size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
    Tensor w(std::move(shape));
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    rng.fill_normal(w, 0.0, stddev);
    return w;
}

}  // namespace m2gan
