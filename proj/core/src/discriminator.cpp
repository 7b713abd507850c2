#include "m2gan/discriminator.hpp"

#include <cmath>

#include "m2gan/common.hpp"

namespace m2gan {

void DiscriminatorConfig::validate() const {
    if (in_channels < 1) {
        throw ConfigError(msg("discriminator: in_channels ", in_channels, " must be >= 1"));
    }
    if (base_channels < 1) {
        throw ConfigError(msg("discriminator: base_channels ", base_channels, " must be >= 1"));
    }
    if (num_blocks < 1) {
        throw ConfigError(msg("discriminator: num_blocks ", num_blocks, " must be >= 1"));
    }
    rdb.validate();
}

Discriminator::Discriminator(const DiscriminatorConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    cfg_.rdb.spectral_norm = true;

    Conv2dOptions sn_opts;
    sn_opts.spectral_norm = true;
    entry_ = std::make_unique<Conv2d>(cfg_.in_channels, cfg_.base_channels, 3, sn_opts, rng);
    register_module("entry", *entry_);

    int ch = cfg_.base_channels;
    for (int i = 0; i < cfg_.num_blocks; ++i) {
        blocks_.push_back(std::make_unique<ResidualDenseBlock>(ch, cfg_.rdb, rng));
        register_module(msg("rdb", i), *blocks_.back());
        Conv2dOptions down = sn_opts;
        down.stride = 2;
        transitions_.push_back(std::make_unique<Conv2d>(ch, 2 * ch, 3, down, rng));
        register_module(msg("down", i), *transitions_.back());
        ch *= 2;
    }
    head_ = std::make_unique<Linear>(ch, 1, /*spectral_norm=*/true, rng);
    register_module("head", *head_);
}

Var Discriminator::logit(const Var& x) {
    if (x.value().rank() != 3 || x.value().dim(2) != cfg_.in_channels) {
        throw ConfigError(msg("discriminator: expected {H,W,", cfg_.in_channels, "}, got ",
                              x.value().shape_string()));
    }
    Var f = leaky_relu(entry_->forward(x), kLeakySlope);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        f = blocks_[i]->forward(f);
        f = leaky_relu(transitions_[i]->forward(f), kLeakySlope);
    }
    Var pooled = global_avg_pool(f);
    Var out = head_->forward(pooled);
    if (!out.value().all_finite()) {
        throw NumericError("discriminator: non-finite logit");
    }
    return out;
}

std::vector<Var> Discriminator::logits(const std::vector<Var>& batch) {
    if (batch.empty()) {
        throw PreconditionError("discriminator: batch must be nonempty");
    }
    refresh_spectral_weights();
    std::vector<Var> out;
    out.reserve(batch.size());
    for (const Var& x : batch) out.push_back(logit(x));
    return out;
}

std::vector<double> Discriminator::logit_values(const std::vector<Tensor>& batch) {
    std::vector<Var> vars;
    vars.reserve(batch.size());
    for (const Tensor& t : batch) vars.push_back(Var::leaf(t));
    std::vector<Var> ls = logits(vars);
    std::vector<double> out;
    out.reserve(ls.size());
    for (const Var& l : ls) out.push_back(l.value().raw()[0]);
    return out;
}

void Discriminator::refresh_spectral_weights() {
    for_each_conv([](Conv2d& c) { c.refresh_effective_weight(); });
    head_->refresh_effective_weight();
}

void Discriminator::set_sn_policy(int iterations, bool persist_u) {
    for_each_conv([&](Conv2d& c) { c.set_sn_policy(iterations, persist_u); });
    head_->set_sn_policy(iterations, persist_u);
}

void Discriminator::for_each_conv(const std::function<void(Conv2d&)>& fn) {
    fn(*entry_);
    for (auto& b : blocks_) b->for_each_conv(fn);
    for (auto& t : transitions_) fn(*t);
}

double relativistic_prob(double logit_a, double mean_logit_b) {
    if (!std::isfinite(logit_a) || !std::isfinite(mean_logit_b)) {
        throw PreconditionError(msg("relativistic_prob: non-finite inputs ", logit_a, ", ", mean_logit_b));
    }
    double d = logit_a - mean_logit_b;
    if (d >= 0.0) {
        return 1.0 / (1.0 + std::exp(-d));
    }
    double e = std::exp(d);
    return e / (1.0 + e);
}

}  // namespace m2gan
