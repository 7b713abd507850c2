#include "m2gan/optim.hpp"

#include <cmath>

#include "m2gan/common.hpp"

namespace m2gan {

void AdamConfig::validate() const {
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError(msg("adam: betas (", beta1, ", ", beta2, ") must lie in [0,1)"));
    }
    if (!(eps > 0.0)) throw ConfigError(msg("adam: eps ", eps, " must be positive"));
    if (weight_decay < 0.0) throw ConfigError(msg("adam: weight decay ", weight_decay, " must be >= 0"));
}

Adam::Adam(const std::vector<NamedParam>& params, const AdamConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    slots_.reserve(params.size());
    for (const auto& p : params) {
        if (!p.var.defined()) throw PreconditionError(msg("adam: parameter '", p.name, "' is undefined"));
        slots_.push_back(Slot{p.name, p.var, Tensor(p.var.value().shape()), Tensor(p.var.value().shape())});
    }
}

void Adam::step(double lr) {
    if (!(lr > 0.0)) throw PreconditionError(msg("adam: learning rate ", lr, " must be positive"));
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (Slot& s : slots_) {
        Tensor& p = s.param.mutable_value();
        const Tensor& g = s.param.grad();
        for (std::int64_t i = 0; i < p.size(); ++i) {
            double gi = g[i] + cfg_.weight_decay * p[i];
            s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * gi;
            s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * gi * gi;
            const double mhat = s.m[i] / bc1;
            const double vhat = s.v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
        if (!p.all_finite()) {
            throw NumericError(msg("adam: parameter '", s.name, "' became non-finite"));
        }
    }
}

NamedArrays Adam::state_arrays(const std::string& prefix) const {
    NamedArrays out;
    out.reserve(slots_.size() * 2 + 1);
    Tensor t = Tensor::scalar(static_cast<double>(t_));
    out.emplace_back(prefix + ".adam_t", std::move(t));
    for (const Slot& s : slots_) {
        out.emplace_back(prefix + "." + s.name + ".adam_m", s.m);
        out.emplace_back(prefix + "." + s.name + ".adam_v", s.v);
    }
    return out;
}

void Adam::restore_state(const Archive& archive, const std::string& prefix) {
    const Tensor& t = archive.at(prefix + ".adam_t");
    t_ = static_cast<std::int64_t>(t[0]);
    for (Slot& s : slots_) {
        const Tensor& m = archive.at(prefix + "." + s.name + ".adam_m");
        const Tensor& v = archive.at(prefix + "." + s.name + ".adam_v");
        if (!m.same_shape(s.m) || !v.same_shape(s.v)) {
            throw IoError(msg("adam: state shape mismatch for '", s.name, "'"));
        }
        s.m = m;
        s.v = v;
    }
}

void LookaheadConfig::validate() const {
    if (sync_period < 1) throw ConfigError(msg("lookahead: sync period ", sync_period, " must be >= 1"));
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError(msg("lookahead: alpha ", alpha, " must lie in [0,1]"));
}

Lookahead::Lookahead(const std::vector<NamedParam>& params, const AdamConfig& adam_cfg,
                     const LookaheadConfig& cfg)
    : inner_(params, adam_cfg), cfg_(cfg) {
    cfg.validate();
    slots_.reserve(params.size());
    for (const auto& p : params) {
        slots_.push_back(Slot{p.name, p.var, p.var.value()});
    }
}

void Lookahead::step(double lr) {
    inner_.step(lr);
    ++counter_;
    if (counter_ % cfg_.sync_period != 0) return;
    for (Slot& s : slots_) {
        Tensor& fast = s.param.mutable_value();
        if (!fast.same_shape(s.slow)) {
            throw StateError(msg("lookahead: fast/slow shape drift on '", s.name, "'"));
        }
        for (std::int64_t i = 0; i < fast.size(); ++i) {
            s.slow[i] = (1.0 - cfg_.alpha) * s.slow[i] + cfg_.alpha * fast[i];
            fast[i] = s.slow[i];
        }
    }
}

NamedArrays Lookahead::state_arrays(const std::string& prefix) const {
    NamedArrays out = inner_.state_arrays(prefix);
    out.emplace_back(prefix + ".lookahead_counter", Tensor::scalar(static_cast<double>(counter_)));
    for (const Slot& s : slots_) {
        out.emplace_back(prefix + "." + s.name + ".slow", s.slow);
    }
    return out;
}

void Lookahead::restore_state(const Archive& archive, const std::string& prefix) {
    inner_.restore_state(archive, prefix);
    counter_ = static_cast<std::int64_t>(archive.at(prefix + ".lookahead_counter")[0]);
    for (Slot& s : slots_) {
        const Tensor& slow = archive.at(prefix + "." + s.name + ".slow");
        if (!slow.same_shape(s.slow)) {
            throw StateError(msg("lookahead: fast/slow shape drift on '", s.name, "'"));
        }
        s.slow = slow;
    }
}

double lr_schedule(double epoch, int epochs, double lr_start, double lr_end) {
    if (epochs < 1) throw ConfigError(msg("lr_schedule: epochs ", epochs, " must be >= 1"));
    if (!(lr_end > 0.0) || lr_start < lr_end) {
        throw ConfigError(msg("lr_schedule: need lr_start >= lr_end > 0, got ", lr_start, ", ", lr_end));
    }
    if (epoch < 0.0 || epoch >= static_cast<double>(epochs)) {
        throw PreconditionError(msg("lr_schedule: epoch ", epoch, " outside [0,", epochs, ")"));
    }
    if (epochs == 1) return lr_start;
    const double t = epoch / static_cast<double>(epochs - 1);
    return lr_start * std::pow(lr_end / lr_start, t);
}

}  // namespace m2gan
