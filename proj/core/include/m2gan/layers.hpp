#pragma once

#include "m2gan/module.hpp"

namespace m2gan {

// Running state of spectral normalization for one weight matrix.
struct SpectralState {
    Tensor u;                    // {rows}, kept at unit norm
    double last_sigma = 0.0;     // most recent top-singular-value estimate
    bool sigma_floored = false;  // set when a zero matrix forced the 1e-12 floor
};

// Power-iteration spectral normalization of a weight viewed as
// (rows = shape[0]) x (flattened rest). Returns weight / sigma_hat.
// u and v are treated as constants in backward, which is exact once the
// iteration has converged.
Var spectral_norm_weight(const Var& w, SpectralState& state, int iterations, bool persist_u);

struct Conv2dOptions {
    int stride = 1;
    int dilation = 1;
    bool same_padding = true;  // reflection padding keeping spatial dims at stride 1
    bool spectral_norm = false;
};

class Conv2d : public Module {
public:
    Conv2d(int in_channels, int out_channels, int kernel_size, const Conv2dOptions& opts, Rng& rng);

    Var forward(const Var& x);

    int in_channels() const { return in_channels_; }
    int out_channels() const { return out_channels_; }
    Var weight() { return weight_; }
    Var bias() { return bias_; }

    // Recomputes the normalized weight once; subsequent forwards reuse it
    // until the next refresh, so every sample in a batch sees one weight.
    void refresh_effective_weight();
    void set_sn_policy(int iterations, bool persist_u);
    bool uses_spectral_norm() const { return opts_.spectral_norm; }
    SpectralState& sn_state() { return sn_state_; }

private:
    Var effective_weight();

    int in_channels_, out_channels_, kernel_size_;
    Conv2dOptions opts_;
    Var weight_, bias_;
    SpectralState sn_state_;
    int sn_iterations_ = 1;
    bool sn_persist_ = true;
    Var w_eff_;
};

class Linear : public Module {
public:
    Linear(int in_features, int out_features, bool spectral_norm, Rng& rng);

    Var forward(const Var& x);
    void refresh_effective_weight();
    void set_sn_policy(int iterations, bool persist_u);
    bool uses_spectral_norm() const { return spectral_norm_; }
    SpectralState& sn_state() { return sn_state_; }
    Var weight() { return weight_; }
    Var bias() { return bias_; }

private:
    bool spectral_norm_;
    Var weight_, bias_;
    SpectralState sn_state_;
    int sn_iterations_ = 1;
    bool sn_persist_ = true;
    Var w_eff_;
};

}  // namespace m2gan
