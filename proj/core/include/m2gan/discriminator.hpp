#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "m2gan/blocks.hpp"

namespace m2gan {

// RDB-based logit network with spectral normalization on every convolution
// and on the final linear head. Emits one scalar (non-transformed) logit per
// input. Used for both the image discriminator (in_channels=3) and the
// segmentation discriminator (in_channels=K).
struct DiscriminatorConfig {
    int in_channels = 3;
    int base_channels = 16;
    int num_blocks = 3;  // RDB followed by a stride-2, width-doubling transition
    RdbConfig rdb;       // spectral_norm is forced on

    void validate() const;
};

class Discriminator : public Module {
public:
    Discriminator(const DiscriminatorConfig& cfg, Rng& rng);

    // Logit for one {H,W,C} input. Does not refresh spectral weights; call
    // refresh_spectral_weights() once per batch so real and fake inputs see
    // identical effective weights.
    Var logit(const Var& x);
    std::vector<Var> logits(const std::vector<Var>& batch);
    std::vector<double> logit_values(const std::vector<Tensor>& batch);

    void refresh_spectral_weights();
    void set_sn_policy(int iterations, bool persist_u);

    int in_channels() const { return cfg_.in_channels; }
    const DiscriminatorConfig& config() const { return cfg_; }
    void for_each_conv(const std::function<void(Conv2d&)>& fn);
    Linear& head() { return *head_; }

private:
    DiscriminatorConfig cfg_;
    std::unique_ptr<Conv2d> entry_;
    std::vector<std::unique_ptr<ResidualDenseBlock>> blocks_;
    std::vector<std::unique_ptr<Conv2d>> transitions_;
    std::unique_ptr<Linear> head_;
};

// sigmoid(logit_a - mean_logit_b); the relativistic pairing probability.
double relativistic_prob(double logit_a, double mean_logit_b);

}  // namespace m2gan
