#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "m2gan/checkpoint.hpp"
#include "m2gan/module.hpp"

namespace m2gan {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // zero: convolution weight decay is disabled

    void validate() const;
};

// Adaptive-moment inner optimizer with bias correction.
class Adam {
public:
    Adam(const std::vector<NamedParam>& params, const AdamConfig& cfg);

    void step(double lr);
    std::int64_t step_count() const { return t_; }
    std::size_t num_params() const { return slots_.size(); }

    NamedArrays state_arrays(const std::string& prefix) const;
    void restore_state(const Archive& archive, const std::string& prefix);

private:
    struct Slot {
        std::string name;
        Var param;
        Tensor m;
        Tensor v;
    };
    std::vector<Slot> slots_;
    AdamConfig cfg_;
    std::int64_t t_ = 0;
};

struct LookaheadConfig {
    int sync_period = 5;  // k
    double alpha = 0.5;

    void validate() const;
};

// Wraps the inner optimizer: every sync_period inner steps the slow weights
// are interpolated toward the fast weights and copied back. The lerp form
// (1-alpha)*slow + alpha*fast makes alpha=1 collapse bitwise to the inner
// optimizer alone.
class Lookahead {
public:
    Lookahead(const std::vector<NamedParam>& params, const AdamConfig& adam_cfg, const LookaheadConfig& cfg);

    void step(double lr);
    std::int64_t step_counter() const { return counter_; }
    const LookaheadConfig& config() const { return cfg_; }
    Adam& inner() { return inner_; }

    NamedArrays state_arrays(const std::string& prefix) const;
    void restore_state(const Archive& archive, const std::string& prefix);

private:
    struct Slot {
        std::string name;
        Var param;
        Tensor slow;
    };
    Adam inner_;
    std::vector<Slot> slots_;
    LookaheadConfig cfg_;
    std::int64_t counter_ = 0;
};

// Log-linear interpolation from lr_start (epoch 0) to lr_end (final epoch).
// Fractional epochs are legal so mid-epoch positions can be queried.
double lr_schedule(double epoch, int epochs, double lr_start, double lr_end);

}  // namespace m2gan
