#pragma once

#include <memory>

#include "m2gan/layers.hpp"

namespace m2gan {

inline constexpr double kLeakySlope = 0.2;
// Fused dense features enter the residual add at this scale so activation
// variance stays near the input's through deep block stacks.
inline constexpr double kRdbResidualScale = 0.2;

struct RdbConfig {
    int num_layers = 4;
    int growth_rate = 16;
    bool spectral_norm = false;  // discriminator RDBs normalize every conv
    void validate() const;
};

// Residual dense block: densely connected 3x3 conv layers, 1x1 local feature
// fusion back to the input width, local residual addition.
class ResidualDenseBlock : public Module {
public:
    ResidualDenseBlock(int channels, const RdbConfig& cfg, Rng& rng);

    Var forward(const Var& x);

    int channels() const { return channels_; }
    int num_layers() const { return static_cast<int>(layers_.size()); }
    Conv2d& layer(int i) { return *layers_[static_cast<size_t>(i)]; }
    Conv2d& fusion() { return *fusion_; }
    void for_each_conv(const std::function<void(Conv2d&)>& fn);

private:
    int channels_;
    RdbConfig cfg_;
    std::vector<std::unique_ptr<Conv2d>> layers_;
    std::unique_ptr<Conv2d> fusion_;
};

struct UrdbConfig {
    int base_channels = 16;
    RdbConfig rdb;
    // Fixed by the architecture: two contraction and two expansion blocks
    // around a bottleneck, each level doubling/halving the kernel count.
    static constexpr int contraction_blocks = 2;
    static constexpr int expansion_blocks = 2;
    void validate() const;
};

// UNet-shaped encoder-decoder built from RDBs. 2x2 average pooling between
// contraction blocks, nearest-neighbor upsampling + 3x3 conv between
// expansion blocks, channel-concatenation skip connections, and a final 3x3
// conv to the declared output width.
class Urdb : public Module {
public:
    Urdb(int in_channels, int out_channels, const UrdbConfig& cfg, Rng& rng);

    Var forward(const Var& x);

    std::vector<int> contraction_channels() const;  // {base, 2*base}
    std::vector<int> expansion_channels() const;    // {2*base, base}
    int spatial_divisor() const { return 1 << UrdbConfig::contraction_blocks; }

private:
    int in_channels_, out_channels_;
    UrdbConfig cfg_;
    std::unique_ptr<Conv2d> entry_;
    std::unique_ptr<ResidualDenseBlock> enc1_, enc2_, mid_, dec1_, dec2_;
    std::unique_ptr<Conv2d> down1_, down2_, up1_, fuse1_, up2_, fuse2_, out_;
};

struct ConvLstmState {
    Var hidden;
    Var cell;
    bool defined() const { return hidden.defined() && cell.defined(); }
};

class ConvLstmCell : public Module {
public:
    ConvLstmCell(int input_channels, int hidden_channels, int kernel_size, Rng& rng);

    ConvLstmState initial_state(int height, int width) const;
    // Returns the new hidden map and the full next state.
    std::pair<Var, ConvLstmState> step(const Var& x, const ConvLstmState& state);

    int hidden_channels() const { return hidden_channels_; }

private:
    int input_channels_, hidden_channels_;
    std::unique_ptr<Conv2d> gates_;
};

struct AsppConfig {
    std::vector<int> dilation_rates = {1, 2, 4};
    int out_channels = 16;
    bool include_global_pool = true;
    void validate() const;
};

// Atrous spatial pyramid pooling: parallel dilated 3x3 branches plus an
// optional global-pool branch, concatenated and fused by a 1x1 conv.
class Aspp : public Module {
public:
    Aspp(int in_channels, const AsppConfig& cfg, Rng& rng);

    Var forward(const Var& x);

    int num_branches() const;
    Conv2d& branch(int i) { return *branches_[static_cast<size_t>(i)]; }
    Conv2d& fusion() { return *fusion_; }

private:
    int in_channels_;
    AsppConfig cfg_;
    std::vector<std::unique_ptr<Conv2d>> branches_;
    std::unique_ptr<Linear> pool_proj_;
    std::unique_ptr<Conv2d> fusion_;
};

}  // namespace m2gan
