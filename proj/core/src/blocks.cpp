#include "m2gan/blocks.hpp"

namespace m2gan {

void RdbConfig::validate() const {
    if (num_layers < 1) throw ConfigError("RdbConfig: num_layers must be >= 1");
    if (growth_rate < 1) throw ConfigError("RdbConfig: growth_rate must be >= 1");
}

ResidualDenseBlock::ResidualDenseBlock(int channels, const RdbConfig& cfg, Rng& rng)
    : channels_(channels), cfg_(cfg) {
    cfg.validate();
    if (channels < 1) throw ConfigError("ResidualDenseBlock: channels must be >= 1");
    Conv2dOptions conv_opts;
    conv_opts.spectral_norm = cfg.spectral_norm;
    for (int l = 0; l < cfg.num_layers; ++l) {
        layers_.push_back(std::make_unique<Conv2d>(channels + l * cfg.growth_rate, cfg.growth_rate, 3, conv_opts, rng));
        register_module(msg("layer", l), *layers_.back());
    }
    Conv2dOptions fuse_opts;
    fuse_opts.spectral_norm = cfg.spectral_norm;
    // 1x1 local feature fusion back to the block width; residual add keeps shapes.
    fusion_ = std::make_unique<Conv2d>(channels + cfg.num_layers * cfg.growth_rate, channels, 1, fuse_opts, rng);
    register_module("fusion", *fusion_);
}

Var ResidualDenseBlock::forward(const Var& x) {
    if (x.value().rank() != 3 || x.value().dim(2) != channels_) {
        throw ConfigError(msg("ResidualDenseBlock: expected ", channels_, " channels, got input ",
                              x.value().shape_string()));
    }
    std::vector<Var> feats{x};
    for (int l = 0; l < cfg_.num_layers; ++l) {
        Var in = feats.size() == 1 ? feats[0] : concat_channels(feats);
        Var y = leaky_relu(layers_[static_cast<size_t>(l)]->forward(in), kLeakySlope);
        if (!y.value().all_finite()) {
            throw NumericError(msg("ResidualDenseBlock: non-finite activation at dense layer ", l));
        }
        feats.push_back(y);
    }
    Var fused = fusion_->forward(concat_channels(feats));
    // Scaled residual add: stacking unscaled residual blocks multiplies
    // activation variance per block, which saturates the downstream clamp at
    // init and makes the head's loss surface too sharp to train.
    return add(x, scale(fused, kRdbResidualScale));
}

void ResidualDenseBlock::for_each_conv(const std::function<void(Conv2d&)>& fn) {
    for (auto& l : layers_) fn(*l);
    fn(*fusion_);
}

void UrdbConfig::validate() const {
    if (base_channels < 1) throw ConfigError("UrdbConfig: base_channels must be >= 1");
    rdb.validate();
}

Urdb::Urdb(int in_channels, int out_channels, const UrdbConfig& cfg, Rng& rng)
    : in_channels_(in_channels), out_channels_(out_channels), cfg_(cfg) {
    cfg.validate();
    const int b = cfg.base_channels;
    const Conv2dOptions same;
    Conv2dOptions stride1x1;
    stride1x1.same_padding = false;

    entry_ = std::make_unique<Conv2d>(in_channels, b, 3, same, rng);
    enc1_ = std::make_unique<ResidualDenseBlock>(b, cfg.rdb, rng);
    down1_ = std::make_unique<Conv2d>(b, 2 * b, 3, same, rng);
    enc2_ = std::make_unique<ResidualDenseBlock>(2 * b, cfg.rdb, rng);
    down2_ = std::make_unique<Conv2d>(2 * b, 4 * b, 3, same, rng);
    mid_ = std::make_unique<ResidualDenseBlock>(4 * b, cfg.rdb, rng);
    up1_ = std::make_unique<Conv2d>(4 * b, 2 * b, 3, same, rng);
    fuse1_ = std::make_unique<Conv2d>(4 * b, 2 * b, 1, stride1x1, rng);
    dec1_ = std::make_unique<ResidualDenseBlock>(2 * b, cfg.rdb, rng);
    up2_ = std::make_unique<Conv2d>(2 * b, b, 3, same, rng);
    fuse2_ = std::make_unique<Conv2d>(2 * b, b, 1, stride1x1, rng);
    dec2_ = std::make_unique<ResidualDenseBlock>(b, cfg.rdb, rng);
    out_ = std::make_unique<Conv2d>(b, out_channels, 3, same, rng);

    register_module("entry", *entry_);
    register_module("enc1", *enc1_);
    register_module("down1", *down1_);
    register_module("enc2", *enc2_);
    register_module("down2", *down2_);
    register_module("mid", *mid_);
    register_module("up1", *up1_);
    register_module("fuse1", *fuse1_);
    register_module("dec1", *dec1_);
    register_module("up2", *up2_);
    register_module("fuse2", *fuse2_);
    register_module("dec2", *dec2_);
    register_module("out", *out_);
}

std::vector<int> Urdb::contraction_channels() const {
    return {cfg_.base_channels, 2 * cfg_.base_channels};
}

std::vector<int> Urdb::expansion_channels() const {
    return {2 * cfg_.base_channels, cfg_.base_channels};
}

Var Urdb::forward(const Var& x) {
    const Tensor& xv = x.value();
    if (xv.rank() != 3 || xv.dim(2) != in_channels_) {
        throw ConfigError(msg("Urdb: expected ", in_channels_, " channels, got input ", xv.shape_string()));
    }
    const int div = spatial_divisor();
    if (xv.dim(0) % div != 0 || xv.dim(1) % div != 0) {
        throw PreconditionError(msg("Urdb: spatial dims ", xv.dim(0), "x", xv.dim(1),
                                    " must be divisible by ", div, " (", UrdbConfig::contraction_blocks,
                                    " contraction blocks)"));
    }

    Var e0 = leaky_relu(entry_->forward(x), kLeakySlope);
    Var e1 = enc1_->forward(e0);
    Var d1 = leaky_relu(down1_->forward(avg_pool2(e1)), kLeakySlope);
    Var e2 = enc2_->forward(d1);
    Var d2 = leaky_relu(down2_->forward(avg_pool2(e2)), kLeakySlope);
    Var m = mid_->forward(d2);

    Var u1 = leaky_relu(up1_->forward(upsample_nearest2(m)), kLeakySlope);
    Var s1 = leaky_relu(fuse1_->forward(concat_channels({u1, e2})), kLeakySlope);
    Var r1 = dec1_->forward(s1);
    Var u2 = leaky_relu(up2_->forward(upsample_nearest2(r1)), kLeakySlope);
    Var s2 = leaky_relu(fuse2_->forward(concat_channels({u2, e1})), kLeakySlope);
    Var r2 = dec2_->forward(s2);
    return out_->forward(r2);
}

ConvLstmCell::ConvLstmCell(int input_channels, int hidden_channels, int kernel_size, Rng& rng)
    : input_channels_(input_channels), hidden_channels_(hidden_channels) {
    if (input_channels < 1 || hidden_channels < 1) {
        throw ConfigError("ConvLstmCell: channels must be >= 1");
    }
    gates_ = std::make_unique<Conv2d>(input_channels + hidden_channels, 4 * hidden_channels, kernel_size,
                                      Conv2dOptions{}, rng);
    register_module("gates", *gates_);
}

ConvLstmState ConvLstmCell::initial_state(int height, int width) const {
    ConvLstmState s;
    s.hidden = Var::leaf(Tensor({height, width, hidden_channels_}));
    s.cell = Var::leaf(Tensor({height, width, hidden_channels_}));
    return s;
}

std::pair<Var, ConvLstmState> ConvLstmCell::step(const Var& x, const ConvLstmState& state) {
    const Tensor& xv = x.value();
    if (!state.defined()) throw StateError("ConvLstmCell: undefined state");
    const Tensor& hv = state.hidden.value();
    if (xv.rank() != 3 || xv.dim(2) != input_channels_) {
        throw ConfigError(msg("ConvLstmCell: expected ", input_channels_, " input channels, got ",
                              xv.shape_string()));
    }
    if (hv.dim(0) != xv.dim(0) || hv.dim(1) != xv.dim(1) || hv.dim(2) != hidden_channels_ ||
        !state.cell.value().same_shape(hv)) {
        throw ConfigError(msg("ConvLstmCell: state ", hv.shape_string(), " misaligned with input ",
                              xv.shape_string()));
    }

    Var g = gates_->forward(concat_channels({x, state.hidden}));
    const int hc = hidden_channels_;
    Var in_gate = sigmoid(slice_channels(g, 0, hc));
    Var forget_gate = sigmoid(slice_channels(g, hc, 2 * hc));
    Var out_gate = sigmoid(slice_channels(g, 2 * hc, 3 * hc));
    Var candidate = vtanh(slice_channels(g, 3 * hc, 4 * hc));

    ConvLstmState next;
    next.cell = add(mul(forget_gate, state.cell), mul(in_gate, candidate));
    next.hidden = mul(out_gate, vtanh(next.cell));
    return {next.hidden, next};
}

void AsppConfig::validate() const {
    if (dilation_rates.empty()) throw ConfigError("AsppConfig: dilation rate list is empty");
    int prev = 0;
    for (int r : dilation_rates) {
        if (r < 1) throw ConfigError("AsppConfig: dilation rates must be >= 1");
        if (r <= prev) throw ConfigError("AsppConfig: dilation rates must be strictly increasing");
        prev = r;
    }
    if (out_channels < 1) throw ConfigError("AsppConfig: out_channels must be >= 1");
}

Aspp::Aspp(int in_channels, const AsppConfig& cfg, Rng& rng) : in_channels_(in_channels), cfg_(cfg) {
    cfg.validate();
    for (size_t i = 0; i < cfg.dilation_rates.size(); ++i) {
        Conv2dOptions opts;
        opts.dilation = cfg.dilation_rates[i];
        branches_.push_back(std::make_unique<Conv2d>(in_channels, cfg.out_channels, 3, opts, rng));
        register_module(msg("branch", i), *branches_.back());
    }
    if (cfg.include_global_pool) {
        pool_proj_ = std::make_unique<Linear>(in_channels, cfg.out_channels, false, rng);
        register_module("pool_proj", *pool_proj_);
    }
    Conv2dOptions fuse_opts;
    fuse_opts.same_padding = false;
    fusion_ = std::make_unique<Conv2d>(num_branches() * cfg.out_channels, cfg.out_channels, 1, fuse_opts, rng);
    register_module("fusion", *fusion_);
}

int Aspp::num_branches() const {
    return static_cast<int>(cfg_.dilation_rates.size()) + (cfg_.include_global_pool ? 1 : 0);
}

Var Aspp::forward(const Var& x) {
    const Tensor& xv = x.value();
    if (xv.rank() != 3 || xv.dim(2) != in_channels_) {
        throw ConfigError(msg("Aspp: expected ", in_channels_, " channels, got input ", xv.shape_string()));
    }
    std::vector<Var> outs;
    for (auto& b : branches_) outs.push_back(leaky_relu(b->forward(x), kLeakySlope));
    if (cfg_.include_global_pool) {
        Var pooled = leaky_relu(pool_proj_->forward(global_avg_pool(x)), kLeakySlope);
        outs.push_back(broadcast_spatial(pooled, xv.dim(0), xv.dim(1)));
    }
    return fusion_->forward(concat_channels(outs));
}

}  // namespace m2gan
