#include "m2gan/losses.hpp"

#include "m2gan/checkpoint.hpp"
#include "m2gan/common.hpp"

namespace m2gan {

namespace {


void require_batch_pair(std::size_t reals, std::size_t fakes, const char* where) {
    if (reals == 0 || fakes == 0) {
        throw PreconditionError(msg(where, ": batches must be nonempty"));
    }
    if (reals != fakes) {
        throw PreconditionError(msg(where, ": batch sizes differ (", reals, " real vs ", fakes, " fake)"));
    }
}

std::vector<Var> to_leaves(const std::vector<Tensor>& batch) {
    std::vector<Var> out;
    out.reserve(batch.size());
    for (const Tensor& t : batch) out.push_back(Var::leaf(t));
    return out;
}

std::vector<Var> batch_logits(Discriminator& disc, const std::vector<Var>& batch) {
    std::vector<Var> out;
    out.reserve(batch.size());
    for (const Var& x : batch) out.push_back(disc.logit(x));
    return out;
}

}  // namespace

void LossWeights::validate() const {
    if (mae < 0.0 || perceptual < 0.0 || adversarial < 0.0) {
        throw ConfigError(msg("loss weights must be nonnegative, got (", mae, ", ", perceptual, ", ",
                              adversarial, ")"));
    }
}

AdvLossMode parse_adv_mode(const std::string& name) {
    if (name == "standard") return AdvLossMode::Standard;
    if (name == "literal") return AdvLossMode::Literal;
    throw ConfigError(msg("unknown adversarial mode '", name, "' (expected 'standard' or 'literal')"));
}

std::string adv_mode_name(AdvLossMode mode) {
    return mode == AdvLossMode::Standard ? "standard" : "literal";
}

PerceptualBackbone::PerceptualBackbone(int in_channels, int base_channels, std::uint64_t seed)
    : in_channels_(in_channels) {
    if (in_channels < 1 || base_channels < 1) {
        throw ConfigError("perceptual backbone: channels must be >= 1");
    }
    Rng rng(seed);
    int ch = in_channels;
    for (int i = 0; i < kNumStages; ++i) {
        const int out = base_channels << i;
        Conv2dOptions opts;
        opts.stride = 2;
        stages_.push_back(std::make_unique<Conv2d>(ch, out, 3, opts, rng));
        register_module(msg("stage", i), *stages_.back());
        ch = out;
    }
    for (auto& p : named_parameters()) p.var.set_requires_grad(false);
}

Var PerceptualBackbone::features(const Var& x, int tap_point) {
    if (tap_point < 0 || tap_point > kNumStages) {
        throw ConfigError(msg("perceptual backbone: tap point ", tap_point, " outside [0,", kNumStages, "]"));
    }
    if (tap_point > 0 && (x.value().rank() != 3 || x.value().dim(2) != in_channels_)) {
        throw ConfigError(msg("perceptual backbone: expected {H,W,", in_channels_, "}, got ",
                              x.value().shape_string()));
    }
    Var f = x;
    for (int i = 0; i < tap_point; ++i) {
        f = leaky_relu(stages_[static_cast<std::size_t>(i)]->forward(f), kLeakySlope);
    }
    return f;
}

void PerceptualBackboneHandle::validate() const {
    if (tap_point < 0 || tap_point > PerceptualBackbone::kNumStages) {
        throw ConfigError(msg("perceptual backbone: tap point ", tap_point, " outside [0,",
                              PerceptualBackbone::kNumStages, "]"));
    }
    if (base_channels < 1) {
        throw ConfigError("perceptual backbone: base_channels must be >= 1");
    }
    if (kind == Kind::ExternalWeights && weights_path.empty()) {
        throw ConfigError("perceptual backbone: external weights require a path");
    }
}

std::unique_ptr<PerceptualBackbone> make_backbone(const PerceptualBackboneHandle& handle, int in_channels) {
    handle.validate();
    auto backbone = std::make_unique<PerceptualBackbone>(in_channels, handle.base_channels, handle.seed);
    if (handle.kind == PerceptualBackboneHandle::Kind::ExternalWeights) {
        load_module_params(handle.weights_path, *backbone);
    }
    return backbone;
}

Var loss_mae(const std::vector<Var>& fakes, const std::vector<Tensor>& reals) {
    require_batch_pair(reals.size(), fakes.size(), "loss_mae");
    std::vector<Var> per_pair;
    per_pair.reserve(fakes.size());
    for (std::size_t i = 0; i < fakes.size(); ++i) {
        require_same_shape(fakes[i].value(), reals[i], "loss_mae");
        per_pair.push_back(mean(vabs(sub(fakes[i], Var::leaf(reals[i])))));
    }
    return mean_of(per_pair);
}

double loss_mae_value(const Tensor& fake, const Tensor& real) {
    return loss_mae({Var::leaf(fake)}, {real}).value().raw()[0];
}

Var loss_perceptual(const std::vector<Var>& fakes, const std::vector<Tensor>& reals,
                    PerceptualBackbone& backbone, int tap_point) {
    require_batch_pair(reals.size(), fakes.size(), "loss_perceptual");
    std::vector<Var> per_pair;
    per_pair.reserve(fakes.size());
    for (std::size_t i = 0; i < fakes.size(); ++i) {
        require_same_shape(fakes[i].value(), reals[i], "loss_perceptual");
        Var pf = backbone.features(fakes[i], tap_point);
        Var pr = backbone.features(Var::leaf(reals[i]), tap_point);
        Var d = sub(pf, pr);
        per_pair.push_back(mean(mul(d, d)));
    }
    return mean_of(per_pair);
}

Var adv_disc_loss_from_logits(const std::vector<Var>& real_logits, const std::vector<Var>& fake_logits,
                              AdvLossMode mode) {
    require_batch_pair(real_logits.size(), fake_logits.size(), "adversarial loss");
    Var mean_real = mean_of(real_logits);
    Var mean_fake = mean_of(fake_logits);
    std::vector<Var> real_terms, fake_terms;
    real_terms.reserve(real_logits.size());
    fake_terms.reserve(fake_logits.size());
    for (const Var& l : real_logits) {
        Var d = sub(l, mean_fake);
        real_terms.push_back(mode == AdvLossMode::Standard ? softplus(neg(d)) : sigmoid(d));
    }
    for (const Var& l : fake_logits) {
        Var d = sub(l, mean_real);
        fake_terms.push_back(mode == AdvLossMode::Standard ? softplus(d) : sigmoid(d));
    }
    return add(mean_of(real_terms), mean_of(fake_terms));
}

Var adv_gen_term_from_logits(const std::vector<Var>& real_logits, const std::vector<Var>& fake_logits,
                             AdvLossMode mode) {
    require_batch_pair(real_logits.size(), fake_logits.size(), "adversarial loss");
    Var mean_real = mean_of(real_logits);
    Var mean_fake = mean_of(fake_logits);
    std::vector<Var> real_terms, fake_terms;
    real_terms.reserve(real_logits.size());
    fake_terms.reserve(fake_logits.size());
    if (mode == AdvLossMode::Standard) {
        // Roles swap: fakes should look more real than the batch of reals.
        for (const Var& l : fake_logits) real_terms.push_back(softplus(neg(sub(l, mean_real))));
        for (const Var& l : real_logits) fake_terms.push_back(softplus(sub(l, mean_fake)));
        return add(mean_of(real_terms), mean_of(fake_terms));
    }
    for (const Var& l : real_logits) real_terms.push_back(sigmoid(sub(l, mean_fake)));
    for (const Var& l : fake_logits) fake_terms.push_back(sigmoid(sub(l, mean_real)));
    return neg(add(mean_of(real_terms), mean_of(fake_terms)));
}

double adv_disc_loss_value(const std::vector<double>& real_logits, const std::vector<double>& fake_logits,
                           AdvLossMode mode) {
    std::vector<Var> r, f;
    for (double v : real_logits) r.push_back(Var::leaf(Tensor::scalar(v)));
    for (double v : fake_logits) f.push_back(Var::leaf(Tensor::scalar(v)));
    return adv_disc_loss_from_logits(r, f, mode).value().raw()[0];
}

double adv_gen_term_value(const std::vector<double>& real_logits, const std::vector<double>& fake_logits,
                          AdvLossMode mode) {
    std::vector<Var> r, f;
    for (double v : real_logits) r.push_back(Var::leaf(Tensor::scalar(v)));
    for (double v : fake_logits) f.push_back(Var::leaf(Tensor::scalar(v)));
    return adv_gen_term_from_logits(r, f, mode).value().raw()[0];
}

Var loss_disc_image(const std::vector<Tensor>& reals, const std::vector<Tensor>& fakes,
                    Discriminator& disc, AdvLossMode mode) {
    require_batch_pair(reals.size(), fakes.size(), "loss_disc_image");
    disc.refresh_spectral_weights();
    return adv_disc_loss_from_logits(batch_logits(disc, to_leaves(reals)),
                                     batch_logits(disc, to_leaves(fakes)), mode);
}

Var loss_disc_seg(const std::vector<Tensor>& real_maps, const std::vector<Tensor>& fake_maps,
                  Discriminator& disc, AdvLossMode mode) {
    require_batch_pair(real_maps.size(), fake_maps.size(), "loss_disc_seg");
    disc.refresh_spectral_weights();
    return adv_disc_loss_from_logits(batch_logits(disc, to_leaves(real_maps)),
                                     batch_logits(disc, to_leaves(fake_maps)), mode);
}

Var loss_gen_adv_image_only(const std::vector<Tensor>& img_reals, const std::vector<Var>& img_fakes,
                            Discriminator& d_img, AdvLossMode mode) {
    require_batch_pair(img_reals.size(), img_fakes.size(), "loss_gen_adv");
    d_img.refresh_spectral_weights();
    return adv_gen_term_from_logits(batch_logits(d_img, to_leaves(img_reals)),
                                    batch_logits(d_img, img_fakes), mode);
}

Var loss_gen_adv(const std::vector<Tensor>& img_reals, const std::vector<Var>& img_fakes,
                 const std::vector<Tensor>& seg_reals, const std::vector<Var>& seg_fakes,
                 Discriminator& d_img, Discriminator& d_seg, AdvLossMode mode) {
    require_batch_pair(seg_reals.size(), seg_fakes.size(), "loss_gen_adv");
    Var image_term = loss_gen_adv_image_only(img_reals, img_fakes, d_img, mode);
    d_seg.refresh_spectral_weights();
    Var seg_term = adv_gen_term_from_logits(batch_logits(d_seg, to_leaves(seg_reals)),
                                            batch_logits(d_seg, seg_fakes), mode);
    return add(image_term, seg_term);
}

Var loss_total(const std::vector<Var>& fakes, const std::vector<Tensor>& reals, const Var& adv_value,
               const LossWeights& weights, PerceptualBackbone& backbone, int tap_point) {
    weights.validate();
    Var total = scale(loss_mae(fakes, reals), weights.mae);
    total = add(total, scale(loss_perceptual(fakes, reals, backbone, tap_point), weights.perceptual));
    return add(total, scale(adv_value, weights.adversarial));
}

}  // namespace m2gan
