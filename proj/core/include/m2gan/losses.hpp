#pragma once

#include <memory>
#include <string>
#include <vector>

#include "m2gan/discriminator.hpp"
#include "m2gan/layers.hpp"
#include "m2gan/module.hpp"

namespace m2gan {

struct LossWeights {
    double mae = 0.1;
    double perceptual = 1.0;
    double adversarial = 0.001;

    void validate() const;
};

// The printed adversarial objective uses sigmoid for every pairing term; its
// discriminator form pushes real and fake logits down symmetrically and has
// no useful minimum, so the negative-log-sigmoid relativistic-average form is
// the default. The literal form stays selectable.
enum class AdvLossMode { Standard, Literal };

AdvLossMode parse_adv_mode(const std::string& name);
std::string adv_mode_name(AdvLossMode mode);

// Frozen feature extractor for the perceptual loss: a fixed-seed stack of
// stride-2 convolutions. tap_point selects how many stages to apply; 0 taps
// the input itself (identity features).
class PerceptualBackbone : public Module {
public:
    static constexpr int kNumStages = 4;

    PerceptualBackbone(int in_channels, int base_channels, std::uint64_t seed);

    Var features(const Var& x, int tap_point);
    int max_tap() const { return kNumStages; }
    int in_channels() const { return in_channels_; }

private:
    int in_channels_;
    std::vector<std::unique_ptr<Conv2d>> stages_;
};

struct PerceptualBackboneHandle {
    enum class Kind { FixedRandom, ExternalWeights };
    Kind kind = Kind::FixedRandom;
    int tap_point = 3;
    int base_channels = 8;
    std::uint64_t seed = 1234;
    std::string weights_path;

    void validate() const;
};

std::unique_ptr<PerceptualBackbone> make_backbone(const PerceptualBackboneHandle& handle, int in_channels);

// Mean absolute error, averaged per element and over the batch.
Var loss_mae(const std::vector<Var>& fakes, const std::vector<Tensor>& reals);
double loss_mae_value(const Tensor& fake, const Tensor& real);

// Mean squared feature distance at the tap point, averaged over the batch.
Var loss_perceptual(const std::vector<Var>& fakes, const std::vector<Tensor>& reals,
                    PerceptualBackbone& backbone, int tap_point);

// Relativistic-average adversarial losses over mini-batch logits. The
// discriminator's spectral weights are refreshed exactly once per call so
// real and fake inputs share identical effective weights.
Var loss_disc_image(const std::vector<Tensor>& reals, const std::vector<Tensor>& fakes,
                    Discriminator& disc, AdvLossMode mode);
Var loss_disc_seg(const std::vector<Tensor>& real_maps, const std::vector<Tensor>& fake_maps,
                  Discriminator& disc, AdvLossMode mode);

Var loss_gen_adv_image_only(const std::vector<Tensor>& img_reals, const std::vector<Var>& img_fakes,
                            Discriminator& d_img, AdvLossMode mode);
Var loss_gen_adv(const std::vector<Tensor>& img_reals, const std::vector<Var>& img_fakes,
                 const std::vector<Tensor>& seg_reals, const std::vector<Var>& seg_fakes,
                 Discriminator& d_img, Discriminator& d_seg, AdvLossMode mode);

// Weighted total: mae*MAE + perceptual*feature loss + adversarial*adv_value.
Var loss_total(const std::vector<Var>& fakes, const std::vector<Tensor>& reals, const Var& adv_value,
               const LossWeights& weights, PerceptualBackbone& backbone, int tap_point);

// Logit-level forms, exposed for direct arithmetic checks. The tensor-level
// losses above reduce to these.
Var adv_disc_loss_from_logits(const std::vector<Var>& real_logits, const std::vector<Var>& fake_logits,
                              AdvLossMode mode);
Var adv_gen_term_from_logits(const std::vector<Var>& real_logits, const std::vector<Var>& fake_logits,
                             AdvLossMode mode);
double adv_disc_loss_value(const std::vector<double>& real_logits, const std::vector<double>& fake_logits,
                           AdvLossMode mode);
double adv_gen_term_value(const std::vector<double>& real_logits, const std::vector<double>& fake_logits,
                          AdvLossMode mode);

}  // namespace m2gan
