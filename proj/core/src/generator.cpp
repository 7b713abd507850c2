#include "m2gan/generator.hpp"

#include "m2gan/common.hpp"

namespace m2gan {

void PipelineConfig::validate() const {
    if (num_stages < 1) {
        throw ConfigError(msg("pipeline: num_stages ", num_stages, " must be >= 1"));
    }
    if (lstm_kernel < 1 || lstm_kernel % 2 == 0) {
        throw ConfigError(msg("pipeline: lstm_kernel ", lstm_kernel, " must be odd and positive"));
    }
    urdb.validate();
    aspp.validate();
}

StageNet::StageNet(const PipelineConfig& cfg, int seg_categories, Rng& rng)
    : seg_categories_(seg_categories), width_(cfg.urdb.base_channels) {
    cfg.validate();
    if (seg_categories < 1) {
        throw ConfigError(msg("stage: seg_categories ", seg_categories, " must be >= 1"));
    }
    const int in_channels = 3 + 1 + seg_categories;
    lstm_ = std::make_unique<ConvLstmCell>(in_channels, width_, cfg.lstm_kernel, rng);
    register_module("lstm", *lstm_);
    for (int i = 0; i < kUrdbsPerStage; ++i) {
        urdbs_.push_back(std::make_unique<Urdb>(width_, width_, cfg.urdb, rng));
        register_module(msg("urdb", i), *urdbs_.back());
    }
    aspp_ = std::make_unique<Aspp>(width_, cfg.aspp, rng);
    register_module("aspp", *aspp_);
    head_ = std::make_unique<Conv2d>(cfg.aspp.out_channels, 3, 3, Conv2dOptions{}, rng);
    // Small residual at init: full-scale init saturates clamp01 and kills
    // every generator gradient, exact zero starves the upstream layers of
    // gradient through the zero head. Scaling keeps the start near the
    // identity while leaving all paths trainable.
    head_->weight().mutable_value().scale(kHeadInitScale);
    head_->bias().mutable_value().fill(0.0);
    register_module("head", *head_);
}

ConvLstmState StageNet::initial_state(int height, int width) const {
    return lstm_->initial_state(height, width);
}

StageOutput StageNet::forward(const StageInput& input) {
    const Tensor& o = input.observation;
    if (o.rank() != 3 || o.dim(2) != 3) {
        throw PreconditionError(msg("stage: observation must be {H,W,3}, got ", o.shape_string()));
    }
    const int h = o.dim(0);
    const int w = o.dim(1);
    if (input.rain_map.rank() != 3 || input.rain_map.dim(0) != h || input.rain_map.dim(1) != w ||
        input.rain_map.dim(2) != 1) {
        throw PreconditionError(msg("stage: rain map ", input.rain_map.shape_string(),
                                    " misaligned with observation ", o.shape_string()));
    }
    if (input.seg_map.rank() != 3 || input.seg_map.dim(0) != h || input.seg_map.dim(1) != w ||
        input.seg_map.dim(2) != seg_categories_) {
        throw PreconditionError(msg("stage: seg map ", input.seg_map.shape_string(), " misaligned with observation ",
                                    o.shape_string(), " (expected ", seg_categories_, " categories)"));
    }
    if (!input.state.defined()) {
        throw StateError("stage: ConvLSTM state is undefined; use initial_state or a prior stage's next_state");
    }

    Var obs = Var::leaf(o);
    Var x = concat_channels({obs, Var::leaf(input.rain_map), Var::leaf(input.seg_map)});
    auto [features, next_state] = lstm_->step(x, input.state);
    for (auto& u : urdbs_) features = u->forward(features);
    features = aspp_->forward(features);
    Var residual = head_->forward(features);
    Var estimate = clamp01(add(obs, residual));

    StageOutput out;
    out.estimate = estimate;
    out.next_state = next_state;
    out.rain_map_out = attention_rain_map(o, estimate.value());
    return out;
}

std::pair<Tensor, Tensor> init_priors(const Tensor& observation, const Segmenter& segmenter) {
    if (observation.rank() != 3 || observation.dim(2) != 3) {
        throw PreconditionError(msg("init_priors: observation must be {H,W,3}, got ", observation.shape_string()));
    }
    Tensor rain = Tensor::full({observation.dim(0), observation.dim(1), 1}, 0.5);
    Tensor seg = segmenter.segment(observation);
    return {std::move(rain), std::move(seg)};
}

MultiStagePipeline::MultiStagePipeline(const PipelineConfig& cfg, int seg_categories, Rng& rng)
    : cfg_(cfg), seg_categories_(seg_categories) {
    cfg.validate();
    const int sets = cfg.stage_weight_sharing ? 1 : cfg.num_stages;
    for (int i = 0; i < sets; ++i) {
        stages_.push_back(std::make_unique<StageNet>(cfg, seg_categories, rng));
        register_module(cfg.stage_weight_sharing ? std::string("shared") : msg("stage", i), *stages_.back());
    }
}

StageNet& MultiStagePipeline::stage(int k) {
    if (k < 0 || k >= cfg_.num_stages) {
        throw PreconditionError(msg("pipeline: stage index ", k, " outside [0,", cfg_.num_stages - 1, "]"));
    }
    return cfg_.stage_weight_sharing ? *stages_[0] : *stages_[static_cast<std::size_t>(k)];
}

std::vector<StageOutput> MultiStagePipeline::forward(const Tensor& observation, const Segmenter& segmenter) {
    if (observation.rank() != 3 || observation.dim(2) != 3) {
        throw PreconditionError(msg("pipeline: observation must be {H,W,3}, got ", observation.shape_string()));
    }
    const int h = observation.dim(0);
    const int w = observation.dim(1);

    Tensor rain, seg;
    try {
        auto priors = init_priors(observation, segmenter);
        rain = std::move(priors.first);
        seg = std::move(priors.second);
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw StateError(msg("pipeline: segmenter failed at stage 0: ", e.what()));
    }

    std::vector<StageOutput> outputs;
    outputs.reserve(static_cast<std::size_t>(cfg_.num_stages));
    ConvLstmState state = stage(0).initial_state(h, w);
    for (int k = 0; k < cfg_.num_stages; ++k) {
        StageInput input;
        input.observation = observation;
        input.rain_map = rain;
        input.seg_map = resize_nearest(seg, h, w);
        input.state = state;
        StageOutput out = stage(k).forward(input);
        state = out.next_state;
        rain = out.rain_map_out;
        if (k + 1 < cfg_.num_stages) {
            try {
                seg = segmenter.segment(out.estimate.value());
            } catch (const std::exception& e) {
                throw StateError(msg("pipeline: segmenter failed at stage ", k + 1, ": ", e.what()));
            }
        }
        outputs.push_back(std::move(out));
    }
    return outputs;
}

Tensor MultiStagePipeline::derain(const Tensor& observation, const Segmenter& segmenter) {
    auto outputs = forward(observation, segmenter);
    return outputs.back().estimate.value();
}

}  // namespace m2gan
