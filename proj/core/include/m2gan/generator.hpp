#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "m2gan/blocks.hpp"
#include "m2gan/conditioning.hpp"

namespace m2gan {

struct PipelineConfig {
    int num_stages = 3;
    bool stage_weight_sharing = true;
    UrdbConfig urdb;  // base_channels doubles as the stage feature width
    AsppConfig aspp;
    int lstm_kernel = 3;

    void validate() const;
};

// Each stage runs three URDBs in sequence.
inline constexpr int kUrdbsPerStage = 3;
// Output-head weights start at this fraction of the usual init so the first
// forward stays close to the identity without zeroing upstream gradients.
inline constexpr double kHeadInitScale = 0.05;

struct StageInput {
    Tensor observation;  // {H,W,3} in [0,1]
    Tensor rain_map;     // {H,W,1}
    Tensor seg_map;      // {H,W,K}
    ConvLstmState state;
};

struct StageOutput {
    Var estimate;          // {H,W,3}, clamped to [0,1], carries the tape
    ConvLstmState next_state;
    Tensor rain_map_out;   // rain map recomputed against this estimate
};

// One generator stage: ConvLSTM coupling of the conditioned input, three
// URDBs, an ASPP head, and a 3x3 convolution emitting a residual that is
// added to the observation and clamped.
class StageNet : public Module {
public:
    StageNet(const PipelineConfig& cfg, int seg_categories, Rng& rng);

    StageOutput forward(const StageInput& input);
    ConvLstmState initial_state(int height, int width) const;

    int seg_categories() const { return seg_categories_; }
    int feature_width() const { return width_; }
    ConvLstmCell& lstm() { return *lstm_; }
    Urdb& urdb(int i) { return *urdbs_[static_cast<std::size_t>(i)]; }
    Aspp& aspp() { return *aspp_; }
    Conv2d& head() { return *head_; }

private:
    int seg_categories_;
    int width_;
    std::unique_ptr<ConvLstmCell> lstm_;
    std::vector<std::unique_ptr<Urdb>> urdbs_;
    std::unique_ptr<Aspp> aspp_;
    std::unique_ptr<Conv2d> head_;
};

// Stage-0 conditioning: a maximal-uncertainty rain map (all 0.5) and the
// segmentation of the observation itself.
std::pair<Tensor, Tensor> init_priors(const Tensor& observation, const Segmenter& segmenter);

// Recurrent multi-stage refinement. With weight sharing one StageNet serves
// every stage; otherwise each stage owns an independent parameter set.
class MultiStagePipeline : public Module {
public:
    MultiStagePipeline(const PipelineConfig& cfg, int seg_categories, Rng& rng);

    std::vector<StageOutput> forward(const Tensor& observation, const Segmenter& segmenter);
    // Final estimate only, tape discarded.
    Tensor derain(const Tensor& observation, const Segmenter& segmenter);

    int num_stages() const { return cfg_.num_stages; }
    const PipelineConfig& config() const { return cfg_; }
    int num_parameter_sets() const { return static_cast<int>(stages_.size()); }
    StageNet& stage(int k);

private:
    PipelineConfig cfg_;
    int seg_categories_;
    std::vector<std::unique_ptr<StageNet>> stages_;
};

}  // namespace m2gan
