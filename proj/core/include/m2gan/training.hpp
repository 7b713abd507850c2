#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "m2gan/data.hpp"
#include "m2gan/discriminator.hpp"
#include "m2gan/generator.hpp"
#include "m2gan/losses.hpp"
#include "m2gan/optim.hpp"

namespace m2gan {

enum class Ablation { Full, NoSeg, NoDisc };

Ablation parse_ablation(const std::string& name);
std::string ablation_name(Ablation ablation);

struct TrainConfig {
    int epochs = 5;
    double lr_start = 1e-3;
    double lr_end = 1e-5;
    int batch_size = 2;
    int crop_size = 0;  // 0 disables cropping
    Ablation ablation = Ablation::Full;
    AdvLossMode adv_mode = AdvLossMode::Standard;
    std::uint64_t seed = 17;
    LossWeights weights;
    AdamConfig adam;
    LookaheadConfig lookahead;
    int sn_iterations = 1;
    int perceptual_tap = 3;

    void validate() const;
};

// Per-step component losses; NaN marks a component skipped by ablation.
struct StepReport {
    double d_img = 0.0;
    double d_seg = 0.0;
    double g_adv = 0.0;
    double g_mae = 0.0;
    double g_perceptual = 0.0;
    double g_total = 0.0;

    bool has_d_img() const;
    bool has_d_seg() const;
    bool has_g_adv() const;
};

std::string step_report_csv_header();
std::string step_report_csv_row(int step, int epoch, double lr, const StepReport& report);

// Owns the generator, both discriminators (when not ablated away), the
// frozen perceptual backbone, the segmenter, and one Lookahead optimizer per
// trainable component. Update order per step: D^d, then D^s, then G.
class Trainer {
public:
    Trainer(const PipelineConfig& pipeline_cfg, const TrainConfig& train_cfg,
            const DiscriminatorConfig& d_img_cfg, const DiscriminatorConfig& d_seg_cfg,
            const SegmenterHandle& seg_handle, const PerceptualBackboneHandle& backbone_handle);

    StepReport train_step(const std::vector<DatasetPair>& batch, double lr);

    // Epoch loop over the manifest: shuffles, crops, logs one CSV row per
    // step, checkpoints each epoch. Returns the final epoch index run.
    int run(const DatasetManifest& manifest, const std::string& run_dir);

    void save_checkpoint(const std::string& path, int epoch) const;
    // Returns the epoch stored in the checkpoint; training resumes after it.
    int load_checkpoint(const std::string& path);

    MultiStagePipeline& generator() { return *generator_; }
    Discriminator* disc_image() { return d_img_.get(); }
    Discriminator* disc_seg() { return d_seg_.get(); }
    PerceptualBackbone& backbone() { return *backbone_; }
    Segmenter& segmenter() { return *segmenter_; }
    const TrainConfig& train_config() const { return train_cfg_; }
    const PipelineConfig& pipeline_config() const { return pipeline_cfg_; }
    std::int64_t total_parameter_count() const;
    int steps_taken() const { return step_; }

private:
    StepReport step_components(const std::vector<DatasetPair>& batch, double lr);

    PipelineConfig pipeline_cfg_;
    TrainConfig train_cfg_;
    std::unique_ptr<MultiStagePipeline> generator_;
    std::unique_ptr<Discriminator> d_img_;
    std::unique_ptr<Discriminator> d_seg_;
    std::unique_ptr<PerceptualBackbone> backbone_;
    std::unique_ptr<Segmenter> segmenter_;
    std::unique_ptr<Lookahead> opt_g_;
    std::unique_ptr<Lookahead> opt_d_img_;
    std::unique_ptr<Lookahead> opt_d_seg_;
    int step_ = 0;
};

// Reads the pipeline configuration back out of a training checkpoint so
// inference can rebuild a compatible generator.
PipelineConfig checkpoint_pipeline_config(const Archive& archive);

}  // namespace m2gan
