#include "m2gan/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "m2gan/common.hpp"
#include "m2gan/config.hpp"

namespace fs = std::filesystem;

namespace m2gan {

namespace {

constexpr double kSkipped = std::numeric_limits<double>::quiet_NaN();

double finite_or_throw(double value, const char* component, int step) {
    if (!std::isfinite(value)) {
        throw NumericError(msg("training: non-finite ", component, " loss at step ", step));
    }
    return value;
}

std::string csv_number(double v) {
    if (std::isnan(v)) return "";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

Ablation parse_ablation(const std::string& name) {
    if (name == "full") return Ablation::Full;
    if (name == "no-seg") return Ablation::NoSeg;
    if (name == "no-disc") return Ablation::NoDisc;
    throw ConfigError(msg("unknown ablation '", name, "' (expected 'full', 'no-seg' or 'no-disc')"));
}

std::string ablation_name(Ablation ablation) {
    switch (ablation) {
        case Ablation::Full: return "full";
        case Ablation::NoSeg: return "no-seg";
        case Ablation::NoDisc: return "no-disc";
    }
    return "full";
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError(msg("train: epochs ", epochs, " must be >= 1"));
    if (!(lr_end > 0.0) || lr_start < lr_end) {
        throw ConfigError(msg("train: need lr_start >= lr_end > 0, got ", lr_start, ", ", lr_end));
    }
    if (batch_size < 1) throw ConfigError(msg("train: batch_size ", batch_size, " must be >= 1"));
    if (crop_size < 0) throw ConfigError(msg("train: crop_size ", crop_size, " must be >= 0"));
    if (sn_iterations < 1) throw ConfigError(msg("train: sn_iterations ", sn_iterations, " must be >= 1"));
    weights.validate();
    adam.validate();
    lookahead.validate();
}

bool StepReport::has_d_img() const { return !std::isnan(d_img); }
bool StepReport::has_d_seg() const { return !std::isnan(d_seg); }
bool StepReport::has_g_adv() const { return !std::isnan(g_adv); }

std::string step_report_csv_header() {
    return "step,epoch,lr,d_img,d_seg,g_adv,g_mae,g_perceptual,g_total";
}

std::string step_report_csv_row(int step, int epoch, double lr, const StepReport& report) {
    std::string row = msg(step, ",", epoch, ",", csv_number(lr));
    row += "," + csv_number(report.d_img);
    row += "," + csv_number(report.d_seg);
    row += "," + csv_number(report.g_adv);
    row += "," + csv_number(report.g_mae);
    row += "," + csv_number(report.g_perceptual);
    row += "," + csv_number(report.g_total);
    return row;
}

Trainer::Trainer(const PipelineConfig& pipeline_cfg, const TrainConfig& train_cfg,
                 const DiscriminatorConfig& d_img_cfg, const DiscriminatorConfig& d_seg_cfg,
                 const SegmenterHandle& seg_handle, const PerceptualBackboneHandle& backbone_handle)
    : pipeline_cfg_(pipeline_cfg), train_cfg_(train_cfg) {
    pipeline_cfg.validate();
    train_cfg.validate();
    seg_handle.validate();

    Rng rng(train_cfg.seed);
    generator_ = std::make_unique<MultiStagePipeline>(pipeline_cfg, seg_handle.num_categories, rng);
    if (train_cfg.ablation != Ablation::NoDisc) {
        d_img_ = std::make_unique<Discriminator>(d_img_cfg, rng);
        d_img_->set_sn_policy(train_cfg.sn_iterations, true);
        if (train_cfg.ablation != Ablation::NoSeg) {
            if (d_seg_cfg.in_channels != seg_handle.num_categories) {
                throw ConfigError(msg("trainer: disc_seg.in_channels ", d_seg_cfg.in_channels,
                                      " must match segmenter categories ", seg_handle.num_categories));
            }
            d_seg_ = std::make_unique<Discriminator>(d_seg_cfg, rng);
            d_seg_->set_sn_policy(train_cfg.sn_iterations, true);
        }
    }
    backbone_ = make_backbone(backbone_handle, 3);
    segmenter_ = make_segmenter(seg_handle);

    opt_g_ = std::make_unique<Lookahead>(generator_->named_parameters(), train_cfg.adam, train_cfg.lookahead);
    if (d_img_) {
        opt_d_img_ = std::make_unique<Lookahead>(d_img_->named_parameters(), train_cfg.adam, train_cfg.lookahead);
    }
    if (d_seg_) {
        opt_d_seg_ = std::make_unique<Lookahead>(d_seg_->named_parameters(), train_cfg.adam, train_cfg.lookahead);
    }
}

std::int64_t Trainer::total_parameter_count() const {
    std::int64_t total = generator_->parameter_count();
    if (d_img_) total += d_img_->parameter_count();
    if (d_seg_) total += d_seg_->parameter_count();
    return total;
}

StepReport Trainer::train_step(const std::vector<DatasetPair>& batch, double lr) {
    if (batch.empty()) throw PreconditionError("train_step: batch must be nonempty");
    for (const auto& pair : batch) require_same_shape(pair.rain, pair.clean, "train_step");
    ++step_;
    return step_components(batch, lr);
}

StepReport Trainer::step_components(const std::vector<DatasetPair>& batch, double lr) {
    const int stages = pipeline_cfg_.num_stages;
    StepReport report;

    // One generator forward per image; every later phase reuses these taped
    // outputs, so fakes seen by D and G updates within the step agree.
    std::vector<std::vector<StageOutput>> outputs;
    outputs.reserve(batch.size());
    for (const auto& pair : batch) outputs.push_back(generator_->forward(pair.rain, *segmenter_));

    std::vector<Tensor> clean_images;
    clean_images.reserve(batch.size());
    for (const auto& pair : batch) clean_images.push_back(pair.clean);

    // Per-stage fake estimates, detached for the discriminator phases.
    std::vector<std::vector<Tensor>> fakes_by_stage(static_cast<std::size_t>(stages));
    for (int k = 0; k < stages; ++k) {
        for (const auto& outs : outputs) {
            fakes_by_stage[static_cast<std::size_t>(k)].push_back(outs[static_cast<std::size_t>(k)].estimate.value());
        }
    }

    if (d_img_) {
        d_img_->zero_grad();
        std::vector<Var> per_stage;
        for (int k = 0; k < stages; ++k) {
            per_stage.push_back(loss_disc_image(clean_images, fakes_by_stage[static_cast<std::size_t>(k)],
                                                *d_img_, train_cfg_.adv_mode));
        }
        Var loss = mean_of(per_stage);
        report.d_img = finite_or_throw(loss.value()[0], "image discriminator", step_);
        backward(loss);
        opt_d_img_->step(lr);
    } else {
        report.d_img = kSkipped;
    }

    std::vector<Tensor> real_seg_maps;
    if (d_seg_) {
        for (const auto& pair : batch) real_seg_maps.push_back(segmenter_->segment(pair.clean));
        d_seg_->zero_grad();
        std::vector<Var> per_stage;
        for (int k = 0; k < stages; ++k) {
            std::vector<Tensor> fake_maps;
            for (const Tensor& fake : fakes_by_stage[static_cast<std::size_t>(k)]) {
                fake_maps.push_back(segmenter_->segment(fake));
            }
            per_stage.push_back(loss_disc_seg(real_seg_maps, fake_maps, *d_seg_, train_cfg_.adv_mode));
        }
        Var loss = mean_of(per_stage);
        report.d_seg = finite_or_throw(loss.value()[0], "segmentation discriminator", step_);
        backward(loss);
        opt_d_seg_->step(lr);
    } else {
        report.d_seg = kSkipped;
    }

    generator_->zero_grad();
    LossWeights weights = train_cfg_.weights;
    if (!d_img_) weights.adversarial = 0.0;

    std::vector<Var> per_stage_total, per_stage_mae, per_stage_perc, per_stage_adv;
    for (int k = 0; k < stages; ++k) {
        std::vector<Var> stage_fakes;
        for (const auto& outs : outputs) stage_fakes.push_back(outs[static_cast<std::size_t>(k)].estimate);

        Var adv;
        if (d_img_ && d_seg_) {
            std::vector<Var> fake_seg_maps;
            for (const Var& fake : stage_fakes) fake_seg_maps.push_back(segmenter_->segment_soft(fake));
            adv = loss_gen_adv(clean_images, stage_fakes, real_seg_maps, fake_seg_maps, *d_img_, *d_seg_,
                               train_cfg_.adv_mode);
        } else if (d_img_) {
            adv = loss_gen_adv_image_only(clean_images, stage_fakes, *d_img_, train_cfg_.adv_mode);
        } else {
            adv = Var::leaf(Tensor::scalar(0.0));
        }

        Var mae = loss_mae(stage_fakes, clean_images);
        Var perc = loss_perceptual(stage_fakes, clean_images, *backbone_, train_cfg_.perceptual_tap);
        Var total = add(add(scale(mae, weights.mae), scale(perc, weights.perceptual)),
                        scale(adv, weights.adversarial));
        per_stage_total.push_back(total);
        per_stage_mae.push_back(mae);
        per_stage_perc.push_back(perc);
        per_stage_adv.push_back(adv);
    }
    Var g_loss = mean_of(per_stage_total);
    report.g_mae = finite_or_throw(mean_of(per_stage_mae).value()[0], "generator MAE", step_);
    report.g_perceptual = finite_or_throw(mean_of(per_stage_perc).value()[0], "generator perceptual", step_);
    report.g_adv = d_img_ ? finite_or_throw(mean_of(per_stage_adv).value()[0], "generator adversarial", step_)
                          : kSkipped;
    report.g_total = finite_or_throw(g_loss.value()[0], "generator total", step_);
    backward(g_loss);
    opt_g_->step(lr);
    return report;
}

int Trainer::run(const DatasetManifest& manifest, const std::string& run_dir) {
    if (manifest.pairs.empty()) throw ValidationError("training: empty manifest");
    fs::create_directories(run_dir);
    const fs::path log_path = fs::path(run_dir) / "training_log.csv";
    const bool fresh_log = !fs::exists(log_path) || step_ == 0;
    std::ofstream log(log_path, fresh_log ? std::ios::trunc : std::ios::app);
    if (!log) throw IoError(msg("cannot write '", log_path.string(), "'"));
    if (fresh_log) log << step_report_csv_header() << "\n";

    std::vector<DatasetPair> loaded;
    loaded.reserve(manifest.pairs.size());
    for (const auto& ref : manifest.pairs) loaded.push_back(load_pair(ref));

    const int start_epoch = step_ / std::max(1, (manifest.size() + train_cfg_.batch_size - 1) / train_cfg_.batch_size);
    int epoch = start_epoch;
    for (; epoch < train_cfg_.epochs; ++epoch) {
        const double lr = lr_schedule(static_cast<double>(epoch), train_cfg_.epochs, train_cfg_.lr_start,
                                      train_cfg_.lr_end);
        std::vector<int> order(loaded.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        Rng shuffle_rng(Rng::derive_seed(train_cfg_.seed, 0x5Au + static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<int>(i) - 1))]);
        }
        for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(train_cfg_.batch_size)) {
            std::vector<DatasetPair> batch;
            for (std::size_t i = begin; i < std::min(order.size(), begin + static_cast<std::size_t>(train_cfg_.batch_size));
                 ++i) {
                const DatasetPair& src = loaded[static_cast<std::size_t>(order[i])];
                if (train_cfg_.crop_size > 0) {
                    batch.push_back(random_crop_pair(
                        src, train_cfg_.crop_size,
                        Rng::derive_seed(train_cfg_.seed, (static_cast<std::uint64_t>(epoch) << 20) ^ i)));
                } else {
                    batch.push_back(src);
                }
            }
            const StepReport report = train_step(batch, lr);
            log << step_report_csv_row(step_, epoch, lr, report) << "\n";
        }
        log.flush();
        save_checkpoint((fs::path(run_dir) / msg("checkpoint_epoch_", epoch, ".m2g")).string(), epoch);
        save_checkpoint((fs::path(run_dir) / "checkpoint_last.m2g").string(), epoch);
    }
    return epoch - 1;
}

void Trainer::save_checkpoint(const std::string& path, int epoch) const {
    nlohmann::json manifest;
    manifest["format_version"] = kArchiveVersion;
    manifest["kind"] = "m2gan-training";
    manifest["epoch"] = epoch;
    manifest["step"] = step_;
    manifest["seed"] = train_cfg_.seed;
    manifest["pipeline"] = pipeline_to_json(pipeline_cfg_);
    manifest["train"] = train_to_json(train_cfg_);
    manifest["seg_categories"] = generator_->stage(0).seg_categories();

    NamedArrays arrays;
    append_module_arrays(*generator_, "generator", arrays);
    append_module_arrays(*backbone_, "backbone", arrays);
    if (d_img_) append_module_arrays(*d_img_, "d_img", arrays);
    if (d_seg_) append_module_arrays(*d_seg_, "d_seg", arrays);
    for (auto& [name, tensor] : opt_g_->state_arrays("opt_g")) arrays.emplace_back(name, tensor);
    if (opt_d_img_) {
        for (auto& [name, tensor] : opt_d_img_->state_arrays("opt_d_img")) arrays.emplace_back(name, tensor);
    }
    if (opt_d_seg_) {
        for (auto& [name, tensor] : opt_d_seg_->state_arrays("opt_d_seg")) arrays.emplace_back(name, tensor);
    }
    save_archive(path, manifest, arrays);
}

int Trainer::load_checkpoint(const std::string& path) {
    const Archive archive = load_archive(path);
    if (archive.manifest.value("kind", "") != "m2gan-training") {
        throw IoError(msg("checkpoint '", path, "' is not a training checkpoint"));
    }
    restore_module_arrays(*generator_, archive, "generator");
    restore_module_arrays(*backbone_, archive, "backbone");
    if (d_img_) restore_module_arrays(*d_img_, archive, "d_img");
    if (d_seg_) restore_module_arrays(*d_seg_, archive, "d_seg");
    opt_g_->restore_state(archive, "opt_g");
    if (opt_d_img_) opt_d_img_->restore_state(archive, "opt_d_img");
    if (opt_d_seg_) opt_d_seg_->restore_state(archive, "opt_d_seg");
    step_ = archive.manifest.value("step", 0);
    return archive.manifest.value("epoch", 0);
}

PipelineConfig checkpoint_pipeline_config(const Archive& archive) {
    if (!archive.manifest.contains("pipeline")) {
        throw IoError("checkpoint: manifest has no pipeline configuration");
    }
    return pipeline_from_json(archive.manifest.at("pipeline"));
}

}  // namespace m2gan
