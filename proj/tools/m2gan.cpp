// Single-binary entry point: synthesize | train | derain | evaluate.
// Config precedence: --set overrides > dedicated flags parity (see below)
// > config file > built-in defaults; every run echoes the resolved config.
#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "m2gan/checkpoint.hpp"
#include "m2gan/config.hpp"
#include "m2gan/data.hpp"
#include "m2gan/image_io.hpp"
#include "m2gan/metrics.hpp"
#include "m2gan/training.hpp"

namespace fs = std::filesystem;
using namespace m2gan;

namespace {

struct CommonFlags {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<int> stages;
    std::optional<std::string> ablation;
    std::optional<std::string> adv_mode;
    bool deterministic = false;  // runs are single-threaded and seeded regardless
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "JSON config file; omitted fields keep defaults");
    cmd->add_option("--set", flags.overrides, "dotted-key override, e.g. --set train.lr_start=0.001")
        ->type_name("KEY=VALUE");
    cmd->add_option("--seed", flags.seed, "seed applied to training and synthesis");
    cmd->add_option("--stages", flags.stages, "recurrent stage count");
    cmd->add_option("--ablation", flags.ablation, "full | no-seg | no-disc")
        ->check(CLI::IsMember({"full", "no-seg", "no-disc"}));
    cmd->add_option("--adv-mode", flags.adv_mode, "standard | literal")
        ->check(CLI::IsMember({"standard", "literal"}));
    cmd->add_flag("--deterministic", flags.deterministic, "assert deterministic execution (always on)");
}

AppConfig resolve_config(const CommonFlags& flags) {
    AppConfig cfg = load_app_config(flags.config_path);
    for (const std::string& kv : flags.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError(msg("--set expects KEY=VALUE, got '", kv, "'"));
        cfg.apply_override(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (flags.seed) {
        cfg.train.seed = *flags.seed;
        cfg.synthesis.seed = *flags.seed;
    }
    if (flags.stages) cfg.pipeline.num_stages = *flags.stages;
    if (flags.ablation) cfg.train.ablation = parse_ablation(*flags.ablation);
    if (flags.adv_mode) cfg.train.adv_mode = parse_adv_mode(*flags.adv_mode);
    cfg.validate();
    return cfg;
}

void echo_config(const AppConfig& cfg) {
    std::cout << "resolved config: " << cfg.to_json().dump() << "\n";
}

std::vector<std::string> list_png_stems(const std::string& dir) {
    if (!fs::is_directory(dir)) throw IoError(msg("'", dir, "' is not a directory"));
    std::vector<std::string> stems;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") {
            stems.push_back(entry.path().stem().string());
        }
    }
    std::sort(stems.begin(), stems.end());
    return stems;
}

int cmd_synthesize(const CommonFlags& flags, const std::string& clean_dir, const std::string& out_dir,
                   const std::string& split) {
    const AppConfig cfg = resolve_config(flags);
    echo_config(cfg);
    const std::vector<std::string> stems = list_png_stems(clean_dir);
    if (stems.empty()) throw ValidationError(msg("no .png images in '", clean_dir, "'"));

    fs::create_directories(fs::path(out_dir) / "rain");
    fs::create_directories(fs::path(out_dir) / "gt");
    save_app_config((fs::path(out_dir) / "config.json").string(), cfg);

    DatasetManifest manifest;
    manifest.split = split;
    for (std::size_t i = 0; i < stems.size(); ++i) {
        const std::string in_path = (fs::path(clean_dir) / (stems[i] + ".png")).string();
        Tensor clean;
        try {
            clean = read_image_rgb8(in_path);
        } catch (const Error& e) {
            std::cerr << "warning: skipping '" << in_path << "': " << e.what() << "\n";
            continue;
        }
        RainSynthesisConfig syn = cfg.synthesis;
        syn.seed = Rng::derive_seed(cfg.synthesis.seed, static_cast<std::uint64_t>(i));
        syn.validate(clean.height(), clean.width());
        const Tensor rain = synthesize_raindrops(clean, syn);
        write_image_rgb8((fs::path(out_dir) / "rain" / (stems[i] + ".png")).string(), rain);
        write_image_rgb8((fs::path(out_dir) / "gt" / (stems[i] + ".png")).string(), clean);
        DatasetPairRef ref;
        ref.id = stems[i];
        ref.rain_path = (fs::path(out_dir) / "rain" / (stems[i] + ".png")).string();
        ref.clean_path = (fs::path(out_dir) / "gt" / (stems[i] + ".png")).string();
        manifest.pairs.push_back(ref);
    }
    if (manifest.pairs.empty()) throw ValidationError("no readable inputs; zero pairs written");
    save_manifest(out_dir, manifest);
    std::cout << "wrote " << manifest.size() << " pairs to " << out_dir << "\n";
    return 0;
}

int cmd_train(const CommonFlags& flags, const std::string& data_dir, const std::string& run_dir,
              const std::string& resume_path) {
    const AppConfig cfg = resolve_config(flags);
    echo_config(cfg);
    const DatasetManifest manifest = load_manifest(data_dir);

    fs::create_directories(run_dir);
    save_app_config((fs::path(run_dir) / "config.json").string(), cfg);

    Trainer trainer(cfg.pipeline, cfg.train, cfg.disc_image, cfg.disc_seg, cfg.segmenter, cfg.backbone);
    std::cout << "trainable parameters: " << trainer.total_parameter_count() << "\n";
    if (!resume_path.empty()) {
        const int stored = trainer.load_checkpoint(resume_path);
        std::cout << "resumed from '" << resume_path << "' after epoch " << stored << "\n";
    }
    const int final_epoch = trainer.run(manifest, run_dir);
    std::cout << "training finished at epoch " << final_epoch << "; run dir " << run_dir << "\n";
    return 0;
}

int cmd_derain(const CommonFlags& flags, const std::string& checkpoint_path, const std::string& in_dir,
               const std::string& out_dir, bool dump_maps, bool dump_stages) {
    const AppConfig cfg = resolve_config(flags);
    echo_config(cfg);

    const Archive archive = load_archive(checkpoint_path);
    PipelineConfig pipeline_cfg = checkpoint_pipeline_config(archive);
    if (flags.stages) pipeline_cfg.num_stages = *flags.stages;
    pipeline_cfg.validate();
    const int seg_categories = archive.manifest.value("seg_categories", cfg.segmenter.num_categories);
    SegmenterHandle seg_handle = cfg.segmenter;
    if (seg_handle.num_categories != seg_categories) {
        throw ConfigError(msg("checkpoint was trained with ", seg_categories,
                              " segmentation categories but the config requests ",
                              seg_handle.num_categories));
    }

    Rng rng(cfg.train.seed);
    MultiStagePipeline generator(pipeline_cfg, seg_categories, rng);
    restore_module_arrays(generator, archive, "generator");
    const auto segmenter = make_segmenter(seg_handle);

    const std::vector<std::string> stems = list_png_stems(in_dir);
    if (stems.empty()) throw ValidationError(msg("no .png images in '", in_dir, "'"));
    fs::create_directories(out_dir);
    // Side outputs go to subdirectories so the top level stays a clean
    // prediction tree that evaluate can consume directly.
    if (dump_stages) fs::create_directories(fs::path(out_dir) / "stages");
    if (dump_maps) fs::create_directories(fs::path(out_dir) / "maps");

    for (const std::string& stem : stems) {
        const Tensor rain = read_image_rgb8((fs::path(in_dir) / (stem + ".png")).string());
        const std::vector<StageOutput> outputs = generator.forward(rain, *segmenter);
        write_image_rgb8((fs::path(out_dir) / (stem + ".png")).string(), outputs.back().estimate.value());
        if (dump_stages) {
            for (std::size_t k = 0; k < outputs.size(); ++k) {
                write_image_rgb8((fs::path(out_dir) / "stages" / msg(stem, "_stage", k + 1, ".png")).string(),
                                 outputs[k].estimate.value());
            }
        }
        if (dump_maps) {
            for (std::size_t k = 0; k < outputs.size(); ++k) {
                write_image_gray8((fs::path(out_dir) / "maps" / msg(stem, "_rainmap", k + 1, ".png")).string(),
                                  outputs[k].rain_map_out);
            }
        }
    }
    std::cout << "derained " << stems.size() << " images into " << out_dir << "\n";
    return 0;
}

int cmd_evaluate(const CommonFlags& flags, const std::string& pred_dir, const std::string& gt_dir,
                 std::string report_path) {
    const AppConfig cfg = resolve_config(flags);
    echo_config(cfg);
    Embedder embedder;
    MetricReport report = evaluate_dirs(pred_dir, gt_dir, embedder);
    std::cout << report.to_table();
    if (report_path.empty()) report_path = (fs::path(pred_dir) / "metrics.json").string();
    std::ofstream out(report_path);
    if (!out) throw IoError(msg("cannot write report '", report_path, "'"));
    out << report.to_json().dump(2) << "\n";
    std::cout << "report written to " << report_path << "\n";
    return 0;
}

int classify_exit(const Error& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ValidationError*>(&e) ||
        dynamic_cast<const PreconditionError*>(&e)) {
        return 1;
    }
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-stage multi-task raindrop removal"};
    app.require_subcommand(1);

    CommonFlags syn_flags, train_flags, derain_flags, eval_flags;

    auto* syn = app.add_subcommand("synthesize", "render raindrop degradations over clean images");
    std::string syn_clean, syn_out, syn_split = "train";
    syn->add_option("--clean", syn_clean, "directory of clean .png images")->required();
    syn->add_option("--out", syn_out, "output dataset root (rain/, gt/, manifest.json)")->required();
    syn->add_option("--split", syn_split, "split name recorded in the manifest");
    add_common_flags(syn, syn_flags);

    auto* train = app.add_subcommand("train", "train the multi-stage pipeline");
    std::string train_data, train_run = "runs/default", train_resume;
    train->add_option("--data", train_data, "dataset root with rain/, gt/")->required();
    train->add_option("--run-dir", train_run, "output directory for logs and checkpoints");
    train->add_option("--resume", train_resume, "checkpoint to continue from");
    add_common_flags(train, train_flags);

    auto* derain = app.add_subcommand("derain", "run inference with a trained checkpoint");
    std::string dr_ckpt, dr_in, dr_out;
    bool dr_dump_maps = false, dr_dump_stages = false;
    derain->add_option("--checkpoint", dr_ckpt, "training checkpoint archive")->required();
    derain->add_option("--in", dr_in, "directory of rainy .png images")->required();
    derain->add_option("--out", dr_out, "directory for restored images")->required();
    derain->add_flag("--dump-maps", dr_dump_maps, "write one rain map per stage per image");
    derain->add_flag("--dump-stages", dr_dump_stages, "write every intermediate stage estimate");
    add_common_flags(derain, derain_flags);

    auto* eval = app.add_subcommand("evaluate", "PSNR/SSIM/FID between prediction and reference trees");
    std::string ev_pred, ev_gt, ev_report;
    eval->add_option("--pred", ev_pred, "directory of predicted .png images")->required();
    eval->add_option("--gt", ev_gt, "directory of reference .png images")->required();
    eval->add_option("--report", ev_report, "report JSON path (default <pred>/metrics.json)");
    add_common_flags(eval, eval_flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (syn->parsed()) return cmd_synthesize(syn_flags, syn_clean, syn_out, syn_split);
        if (train->parsed()) return cmd_train(train_flags, train_data, train_run, train_resume);
        if (derain->parsed()) return cmd_derain(derain_flags, dr_ckpt, dr_in, dr_out, dr_dump_maps, dr_dump_stages);
        if (eval->parsed()) return cmd_evaluate(eval_flags, ev_pred, ev_gt, ev_report);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return classify_exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
