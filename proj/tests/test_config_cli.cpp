#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#ifdef M2GAN_CLI_PATH
#include <sys/wait.h>
#endif

#include "m2gan/config.hpp"
#include "m2gan/image_io.hpp"
#include "test_util.hpp"

using namespace m2gan;
namespace fs = std::filesystem;

TEST_CASE("default config is self-consistent") {
    AppConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.disc_image.in_channels == 3);
    CHECK(cfg.disc_seg.in_channels == cfg.segmenter.num_categories);
    CHECK(cfg.pipeline.num_stages == 3);
}

TEST_CASE("config json round-trips every section") {
    AppConfig cfg;
    cfg.pipeline.num_stages = 4;
    cfg.pipeline.stage_weight_sharing = false;
    cfg.pipeline.urdb.base_channels = 24;
    cfg.pipeline.aspp.dilation_rates = {2, 5, 9};
    cfg.train.epochs = 7;
    cfg.train.lr_start = 2e-3;
    cfg.train.lr_end = 2e-6;
    cfg.train.ablation = Ablation::NoSeg;
    cfg.train.adv_mode = AdvLossMode::Literal;
    cfg.train.weights.mae = 0.7;
    cfg.train.adam.weight_decay = 0.01;
    cfg.train.lookahead.sync_period = 9;
    cfg.disc_image.base_channels = 12;
    cfg.segmenter.num_categories = 4;
    cfg.disc_seg.in_channels = 4;
    cfg.backbone.tap_point = 2;
    cfg.synthesis.drop_count_max = 20;

    const AppConfig back = AppConfig::from_json(cfg.to_json());
    CHECK(back.pipeline.num_stages == 4);
    CHECK(back.pipeline.stage_weight_sharing == false);
    CHECK(back.pipeline.urdb.base_channels == 24);
    REQUIRE(back.pipeline.aspp.dilation_rates.size() == 3);
    CHECK(back.pipeline.aspp.dilation_rates[2] == 9);
    CHECK(back.train.epochs == 7);
    CHECK(back.train.lr_start == 2e-3);
    CHECK(back.train.ablation == Ablation::NoSeg);
    CHECK(back.train.adv_mode == AdvLossMode::Literal);
    CHECK(back.train.weights.mae == 0.7);
    CHECK(back.train.adam.weight_decay == 0.01);
    CHECK(back.train.lookahead.sync_period == 9);
    CHECK(back.disc_image.base_channels == 12);
    CHECK(back.segmenter.num_categories == 4);
    CHECK(back.disc_seg.in_channels == 4);
    CHECK(back.backbone.tap_point == 2);
    CHECK(back.synthesis.drop_count_max == 20);
    CHECK_NOTHROW(back.validate());
}

TEST_CASE("partial json keeps defaults and fixes the seg channel count") {
    const nlohmann::json j = {{"train", {{"epochs", 2}}}, {"segmenter", {{"num_categories", 3}}}};
    const AppConfig cfg = AppConfig::from_json(j);
    CHECK(cfg.train.epochs == 2);
    CHECK(cfg.train.batch_size == 2);  // untouched default
    CHECK(cfg.segmenter.num_categories == 3);
    CHECK(cfg.disc_seg.in_channels == 3);  // follows the segmenter when unspecified
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("dotted overrides parse typed values") {
    AppConfig cfg;
    cfg.apply_override("train.lr_start", "0.0005");
    CHECK(cfg.train.lr_start == 0.0005);

    cfg.apply_override("pipeline.num_stages", "5");
    CHECK(cfg.pipeline.num_stages == 5);

    cfg.apply_override("train.ablation", "no-seg");  // bare string value
    CHECK(cfg.train.ablation == Ablation::NoSeg);

    cfg.apply_override("train.weights.mae", "0.25");
    CHECK(cfg.train.weights.mae == 0.25);

    cfg.apply_override("pipeline.aspp.dilation_rates", "[1,2,7]");
    REQUIRE(cfg.pipeline.aspp.dilation_rates.size() == 3);
    CHECK(cfg.pipeline.aspp.dilation_rates[2] == 7);

    cfg.apply_override("pipeline.stage_weight_sharing", "false");
    CHECK(cfg.pipeline.stage_weight_sharing == false);

    CHECK_THROWS_AS(cfg.apply_override("train.no_such_knob", "1"), ConfigError);
    CHECK_THROWS_AS(cfg.apply_override("nonsense", "1"), ConfigError);
    CHECK_THROWS_AS(cfg.apply_override("train.epochs", "banana"), ConfigError);  // type clash
    CHECK_THROWS_AS(cfg.apply_override("train.ablation", "bogus"), ConfigError);
}

TEST_CASE("config files load with defaults for omitted fields") {
    const std::string dir = testutil::scratch_dir("config_files");
    CHECK_NOTHROW(load_app_config(""));  // empty path means pure defaults

    {
        std::ofstream f(dir + "/partial.json");
        f << R"({"train": {"epochs": 9, "lr_start": 0.01, "lr_end": 0.0001}})";
    }
    const AppConfig cfg = load_app_config(dir + "/partial.json");
    CHECK(cfg.train.epochs == 9);
    CHECK(cfg.train.lr_start == 0.01);
    CHECK(cfg.pipeline.num_stages == 3);  // untouched default

    CHECK_THROWS_AS(load_app_config(dir + "/absent.json"), IoError);

    {
        std::ofstream f(dir + "/broken.json");
        f << "{not json";
    }
    CHECK_THROWS_AS(load_app_config(dir + "/broken.json"), ConfigError);

    save_app_config(dir + "/saved.json", cfg);
    const AppConfig back = load_app_config(dir + "/saved.json");
    CHECK(back.train.epochs == 9);
    CHECK(back.train.lr_start == 0.01);
}

TEST_CASE("cross-field validation catches seg channel drift") {
    AppConfig cfg;
    cfg.segmenter.num_categories = 4;  // disc_seg still expects 5
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.disc_seg.in_channels = 4;
    CHECK_NOTHROW(cfg.validate());

    cfg.disc_image.in_channels = 4;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

#ifdef M2GAN_CLI_PATH

namespace {

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

CliResult run_cli(const std::string& args, const std::string& workdir) {
    const std::string out_path = workdir + "/stdout.txt";
    const std::string err_path = workdir + "/stderr.txt";
    const std::string cmd =
        std::string("cd '") + workdir + "' && '" + M2GAN_CLI_PATH + "' " + args + " >'" + out_path + "' 2>'" +
        err_path + "'";
    const int raw = std::system(cmd.c_str());
    CliResult result;
    result.code = (raw >= 0 && WIFEXITED(raw)) ? WEXITSTATUS(raw) : -1;
    result.out = testutil::read_file(out_path);
    result.err = testutil::read_file(err_path);
    return result;
}

// Small everything: keeps subprocess training in the sub-second range.
void write_tiny_config(const std::string& path) {
    std::ofstream f(path);
    f << R"({
  "pipeline": {
    "num_stages": 2,
    "urdb": {"base_channels": 8, "num_layers": 2, "growth_rate": 8},
    "aspp": {"dilation_rates": [1, 2], "out_channels": 8}
  },
  "train": {"epochs": 1, "batch_size": 4, "crop_size": 16, "perceptual_tap": 1},
  "disc_image": {"base_channels": 8, "num_blocks": 2, "rdb": {"num_layers": 2, "growth_rate": 8}},
  "disc_seg": {"base_channels": 8, "num_blocks": 2, "rdb": {"num_layers": 2, "growth_rate": 8}},
  "backbone": {"base_channels": 4},
  "synthesis": {"drop_count_min": 2, "drop_count_max": 4, "drop_radius_max": 5.0}
})";
}

nlohmann::json parse_echo(const std::string& stdout_text) {
    const std::string marker = "resolved config: ";
    const auto pos = stdout_text.find(marker);
    REQUIRE(pos != std::string::npos);
    const auto end = stdout_text.find('\n', pos);
    return nlohmann::json::parse(stdout_text.substr(pos + marker.size(), end - pos - marker.size()));
}

}  // namespace

TEST_CASE("cli rejects bad invocations with exit code 1") {
    const std::string dir = testutil::scratch_dir("cli_bad");
    CHECK(run_cli("", dir).code == 1);                       // missing subcommand
    CHECK(run_cli("--help", dir).code == 0);                 // help is a clean exit
    CHECK(run_cli("synthesize --help", dir).code == 0);
    CHECK(run_cli("frobnicate", dir).code == 1);             // unknown subcommand

    // CLI-level enum validation.
    fs::create_directories(dir + "/clean");
    const auto bad_abl = run_cli("train --data x --ablation sometimes", dir);
    CHECK(bad_abl.code == 1);

    // Config-level validation: unknown override key.
    write_image_rgb8(dir + "/clean/a.png", testutil::random_image(24, 24, 3, 1));
    const auto bad_key = run_cli("synthesize --clean clean --out data --set train.warp_speed=9", dir);
    CHECK(bad_key.code == 1);
    CHECK(bad_key.err.find("warp_speed") != std::string::npos);

    // Runtime failure: checkpoint file that does not exist.
    const auto bad_ckpt = run_cli("derain --checkpoint missing.m2g --in clean --out preds", dir);
    CHECK(bad_ckpt.code == 2);
    CHECK(bad_ckpt.err.find("missing.m2g") != std::string::npos);
}

TEST_CASE("cli precedence: overrides beat the file, flags set the seeds") {
    const std::string dir = testutil::scratch_dir("cli_precedence");
    fs::create_directories(dir + "/clean");
    write_image_rgb8(dir + "/clean/a.png", testutil::random_image(24, 24, 3, 2));
    write_tiny_config(dir + "/config.json");

    const auto res = run_cli(
        "synthesize --clean clean --out data --config config.json "
        "--set synthesis.drop_count_min=3 --seed 7",
        dir);
    REQUIRE(res.code == 0);
    const nlohmann::json echo = parse_echo(res.out);
    CHECK(echo.at("train").at("epochs") == 1);                      // from the file
    CHECK(echo.at("synthesis").at("drop_count_min") == 3);          // --set beats the file's 2
    CHECK(echo.at("synthesis").at("drop_count_max") == 4);          // file beats the default 14
    CHECK(echo.at("train").at("seed") == 7);                        // --seed reaches both consumers
    CHECK(echo.at("synthesis").at("seed") == 7);
    CHECK(res.out.find("wrote 1 pairs") != std::string::npos);

    // The dataset directory records the same resolved config.
    const AppConfig stored = load_app_config(dir + "/data/config.json");
    CHECK(stored.synthesis.drop_count_min == 3);
    CHECK(stored.train.seed == 7);
}

TEST_CASE("cli pipeline: synthesize, train, derain, evaluate") {
    const std::string dir = testutil::scratch_dir("cli_pipeline");
    fs::create_directories(dir + "/clean");
    for (int i = 0; i < 3; ++i) {
        write_image_rgb8(dir + "/clean/img" + std::to_string(i) + ".png",
                         testutil::random_image(24, 24, 3, 10 + i));
    }
    write_tiny_config(dir + "/config.json");

    const auto syn = run_cli("synthesize --clean clean --out data --config config.json --seed 5", dir);
    REQUIRE(syn.code == 0);
    CHECK(syn.out.find("wrote 3 pairs") != std::string::npos);
    CHECK(fs::exists(dir + "/data/manifest.json"));
    CHECK(fs::exists(dir + "/data/rain/img0.png"));
    CHECK(fs::exists(dir + "/data/gt/img2.png"));

    const auto train = run_cli("train --data data --run-dir run --config config.json --seed 5", dir);
    REQUIRE(train.code == 0);
    CHECK(train.out.find("trainable parameters:") != std::string::npos);
    CHECK(fs::exists(dir + "/run/config.json"));
    CHECK(fs::exists(dir + "/run/training_log.csv"));
    CHECK(fs::exists(dir + "/run/checkpoint_last.m2g"));
    CHECK(fs::exists(dir + "/run/checkpoint_epoch_0.m2g"));

    const auto derain = run_cli(
        "derain --checkpoint run/checkpoint_last.m2g --in data/rain --out preds "
        "--config config.json --dump-maps --dump-stages",
        dir);
    REQUIRE(derain.code == 0);
    CHECK(fs::exists(dir + "/preds/img0.png"));
    CHECK(fs::exists(dir + "/preds/stages/img0_stage1.png"));
    CHECK(fs::exists(dir + "/preds/stages/img0_stage2.png"));
    CHECK(fs::exists(dir + "/preds/maps/img0_rainmap1.png"));

    const auto eval = run_cli("evaluate --pred preds --gt data/gt", dir);
    REQUIRE(eval.code == 0);
    CHECK(eval.out.find("psnr_db") != std::string::npos);
    CHECK(eval.out.find("fid:") != std::string::npos);
    CHECK(fs::exists(dir + "/preds/metrics.json"));

    // Self-evaluation saturates at the psnr cap.
    const auto self_eval = run_cli("evaluate --pred data/gt --gt data/gt --report self.json", dir);
    REQUIRE(self_eval.code == 0);
    const auto report = nlohmann::json::parse(testutil::read_file(dir + "/self.json"));
    CHECK(report.at("aggregate").at("mean_psnr_db").get<double>() == 100.0);

    // Evaluation with mismatched trees is a validation failure.
    fs::create_directories(dir + "/empty");
    CHECK(run_cli("evaluate --pred empty --gt data/gt", dir).code == 1);
}

TEST_CASE("cli stage override flows from the flag into the checkpoint consumer") {
    const std::string dir = testutil::scratch_dir("cli_stages");
    fs::create_directories(dir + "/clean");
    write_image_rgb8(dir + "/clean/a.png", testutil::random_image(24, 24, 3, 3));
    write_tiny_config(dir + "/config.json");

    REQUIRE(run_cli("synthesize --clean clean --out data --config config.json", dir).code == 0);
    REQUIRE(run_cli("train --data data --run-dir run --config config.json", dir).code == 0);

    // Weight sharing lets inference unroll more stages than training used.
    const auto more = run_cli(
        "derain --checkpoint run/checkpoint_last.m2g --in data/rain --out preds3 "
        "--config config.json --stages 3 --dump-stages",
        dir);
    REQUIRE(more.code == 0);
    CHECK(fs::exists(dir + "/preds3/a_stage3.png") == false);  // side dumps live under stages/
    CHECK(fs::exists(dir + "/preds3/stages/a_stage3.png"));
}

#endif  // M2GAN_CLI_PATH
