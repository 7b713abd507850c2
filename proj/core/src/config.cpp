#include "m2gan/config.hpp"

#include <fstream>

#include "m2gan/common.hpp"

namespace m2gan {

namespace {

nlohmann::json rdb_to_json(const RdbConfig& cfg) {
    return {{"num_layers", cfg.num_layers}, {"growth_rate", cfg.growth_rate}};
}

RdbConfig rdb_from_json(const nlohmann::json& j, RdbConfig cfg) {
    cfg.num_layers = j.value("num_layers", cfg.num_layers);
    cfg.growth_rate = j.value("growth_rate", cfg.growth_rate);
    return cfg;
}

}  // namespace

nlohmann::json pipeline_to_json(const PipelineConfig& cfg) {
    nlohmann::json j;
    j["num_stages"] = cfg.num_stages;
    j["stage_weight_sharing"] = cfg.stage_weight_sharing;
    j["lstm_kernel"] = cfg.lstm_kernel;
    j["urdb"] = rdb_to_json(cfg.urdb.rdb);
    j["urdb"]["base_channels"] = cfg.urdb.base_channels;
    j["aspp"]["dilation_rates"] = cfg.aspp.dilation_rates;
    j["aspp"]["out_channels"] = cfg.aspp.out_channels;
    j["aspp"]["include_global_pool"] = cfg.aspp.include_global_pool;
    return j;
}

PipelineConfig pipeline_from_json(const nlohmann::json& j) {
    PipelineConfig cfg;
    cfg.num_stages = j.value("num_stages", cfg.num_stages);
    cfg.stage_weight_sharing = j.value("stage_weight_sharing", cfg.stage_weight_sharing);
    cfg.lstm_kernel = j.value("lstm_kernel", cfg.lstm_kernel);
    if (j.contains("urdb")) {
        const auto& u = j.at("urdb");
        cfg.urdb.rdb = rdb_from_json(u, cfg.urdb.rdb);
        cfg.urdb.base_channels = u.value("base_channels", cfg.urdb.base_channels);
    }
    if (j.contains("aspp")) {
        const auto& a = j.at("aspp");
        cfg.aspp.dilation_rates = a.value("dilation_rates", cfg.aspp.dilation_rates);
        cfg.aspp.out_channels = a.value("out_channels", cfg.aspp.out_channels);
        cfg.aspp.include_global_pool = a.value("include_global_pool", cfg.aspp.include_global_pool);
    }
    return cfg;
}

nlohmann::json train_to_json(const TrainConfig& cfg) {
    nlohmann::json j;
    j["epochs"] = cfg.epochs;
    j["lr_start"] = cfg.lr_start;
    j["lr_end"] = cfg.lr_end;
    j["batch_size"] = cfg.batch_size;
    j["crop_size"] = cfg.crop_size;
    j["ablation"] = ablation_name(cfg.ablation);
    j["adv_mode"] = adv_mode_name(cfg.adv_mode);
    j["seed"] = cfg.seed;
    j["weights"] = {{"mae", cfg.weights.mae},
                    {"perceptual", cfg.weights.perceptual},
                    {"adversarial", cfg.weights.adversarial}};
    j["adam"] = {{"beta1", cfg.adam.beta1},
                 {"beta2", cfg.adam.beta2},
                 {"eps", cfg.adam.eps},
                 {"weight_decay", cfg.adam.weight_decay}};
    j["lookahead"] = {{"sync_period", cfg.lookahead.sync_period}, {"alpha", cfg.lookahead.alpha}};
    j["sn_iterations"] = cfg.sn_iterations;
    j["perceptual_tap"] = cfg.perceptual_tap;
    return j;
}

TrainConfig train_from_json(const nlohmann::json& j) {
    TrainConfig cfg;
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.lr_start = j.value("lr_start", cfg.lr_start);
    cfg.lr_end = j.value("lr_end", cfg.lr_end);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.crop_size = j.value("crop_size", cfg.crop_size);
    if (j.contains("ablation")) cfg.ablation = parse_ablation(j.at("ablation").get<std::string>());
    if (j.contains("adv_mode")) cfg.adv_mode = parse_adv_mode(j.at("adv_mode").get<std::string>());
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("weights")) {
        const auto& w = j.at("weights");
        cfg.weights.mae = w.value("mae", cfg.weights.mae);
        cfg.weights.perceptual = w.value("perceptual", cfg.weights.perceptual);
        cfg.weights.adversarial = w.value("adversarial", cfg.weights.adversarial);
    }
    if (j.contains("adam")) {
        const auto& a = j.at("adam");
        cfg.adam.beta1 = a.value("beta1", cfg.adam.beta1);
        cfg.adam.beta2 = a.value("beta2", cfg.adam.beta2);
        cfg.adam.eps = a.value("eps", cfg.adam.eps);
        cfg.adam.weight_decay = a.value("weight_decay", cfg.adam.weight_decay);
    }
    if (j.contains("lookahead")) {
        const auto& l = j.at("lookahead");
        cfg.lookahead.sync_period = l.value("sync_period", cfg.lookahead.sync_period);
        cfg.lookahead.alpha = l.value("alpha", cfg.lookahead.alpha);
    }
    cfg.sn_iterations = j.value("sn_iterations", cfg.sn_iterations);
    cfg.perceptual_tap = j.value("perceptual_tap", cfg.perceptual_tap);
    return cfg;
}

nlohmann::json discriminator_to_json(const DiscriminatorConfig& cfg) {
    nlohmann::json j;
    j["in_channels"] = cfg.in_channels;
    j["base_channels"] = cfg.base_channels;
    j["num_blocks"] = cfg.num_blocks;
    j["rdb"] = rdb_to_json(cfg.rdb);
    return j;
}

DiscriminatorConfig discriminator_from_json(const nlohmann::json& j) {
    DiscriminatorConfig cfg;
    cfg.in_channels = j.value("in_channels", cfg.in_channels);
    cfg.base_channels = j.value("base_channels", cfg.base_channels);
    cfg.num_blocks = j.value("num_blocks", cfg.num_blocks);
    if (j.contains("rdb")) cfg.rdb = rdb_from_json(j.at("rdb"), cfg.rdb);
    return cfg;
}

nlohmann::json segmenter_to_json(const SegmenterHandle& handle) {
    nlohmann::json j;
    j["kind"] = handle.kind == SegmenterHandle::Kind::Toy ? "toy" : "import";
    j["num_categories"] = handle.num_categories;
    j["seed"] = handle.seed;
    j["label_path"] = handle.label_path;
    return j;
}

SegmenterHandle segmenter_from_json(const nlohmann::json& j) {
    SegmenterHandle handle;
    if (j.contains("kind")) {
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "toy") {
            handle.kind = SegmenterHandle::Kind::Toy;
        } else if (kind == "import") {
            handle.kind = SegmenterHandle::Kind::ExternalImport;
        } else {
            throw ConfigError(msg("unknown segmenter kind '", kind, "' (expected 'toy' or 'import')"));
        }
    }
    handle.num_categories = j.value("num_categories", handle.num_categories);
    handle.seed = j.value("seed", handle.seed);
    handle.label_path = j.value("label_path", handle.label_path);
    return handle;
}

nlohmann::json backbone_to_json(const PerceptualBackboneHandle& handle) {
    nlohmann::json j;
    j["kind"] = handle.kind == PerceptualBackboneHandle::Kind::FixedRandom ? "fixed-random" : "external";
    j["tap_point"] = handle.tap_point;
    j["base_channels"] = handle.base_channels;
    j["seed"] = handle.seed;
    j["weights_path"] = handle.weights_path;
    return j;
}

PerceptualBackboneHandle backbone_from_json(const nlohmann::json& j) {
    PerceptualBackboneHandle handle;
    if (j.contains("kind")) {
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "fixed-random") {
            handle.kind = PerceptualBackboneHandle::Kind::FixedRandom;
        } else if (kind == "external") {
            handle.kind = PerceptualBackboneHandle::Kind::ExternalWeights;
        } else {
            throw ConfigError(msg("unknown backbone kind '", kind, "' (expected 'fixed-random' or 'external')"));
        }
    }
    handle.tap_point = j.value("tap_point", handle.tap_point);
    handle.base_channels = j.value("base_channels", handle.base_channels);
    handle.seed = j.value("seed", handle.seed);
    handle.weights_path = j.value("weights_path", handle.weights_path);
    return handle;
}

nlohmann::json synthesis_to_json(const RainSynthesisConfig& cfg) {
    nlohmann::json j;
    j["drop_count_min"] = cfg.drop_count_min;
    j["drop_count_max"] = cfg.drop_count_max;
    j["drop_radius_min"] = cfg.drop_radius_min;
    j["drop_radius_max"] = cfg.drop_radius_max;
    j["flow_streak_prob"] = cfg.flow_streak_prob;
    j["displacement_gain"] = cfg.displacement_gain;
    j["blur_sigma_min"] = cfg.blur_sigma_min;
    j["blur_sigma_max"] = cfg.blur_sigma_max;
    j["seed"] = cfg.seed;
    return j;
}

RainSynthesisConfig synthesis_from_json(const nlohmann::json& j) {
    RainSynthesisConfig cfg;
    cfg.drop_count_min = j.value("drop_count_min", cfg.drop_count_min);
    cfg.drop_count_max = j.value("drop_count_max", cfg.drop_count_max);
    cfg.drop_radius_min = j.value("drop_radius_min", cfg.drop_radius_min);
    cfg.drop_radius_max = j.value("drop_radius_max", cfg.drop_radius_max);
    cfg.flow_streak_prob = j.value("flow_streak_prob", cfg.flow_streak_prob);
    cfg.displacement_gain = j.value("displacement_gain", cfg.displacement_gain);
    cfg.blur_sigma_min = j.value("blur_sigma_min", cfg.blur_sigma_min);
    cfg.blur_sigma_max = j.value("blur_sigma_max", cfg.blur_sigma_max);
    cfg.seed = j.value("seed", cfg.seed);
    return cfg;
}

AppConfig::AppConfig() {
    disc_image.in_channels = 3;
    disc_seg.in_channels = segmenter.num_categories;
}

nlohmann::json AppConfig::to_json() const {
    nlohmann::json j;
    j["pipeline"] = pipeline_to_json(pipeline);
    j["train"] = train_to_json(train);
    j["disc_image"] = discriminator_to_json(disc_image);
    j["disc_seg"] = discriminator_to_json(disc_seg);
    j["segmenter"] = segmenter_to_json(segmenter);
    j["backbone"] = backbone_to_json(backbone);
    j["synthesis"] = synthesis_to_json(synthesis);
    return j;
}

AppConfig AppConfig::from_json(const nlohmann::json& j) {
    AppConfig cfg;
    if (j.contains("pipeline")) cfg.pipeline = pipeline_from_json(j.at("pipeline"));
    if (j.contains("train")) cfg.train = train_from_json(j.at("train"));
    if (j.contains("disc_image")) cfg.disc_image = discriminator_from_json(j.at("disc_image"));
    if (j.contains("segmenter")) cfg.segmenter = segmenter_from_json(j.at("segmenter"));
    if (j.contains("disc_seg")) {
        cfg.disc_seg = discriminator_from_json(j.at("disc_seg"));
        if (!j.at("disc_seg").contains("in_channels")) cfg.disc_seg.in_channels = cfg.segmenter.num_categories;
    } else {
        cfg.disc_seg.in_channels = cfg.segmenter.num_categories;
    }
    if (j.contains("backbone")) cfg.backbone = backbone_from_json(j.at("backbone"));
    if (j.contains("synthesis")) cfg.synthesis = synthesis_from_json(j.at("synthesis"));
    return cfg;
}

void AppConfig::apply_override(const std::string& key, const std::string& value) {
    nlohmann::json j = to_json();
    std::string pointer = "/" + key;
    for (char& c : pointer) {
        if (c == '.') c = '/';
    }
    const nlohmann::json::json_pointer ptr(pointer);
    if (!j.contains(ptr)) {
        throw ConfigError(msg("unknown config key '", key, "'"));
    }
    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(value);
    } catch (const nlohmann::json::exception&) {
        parsed = value;  // bare strings are legal values
    }
    j[ptr] = parsed;
    try {
        *this = from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(msg("override '", key, "=", value, "' has the wrong type: ", e.what()));
    }
}

void AppConfig::validate() const {
    pipeline.validate();
    train.validate();
    disc_image.validate();
    disc_seg.validate();
    segmenter.validate();
    backbone.validate();
    if (disc_image.in_channels != 3) {
        throw ConfigError(msg("disc_image.in_channels must be 3, got ", disc_image.in_channels));
    }
    if (disc_seg.in_channels != segmenter.num_categories) {
        throw ConfigError(msg("disc_seg.in_channels ", disc_seg.in_channels,
                              " must match segmenter.num_categories ", segmenter.num_categories));
    }
}

AppConfig load_app_config(const std::string& path) {
    if (path.empty()) return AppConfig{};
    std::ifstream is(path);
    if (!is) throw IoError(msg("cannot open config '", path, "'"));
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(msg("cannot parse config '", path, "': ", e.what()));
    }
    try {
        return AppConfig::from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(msg("config '", path, "' has invalid fields: ", e.what()));
    }
}

void save_app_config(const std::string& path, const AppConfig& cfg) {
    std::ofstream os(path);
    if (!os) throw IoError(msg("cannot write config '", path, "'"));
    os << cfg.to_json().dump(2) << "\n";
}

}  // namespace m2gan
