#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "m2gan/data.hpp"
#include "m2gan/discriminator.hpp"
#include "m2gan/generator.hpp"
#include "m2gan/losses.hpp"
#include "m2gan/training.hpp"

namespace m2gan {

nlohmann::json pipeline_to_json(const PipelineConfig& cfg);
PipelineConfig pipeline_from_json(const nlohmann::json& j);

nlohmann::json train_to_json(const TrainConfig& cfg);
TrainConfig train_from_json(const nlohmann::json& j);

nlohmann::json discriminator_to_json(const DiscriminatorConfig& cfg);
DiscriminatorConfig discriminator_from_json(const nlohmann::json& j);

nlohmann::json segmenter_to_json(const SegmenterHandle& handle);
SegmenterHandle segmenter_from_json(const nlohmann::json& j);

nlohmann::json backbone_to_json(const PerceptualBackboneHandle& handle);
PerceptualBackboneHandle backbone_from_json(const nlohmann::json& j);

nlohmann::json synthesis_to_json(const RainSynthesisConfig& cfg);
RainSynthesisConfig synthesis_from_json(const nlohmann::json& j);

// The full run configuration: defaults, overridden by a config file,
// overridden again by command-line key=value pairs.
struct AppConfig {
    PipelineConfig pipeline;
    TrainConfig train;
    DiscriminatorConfig disc_image;
    DiscriminatorConfig disc_seg;
    SegmenterHandle segmenter;
    PerceptualBackboneHandle backbone;
    RainSynthesisConfig synthesis;

    AppConfig();

    nlohmann::json to_json() const;
    static AppConfig from_json(const nlohmann::json& j);
    // Dotted key ("train.lr_start"); unknown keys raise ConfigError.
    void apply_override(const std::string& key, const std::string& value);
    void validate() const;
};

AppConfig load_app_config(const std::string& path);
void save_app_config(const std::string& path, const AppConfig& cfg);

}  // namespace m2gan
