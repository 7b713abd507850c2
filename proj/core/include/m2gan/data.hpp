#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "m2gan/random.hpp"
#include "m2gan/tensor.hpp"

namespace m2gan {

// Synthetic windscreen raindrops: filled ellipses that resample the scene
// through a flipped, shifted coordinate field (a crude refraction proxy),
// optionally elongated into directional flow streaks, each with its own blur.
struct RainSynthesisConfig {
    int drop_count_min = 6;
    int drop_count_max = 14;
    double drop_radius_min = 2.0;   // semi-axis, pixels
    double drop_radius_max = 6.0;
    double flow_streak_prob = 0.25;
    double displacement_gain = 2.0;  // downward source shift at the drop center, pixels
    double blur_sigma_min = 0.4;
    double blur_sigma_max = 1.2;
    std::uint64_t seed = 0;

    void validate(int height, int width) const;
};

// Streak ellipses stretch their vertical semi-axis by this factor.
inline constexpr double kStreakElongation = 3.0;

struct RainDrop {
    double cx, cy;    // center, image coordinates (x right, y down)
    double a, b;      // semi-axes before rotation
    double theta;     // rotation, radians; 0 for round drops
    double sigma;     // per-drop blur
    bool streak;
};

Tensor synthesize_raindrops(const Tensor& clean, const RainSynthesisConfig& cfg);
// Introspective overload: mask_out (if non-null) receives a {H,W,1} union
// mask of all drops; drops_out receives the drawn drop parameters.
Tensor synthesize_raindrops(const Tensor& clean, const RainSynthesisConfig& cfg, Tensor* mask_out,
                            std::vector<RainDrop>* drops_out);

// Separable Gaussian blur with reflected borders; sigma < 0.05 is identity.
Tensor gaussian_blur(const Tensor& image, double sigma);
// Bilinear sample with clamped coordinates, one channel.
double sample_bilinear(const Tensor& image, double x, double y, int channel);

struct DatasetPairRef {
    std::string id;
    std::string rain_path;
    std::string clean_path;
};

struct DatasetManifest {
    std::string split = "train";
    std::vector<DatasetPairRef> pairs;

    int size() const { return static_cast<int>(pairs.size()); }
};

struct DatasetPair {
    Tensor rain;
    Tensor clean;
    std::string id;
};

// Pairs live under root/{rain,gt}/<id>.png. If root/manifest.json exists its
// id order wins; otherwise both directories are scanned and matched by
// filename. Unmatched files and empty datasets raise ValidationError.
DatasetManifest load_manifest(const std::string& root_dir);
void save_manifest(const std::string& root_dir, const DatasetManifest& manifest);

DatasetPair load_pair(const DatasetPairRef& ref);

Tensor crop(const Tensor& image, int top, int left, int size);
// Same window applied to both images; deterministic per seed.
DatasetPair random_crop_pair(const DatasetPair& pair, int size, std::uint64_t seed);

}  // namespace m2gan
