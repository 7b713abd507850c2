#include "m2gan/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "m2gan/common.hpp"
#include "m2gan/image_io.hpp"

namespace fs = std::filesystem;

namespace m2gan {

void RainSynthesisConfig::validate(int height, int width) const {
    if (drop_count_min < 0 || drop_count_max < drop_count_min) {
        throw ConfigError(msg("rain synthesis: drop count range [", drop_count_min, ",", drop_count_max,
                              "] is empty or negative"));
    }
    if (drop_radius_min < 0.0 || drop_radius_max < drop_radius_min) {
        throw ConfigError(msg("rain synthesis: drop radius range [", drop_radius_min, ",", drop_radius_max,
                              "] is empty or negative"));
    }
    if (flow_streak_prob < 0.0 || flow_streak_prob > 1.0) {
        throw ConfigError(msg("rain synthesis: streak probability ", flow_streak_prob, " outside [0,1]"));
    }
    if (displacement_gain < 0.0) {
        throw ConfigError(msg("rain synthesis: displacement gain ", displacement_gain, " must be >= 0"));
    }
    if (blur_sigma_min < 0.0 || blur_sigma_max < blur_sigma_min) {
        throw ConfigError(msg("rain synthesis: blur sigma range [", blur_sigma_min, ",", blur_sigma_max,
                              "] is empty or negative"));
    }
    if (drop_radius_max > static_cast<double>(std::min(height, width))) {
        throw ConfigError(msg("rain synthesis: drop radius ", drop_radius_max, " exceeds image size ", height,
                              "x", width));
    }
}

double sample_bilinear(const Tensor& image, double x, double y, int channel) {
    const int h = image.dim(0);
    const int w = image.dim(1);
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    const double top = (1.0 - fx) * image.at(y0, x0, channel) + fx * image.at(y0, x1, channel);
    const double bot = (1.0 - fx) * image.at(y1, x0, channel) + fx * image.at(y1, x1, channel);
    return (1.0 - fy) * top + fy * bot;
}

Tensor gaussian_blur(const Tensor& image, double sigma) {
    if (image.rank() != 3) {
        throw PreconditionError(msg("gaussian_blur: expected {H,W,C}, got ", image.shape_string()));
    }
    if (sigma < 0.05) return image;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double norm = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        norm += kernel[static_cast<std::size_t>(i + radius)];
    }
    for (double& k : kernel) k /= norm;

    const int h = image.dim(0);
    const int w = image.dim(1);
    const int c = image.dim(2);
    auto reflect = [](int t, int n) {
        while (t < 0 || t >= n) {
            if (t < 0) t = -t;
            if (t >= n) t = 2 * n - 2 - t;
        }
        return t;
    };
    Tensor horiz = Tensor::zeros(image.shape());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    acc += kernel[static_cast<std::size_t>(i + radius)] * image.at(y, reflect(x + i, w), ch);
                }
                horiz.at(y, x, ch) = acc;
            }
        }
    }
    Tensor out = Tensor::zeros(image.shape());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    acc += kernel[static_cast<std::size_t>(i + radius)] * horiz.at(reflect(y + i, h), x, ch);
                }
                out.at(y, x, ch) = acc;
            }
        }
    }
    return out;
}

Tensor synthesize_raindrops(const Tensor& clean, const RainSynthesisConfig& cfg) {
    return synthesize_raindrops(clean, cfg, nullptr, nullptr);
}

Tensor synthesize_raindrops(const Tensor& clean, const RainSynthesisConfig& cfg, Tensor* mask_out,
                            std::vector<RainDrop>* drops_out) {
    if (clean.rank() != 3) {
        throw PreconditionError(msg("rain synthesis: expected {H,W,C}, got ", clean.shape_string()));
    }
    const int h = clean.dim(0);
    const int w = clean.dim(1);
    const int c = clean.dim(2);
    cfg.validate(h, w);

    Rng rng(cfg.seed);
    const int count = rng.uniform_int(cfg.drop_count_min, cfg.drop_count_max);

    Tensor out = clean;
    Tensor mask = Tensor::zeros({h, w, 1});
    if (drops_out) drops_out->clear();

    for (int i = 0; i < count; ++i) {
        RainDrop drop;
        drop.cx = rng.uniform(0.0, static_cast<double>(w - 1));
        drop.cy = rng.uniform(0.0, static_cast<double>(h - 1));
        drop.a = rng.uniform(cfg.drop_radius_min, cfg.drop_radius_max);
        drop.b = rng.uniform(cfg.drop_radius_min, cfg.drop_radius_max);
        drop.streak = rng.uniform() < cfg.flow_streak_prob;
        drop.theta = 0.0;
        if (drop.streak) {
            drop.b *= kStreakElongation;
            drop.theta = rng.uniform(-0.5, 0.5);
        }
        drop.sigma = rng.uniform(cfg.blur_sigma_min, cfg.blur_sigma_max);
        if (drops_out) drops_out->push_back(drop);

        Tensor source = gaussian_blur(out, drop.sigma);
        const double cth = std::cos(drop.theta);
        const double sth = std::sin(drop.theta);
        const int x_lo = std::max(0, static_cast<int>(std::floor(drop.cx - drop.b - drop.a)));
        const int x_hi = std::min(w - 1, static_cast<int>(std::ceil(drop.cx + drop.b + drop.a)));
        const int y_lo = std::max(0, static_cast<int>(std::floor(drop.cy - drop.b - drop.a)));
        const int y_hi = std::min(h - 1, static_cast<int>(std::ceil(drop.cy + drop.b + drop.a)));
        for (int y = y_lo; y <= y_hi; ++y) {
            for (int x = x_lo; x <= x_hi; ++x) {
                const double dx = x - drop.cx;
                const double dy = y - drop.cy;
                const double u = cth * dx + sth * dy;
                const double v = -sth * dx + cth * dy;
                const double rho2 = (u * u) / (drop.a * drop.a) + (v * v) / (drop.b * drop.b);
                if (rho2 > 1.0) continue;
                mask.at(y, x, 0) = 1.0;
                // Refraction proxy: flip vertically about the drop center,
                // then shift the source point down, strongest at the center.
                const double sx = static_cast<double>(x);
                const double sy = 2.0 * drop.cy - y + cfg.displacement_gain * (1.0 - rho2);
                for (int ch = 0; ch < c; ++ch) {
                    if (drop.streak) {
                        // Directional mean along the streak axis.
                        const double step = drop.b / 5.0;
                        double acc = 0.0;
                        for (int t = -2; t <= 2; ++t) {
                            acc += sample_bilinear(source, sx - sth * step * t, sy + cth * step * t, ch);
                        }
                        out.at(y, x, ch) = acc / 5.0;
                    } else {
                        out.at(y, x, ch) = sample_bilinear(source, sx, sy, ch);
                    }
                }
            }
        }
    }
    for (std::int64_t i = 0; i < out.size(); ++i) out.raw()[i] = std::clamp(out.raw()[i], 0.0, 1.0);
    if (mask_out) *mask_out = std::move(mask);
    return out;
}

namespace {

std::vector<std::string> list_png_ids(const fs::path& dir) {
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        if (entry.path().extension() == ".png") ids.push_back(entry.path().stem().string());
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

DatasetPairRef make_ref(const fs::path& root, const std::string& id) {
    DatasetPairRef ref;
    ref.id = id;
    ref.rain_path = (root / "rain" / (id + ".png")).string();
    ref.clean_path = (root / "gt" / (id + ".png")).string();
    return ref;
}

}  // namespace

DatasetManifest load_manifest(const std::string& root_dir) {
    const fs::path root(root_dir);
    const fs::path rain_dir = root / "rain";
    const fs::path gt_dir = root / "gt";
    if (!fs::is_directory(rain_dir) || !fs::is_directory(gt_dir)) {
        throw IoError(msg("dataset root '", root_dir, "' must contain rain/ and gt/ directories"));
    }

    DatasetManifest manifest;
    const fs::path manifest_path = root / "manifest.json";
    if (fs::exists(manifest_path)) {
        std::ifstream is(manifest_path);
        nlohmann::json j;
        try {
            is >> j;
        } catch (const nlohmann::json::exception& e) {
            throw IoError(msg("cannot parse '", manifest_path.string(), "': ", e.what()));
        }
        manifest.split = j.value("split", "train");
        for (const auto& id : j.at("pairs")) {
            manifest.pairs.push_back(make_ref(root, id.get<std::string>()));
        }
        for (const auto& ref : manifest.pairs) {
            if (!fs::exists(ref.rain_path) || !fs::exists(ref.clean_path)) {
                throw ValidationError(msg("manifest names '", ref.id, ".png' but a side is missing on disk"));
            }
        }
    } else {
        const auto rain_ids = list_png_ids(rain_dir);
        const auto gt_ids = list_png_ids(gt_dir);
        std::vector<std::string> unmatched;
        std::set_symmetric_difference(rain_ids.begin(), rain_ids.end(), gt_ids.begin(), gt_ids.end(),
                                      std::back_inserter(unmatched));
        if (!unmatched.empty()) {
            std::string names;
            for (const auto& id : unmatched) names += (names.empty() ? "" : ", ") + id + ".png";
            throw ValidationError(msg("unmatched dataset files: ", names));
        }
        for (const auto& id : rain_ids) manifest.pairs.push_back(make_ref(root, id));
    }
    if (manifest.pairs.empty()) {
        throw ValidationError(msg("dataset root '", root_dir, "' contains no pairs"));
    }
    return manifest;
}

void save_manifest(const std::string& root_dir, const DatasetManifest& manifest) {
    nlohmann::json j;
    j["split"] = manifest.split;
    auto ids = nlohmann::json::array();
    for (const auto& ref : manifest.pairs) ids.push_back(ref.id);
    j["pairs"] = ids;
    const fs::path path = fs::path(root_dir) / "manifest.json";
    std::ofstream os(path);
    if (!os) throw IoError(msg("cannot write '", path.string(), "'"));
    os << j.dump(2) << "\n";
}

DatasetPair load_pair(const DatasetPairRef& ref) {
    DatasetPair pair;
    pair.id = ref.id;
    pair.rain = read_image_rgb8(ref.rain_path);
    pair.clean = read_image_rgb8(ref.clean_path);
    if (!pair.rain.same_shape(pair.clean)) {
        throw ValidationError(msg("pair '", ref.id, "': rain ", pair.rain.shape_string(), " and clean ",
                                  pair.clean.shape_string(), " differ in shape"));
    }
    return pair;
}

Tensor crop(const Tensor& image, int top, int left, int size) {
    if (image.rank() != 3) {
        throw PreconditionError(msg("crop: expected {H,W,C}, got ", image.shape_string()));
    }
    if (size < 1 || top < 0 || left < 0 || top + size > image.dim(0) || left + size > image.dim(1)) {
        throw PreconditionError(msg("crop: window ", size, "x", size, "+", top, "+", left,
                                    " outside image ", image.shape_string()));
    }
    const int c = image.dim(2);
    Tensor out = Tensor::zeros({size, size, c});
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            for (int ch = 0; ch < c; ++ch) out.at(y, x, ch) = image.at(top + y, left + x, ch);
        }
    }
    return out;
}

DatasetPair random_crop_pair(const DatasetPair& pair, int size, std::uint64_t seed) {
    require_same_shape(pair.rain, pair.clean, "random_crop_pair");
    const int h = pair.rain.dim(0);
    const int w = pair.rain.dim(1);
    if (size > h || size > w) {
        throw PreconditionError(msg("random_crop_pair: crop ", size, " exceeds image ", h, "x", w));
    }
    Rng rng(seed);
    const int top = rng.uniform_int(0, h - size);
    const int left = rng.uniform_int(0, w - size);
    DatasetPair out;
    out.id = pair.id;
    out.rain = crop(pair.rain, top, left, size);
    out.clean = crop(pair.clean, top, left, size);
    return out;
}

}  // namespace m2gan
