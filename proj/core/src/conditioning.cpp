#include "m2gan/conditioning.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "m2gan/common.hpp"
#include "m2gan/image_io.hpp"

namespace m2gan {

Tensor attention_rain_map(const Tensor& observation, const Tensor& estimate) {
    require_same_shape(observation, estimate, "attention_rain_map");
    if (observation.rank() != 3) {
        throw PreconditionError(msg("attention_rain_map: expected {H,W,C}, got ", observation.shape_string()));
    }
    const int h = observation.dim(0);
    const int w = observation.dim(1);
    const int c = observation.dim(2);
    Tensor map = Tensor::zeros({h, w, 1});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int ch = 0; ch < c; ++ch) {
                acc += std::abs(observation.at(y, x, ch) - estimate.at(y, x, ch));
            }
            double v = kRainMapGain * acc / static_cast<double>(c);
            map.at(y, x, 0) = std::clamp(v, 0.0, 1.0);
        }
    }
    return map;
}

Tensor resize_nearest(const Tensor& map, int height, int width) {
    if (map.rank() != 3) {
        throw PreconditionError(msg("resize_nearest: expected {H,W,C}, got ", map.shape_string()));
    }
    if (height <= 0 || width <= 0) {
        throw PreconditionError(msg("resize_nearest: target ", height, "x", width, " must be positive"));
    }
    const int sh = map.dim(0);
    const int sw = map.dim(1);
    const int c = map.dim(2);
    if (sh == height && sw == width) return map;
    Tensor out = Tensor::zeros({height, width, c});
    for (int y = 0; y < height; ++y) {
        int sy = std::min(sh - 1, static_cast<int>((y + 0.5) * sh / height));
        for (int x = 0; x < width; ++x) {
            int sx = std::min(sw - 1, static_cast<int>((x + 0.5) * sw / width));
            for (int ch = 0; ch < c; ++ch) {
                out.at(y, x, ch) = map.at(sy, sx, ch);
            }
        }
    }
    return out;
}

Var Segmenter::segment_soft(const Var& image) const {
    return Var::leaf(segment(image.value()), /*requires_grad=*/false);
}

ToySegmenter::ToySegmenter(int num_categories, std::uint64_t seed, double tau, int kmeans_iters)
    : num_categories_(num_categories), seed_(seed), tau_(tau), kmeans_iters_(kmeans_iters) {
    if (num_categories < 1) {
        throw ConfigError(msg("ToySegmenter: num_categories ", num_categories, " must be >= 1"));
    }
    if (!(tau > 0.0)) {
        throw ConfigError(msg("ToySegmenter: tau ", tau, " must be positive"));
    }
    if (kmeans_iters < 0) {
        throw ConfigError(msg("ToySegmenter: kmeans_iters ", kmeans_iters, " must be >= 0"));
    }
}

Tensor ToySegmenter::centroids(const Tensor& image) const {
    if (image.rank() != 3) {
        throw PreconditionError(msg("ToySegmenter: expected {H,W,C}, got ", image.shape_string()));
    }
    const int h = image.dim(0);
    const int w = image.dim(1);
    const int c = image.dim(2);
    const int n = h * w;
    const int k = num_categories_;
    const double* px = image.data();

    Tensor centers = Tensor::zeros({k, c});
    Rng rng(seed_);
    for (int j = 0; j < k; ++j) {
        int idx = rng.uniform_int(0, n - 1);
        for (int ch = 0; ch < c; ++ch) centers.at(j, ch) = px[idx * c + ch];
    }

    std::vector<int> assign(static_cast<std::size_t>(n), 0);
    std::vector<double> sums(static_cast<std::size_t>(k) * c, 0.0);
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int it = 0; it < kmeans_iters_; ++it) {
        for (int p = 0; p < n; ++p) {
            double best = std::numeric_limits<double>::infinity();
            int best_j = 0;
            for (int j = 0; j < k; ++j) {
                double d2 = 0.0;
                for (int ch = 0; ch < c; ++ch) {
                    double d = px[p * c + ch] - centers.at(j, ch);
                    d2 += d * d;
                }
                if (d2 < best) {
                    best = d2;
                    best_j = j;
                }
            }
            assign[static_cast<std::size_t>(p)] = best_j;
        }
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (int p = 0; p < n; ++p) {
            int j = assign[static_cast<std::size_t>(p)];
            ++counts[static_cast<std::size_t>(j)];
            for (int ch = 0; ch < c; ++ch) sums[static_cast<std::size_t>(j) * c + ch] += px[p * c + ch];
        }
        for (int j = 0; j < k; ++j) {
            if (counts[static_cast<std::size_t>(j)] == 0) continue;  // empty cluster keeps its centroid
            for (int ch = 0; ch < c; ++ch) {
                centers.at(j, ch) = sums[static_cast<std::size_t>(j) * c + ch] / counts[static_cast<std::size_t>(j)];
            }
        }
    }
    return centers;
}

Tensor ToySegmenter::segment(const Tensor& image) const {
    Var v = Var::leaf(image, /*requires_grad=*/false);
    return kmeans_soft_scores(v, centroids(image), tau_).value();
}

Var ToySegmenter::segment_soft(const Var& image) const {
    // Centroids come from the detached image: gradients flow only through
    // the soft assignment, keeping the op cheap and well-conditioned.
    return kmeans_soft_scores(image, centroids(image.value()), tau_);
}

Var kmeans_soft_scores(const Var& image, const Tensor& centroids, double tau) {
    if (image.value().rank() != 3) {
        throw PreconditionError(msg("kmeans_soft_scores: expected {H,W,C}, got ", image.value().shape_string()));
    }
    if (centroids.rank() != 2 || centroids.dim(1) != image.value().dim(2)) {
        throw PreconditionError(msg("kmeans_soft_scores: centroids ", centroids.shape_string(), " incompatible with image ",
                                    image.value().shape_string()));
    }
    if (!(tau > 0.0)) {
        throw PreconditionError(msg("kmeans_soft_scores: tau ", tau, " must be positive"));
    }
    const int h = image.value().dim(0);
    const int w = image.value().dim(1);
    const int c = image.value().dim(2);
    const int k = centroids.dim(0);

    Tensor scores = Tensor::zeros({h, w, k});
    {
        const double* px = image.value().data();
        std::vector<double> z(static_cast<std::size_t>(k));
        for (int p = 0; p < h * w; ++p) {
            double zmax = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < k; ++j) {
                double d2 = 0.0;
                for (int ch = 0; ch < c; ++ch) {
                    double d = px[p * c + ch] - centroids.at(j, ch);
                    d2 += d * d;
                }
                z[static_cast<std::size_t>(j)] = -d2 / tau;
                zmax = std::max(zmax, z[static_cast<std::size_t>(j)]);
            }
            double denom = 0.0;
            for (int j = 0; j < k; ++j) denom += std::exp(z[static_cast<std::size_t>(j)] - zmax);
            for (int j = 0; j < k; ++j) {
                scores.raw()[p * k + j] = std::exp(z[static_cast<std::size_t>(j)] - zmax) / denom;
            }
        }
    }

    Tensor cents = centroids;
    Tensor in_val = image.value();
    Tensor out_val = scores;
    return make_op(std::move(scores), {image}, [cents, in_val, out_val, tau, h, w, c, k](AdNode& self) {
        AdNode& xn = *self.parents[0];
        if (!xn.requires_grad) return;
        xn.ensure_grad();
        const double* px = in_val.data();
        const double* s = out_val.data();
        const double* gy = self.grad.data();
        double* gx = xn.grad.data();
        for (int p = 0; p < h * w; ++p) {
            double dot = 0.0;
            for (int j = 0; j < k; ++j) dot += gy[p * k + j] * s[p * k + j];
            for (int j = 0; j < k; ++j) {
                double gz = s[p * k + j] * (gy[p * k + j] - dot);
                double coef = -2.0 * gz / tau;
                for (int ch = 0; ch < c; ++ch) {
                    gx[p * c + ch] += coef * (px[p * c + ch] - cents.at(j, ch));
                }
            }
        }
    });
}

FixedMapSegmenter::FixedMapSegmenter(Tensor scores) : scores_(std::move(scores)) {
    if (scores_.rank() != 3) {
        throw PreconditionError(msg("FixedMapSegmenter: expected {H,W,K}, got ", scores_.shape_string()));
    }
    validate_segmentation_scores(scores_);
}

Tensor FixedMapSegmenter::segment(const Tensor& image) const {
    if (image.rank() != 3) {
        throw PreconditionError(msg("FixedMapSegmenter: expected {H,W,C}, got ", image.shape_string()));
    }
    return resize_nearest(scores_, image.dim(0), image.dim(1));
}

void SegmenterHandle::validate() const {
    if (num_categories < 1) {
        throw ConfigError(msg("segmenter: num_categories ", num_categories, " must be >= 1"));
    }
    if (kind == Kind::ExternalImport && label_path.empty()) {
        throw ConfigError("segmenter: external import requires a label map path");
    }
}

std::unique_ptr<Segmenter> make_segmenter(const SegmenterHandle& handle) {
    handle.validate();
    switch (handle.kind) {
        case SegmenterHandle::Kind::Toy:
            return std::make_unique<ToySegmenter>(handle.num_categories, handle.seed);
        case SegmenterHandle::Kind::ExternalImport:
            return std::make_unique<FixedMapSegmenter>(import_label_map(handle.label_path, handle.num_categories));
    }
    throw ConfigError("segmenter: unknown kind");
}

Tensor segment(const Tensor& image, const SegmenterHandle& handle) {
    return make_segmenter(handle)->segment(image);
}

Tensor label_map_to_scores(const Tensor& labels, int num_categories) {
    if (labels.rank() != 3 || labels.dim(2) != 1) {
        throw PreconditionError(msg("label_map_to_scores: expected {H,W,1}, got ", labels.shape_string()));
    }
    const int h = labels.dim(0);
    const int w = labels.dim(1);
    Tensor scores = Tensor::zeros({h, w, num_categories});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double v = labels.at(y, x, 0);
            int idx = static_cast<int>(std::lround(v));
            if (idx < 0 || idx >= num_categories) {
                throw IoError(msg("label map value ", v, " at (", y, ",", x, ") outside [0,", num_categories - 1, "]"));
            }
            scores.at(y, x, idx) = 1.0;
        }
    }
    return scores;
}

Tensor import_label_map(const std::string& path, int num_categories) {
    if (num_categories < 1) {
        throw ConfigError(msg("import_label_map: num_categories ", num_categories, " must be >= 1"));
    }
    Tensor labels = read_image_gray8_raw(path);
    return label_map_to_scores(labels, num_categories);
}

void validate_segmentation_scores(const Tensor& scores, double tol) {
    if (scores.rank() != 3) {
        throw ValidationError(msg("segmentation scores: expected {H,W,K}, got ", scores.shape_string()));
    }
    const int h = scores.dim(0);
    const int w = scores.dim(1);
    const int k = scores.dim(2);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double sum = 0.0;
            for (int j = 0; j < k; ++j) {
                double v = scores.at(y, x, j);
                if (!(v >= -tol)) {
                    throw ValidationError(msg("segmentation scores: negative score ", v, " at (", y, ",", x, ",", j, ")"));
                }
                sum += v;
            }
            if (std::abs(sum - 1.0) > tol) {
                throw ValidationError(msg("segmentation scores: pixel (", y, ",", x, ") sums to ", sum, ", expected 1"));
            }
        }
    }
}

}  // namespace m2gan
