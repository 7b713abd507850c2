#pragma once

#include <memory>
#include <string>

#include "m2gan/autodiff.hpp"
#include "m2gan/random.hpp"

namespace m2gan {

// Attention rain map M^R: channel-mean absolute residual between the
// observation and an estimate, rescaled by a fixed gain and clamped to [0,1].
// Zero exactly where deraining is complete.
inline constexpr double kRainMapGain = 5.0;
Tensor attention_rain_map(const Tensor& observation, const Tensor& estimate);

// Nearest-neighbor spatial resampling for {H,W,C} maps.
Tensor resize_nearest(const Tensor& map, int height, int width);

// Per-pixel category scores. Implementations must return maps whose scores
// are nonnegative and sum to one per pixel.
class Segmenter {
public:
    virtual ~Segmenter() = default;
    virtual int num_categories() const = 0;
    virtual Tensor segment(const Tensor& image) const = 0;
    // Differentiable variant used inside generator losses. The default wraps
    // segment() as a constant (no gradient to the image).
    virtual Var segment_soft(const Var& image) const;
};

// Color k-means over the image's own pixels with seeded centroids, followed
// by a soft (tempered softmax) assignment. Not semantically meaningful, but
// deterministic and differentiable through the assignment.
class ToySegmenter : public Segmenter {
public:
    ToySegmenter(int num_categories, std::uint64_t seed, double tau = 0.01, int kmeans_iters = 5);

    int num_categories() const override { return num_categories_; }
    Tensor segment(const Tensor& image) const override;
    Var segment_soft(const Var& image) const override;

    // Cluster centers for a given image; {K, C}. Exposed for tests.
    Tensor centroids(const Tensor& image) const;

private:
    int num_categories_;
    std::uint64_t seed_;
    double tau_;
    int kmeans_iters_;
};

// Serves one fixed pre-computed map (e.g. imported from an external
// segmentation network) regardless of the query image.
class FixedMapSegmenter : public Segmenter {
public:
    explicit FixedMapSegmenter(Tensor scores);
    int num_categories() const override { return scores_.dim(2); }
    Tensor segment(const Tensor& image) const override;

private:
    Tensor scores_;
};

struct SegmenterHandle {
    enum class Kind { Toy, ExternalImport };
    Kind kind = Kind::Toy;
    int num_categories = 5;
    std::uint64_t seed = 7;
    std::string label_path;  // external-import mode: 8-bit label-index image

    void validate() const;
};

std::unique_ptr<Segmenter> make_segmenter(const SegmenterHandle& handle);

// Convenience matching the handle-based call style.
Tensor segment(const Tensor& image, const SegmenterHandle& handle);

// Decodes an 8-bit single-channel label image into a one-hot {H,W,K} map.
Tensor import_label_map(const std::string& path, int num_categories);
Tensor label_map_to_scores(const Tensor& labels, int num_categories);

// Soft k-means assignment as an autodiff op: scores = softmax(-d^2/tau)
// against fixed centroids {K,C}. Gradients flow to the image only.
Var kmeans_soft_scores(const Var& image, const Tensor& centroids, double tau);

void validate_segmentation_scores(const Tensor& scores, double tol = 1e-5);

}  // namespace m2gan
