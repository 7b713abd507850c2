#pragma once

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "m2gan/layers.hpp"
#include "m2gan/tensor.hpp"

namespace m2gan {

// Peak signal-to-noise ratio at dynamic range 1.0, capped at 100 dB for
// (near-)identical inputs.
double psnr(const Tensor& a, const Tensor& b);
inline constexpr double kPsnrCap = 100.0;
inline constexpr double kPsnrMseFloor = 1e-10;

// Mean structural similarity over luma with an 11x11 Gaussian window
// (sigma 1.5), valid window positions only.
double ssim(const Tensor& a, const Tensor& b);
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

// ITU-R 601 luma; single-channel input passes through.
Tensor to_luma(const Tensor& image);

struct FeatureStats {
    Tensor mean;  // {d}
    Tensor cov;   // {d,d}, sample covariance (n-1)

    int dim() const { return mean.empty() ? 0 : mean.dim(0); }
};

// Fixed-seed random convolutional embedding standing in for an Inception
// network: absolute values are not comparable across embedders, orderings
// and the Frechet math are.
class Embedder {
public:
    explicit Embedder(int in_channels = 3, int out_dim = 64, std::uint64_t seed = 99);

    Tensor embed(const Tensor& image);
    int dim() const { return out_dim_; }

private:
    int out_dim_;
    std::vector<std::unique_ptr<Conv2d>> stages_;
    std::unique_ptr<Linear> proj_;
};

FeatureStats feature_stats(const std::vector<Tensor>& images, Embedder& embedder);

// Frechet distance between Gaussians: |mu1-mu2|^2 + Tr(S1+S2-2(S1 S2)^1/2),
// matrix root via symmetrized eigendecomposition with negative eigenvalues
// clamped to zero.
double fid(const FeatureStats& s1, const FeatureStats& s2);

struct MetricRow {
    std::string id;
    double psnr_db = 0.0;
    double ssim_value = 0.0;
};

struct MetricReport {
    std::vector<MetricRow> per_image;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    double fid_value = 0.0;  // NaN when fewer than 2 pairs
    nlohmann::json config_echo;

    nlohmann::json to_json() const;
    std::string to_table() const;
};

MetricReport evaluate_dirs(const std::string& pred_dir, const std::string& gt_dir, Embedder& embedder);

}  // namespace m2gan
