#include "m2gan/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <sstream>

#include "m2gan/common.hpp"
#include "m2gan/image_io.hpp"

namespace fs = std::filesystem;

namespace m2gan {

double psnr(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "psnr");
    double mse = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse < kPsnrMseFloor) return kPsnrCap;
    return 10.0 * std::log10(1.0 / mse);
}

Tensor to_luma(const Tensor& image) {
    if (image.rank() != 3) {
        throw PreconditionError(msg("to_luma: expected {H,W,C}, got ", image.shape_string()));
    }
    if (image.dim(2) == 1) return image;
    if (image.dim(2) != 3) {
        throw PreconditionError(msg("to_luma: expected 1 or 3 channels, got ", image.dim(2)));
    }
    Tensor out = Tensor::zeros({image.dim(0), image.dim(1), 1});
    for (int y = 0; y < image.dim(0); ++y) {
        for (int x = 0; x < image.dim(1); ++x) {
            out.at(y, x, 0) = 0.299 * image.at(y, x, 0) + 0.587 * image.at(y, x, 1) + 0.114 * image.at(y, x, 2);
        }
    }
    return out;
}

double ssim(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "ssim");
    const Tensor ya = to_luma(a);
    const Tensor yb = to_luma(b);
    const int h = ya.dim(0);
    const int w = ya.dim(1);
    if (h < kSsimWindow || w < kSsimWindow) {
        throw PreconditionError(msg("ssim: image ", h, "x", w, " smaller than the ", kSsimWindow, "x",
                                    kSsimWindow, " window"));
    }

    double window[kSsimWindow][kSsimWindow];
    double norm = 0.0;
    const int r = kSsimWindow / 2;
    for (int i = 0; i < kSsimWindow; ++i) {
        for (int j = 0; j < kSsimWindow; ++j) {
            const double dy = i - r;
            const double dx = j - r;
            window[i][j] = std::exp(-(dx * dx + dy * dy) / (2.0 * kSsimSigma * kSsimSigma));
            norm += window[i][j];
        }
    }
    for (auto& row : window) {
        for (double& v : row) v /= norm;
    }

    double total = 0.0;
    int count = 0;
    for (int y = 0; y + kSsimWindow <= h; ++y) {
        for (int x = 0; x + kSsimWindow <= w; ++x) {
            double mx = 0.0, my = 0.0;
            for (int i = 0; i < kSsimWindow; ++i) {
                for (int j = 0; j < kSsimWindow; ++j) {
                    mx += window[i][j] * ya.at(y + i, x + j, 0);
                    my += window[i][j] * yb.at(y + i, x + j, 0);
                }
            }
            double vx = 0.0, vy = 0.0, cxy = 0.0;
            for (int i = 0; i < kSsimWindow; ++i) {
                for (int j = 0; j < kSsimWindow; ++j) {
                    const double da = ya.at(y + i, x + j, 0) - mx;
                    const double db = yb.at(y + i, x + j, 0) - my;
                    vx += window[i][j] * da * da;
                    vy += window[i][j] * db * db;
                    cxy += window[i][j] * da * db;
                }
            }
            const double num = (2.0 * mx * my + kSsimC1) * (2.0 * cxy + kSsimC2);
            const double den = (mx * mx + my * my + kSsimC1) * (vx + vy + kSsimC2);
            total += num / den;
            ++count;
        }
    }
    return total / count;
}

Embedder::Embedder(int in_channels, int out_dim, std::uint64_t seed) : out_dim_(out_dim) {
    if (in_channels < 1 || out_dim < 1) throw ConfigError("embedder: dimensions must be >= 1");
    Rng rng(seed);
    int ch = in_channels;
    for (int out : {8, 16, 32}) {
        Conv2dOptions opts;
        opts.stride = 2;
        stages_.push_back(std::make_unique<Conv2d>(ch, out, 3, opts, rng));
        ch = out;
    }
    proj_ = std::make_unique<Linear>(ch, out_dim, /*spectral_norm=*/false, rng);
}

Tensor Embedder::embed(const Tensor& image) {
    if (image.rank() != 3) {
        throw PreconditionError(msg("embedder: expected {H,W,C}, got ", image.shape_string()));
    }
    Var f = Var::leaf(image);
    for (auto& s : stages_) f = leaky_relu(s->forward(f), 0.2);
    Var pooled = global_avg_pool(f);
    return proj_->forward(pooled).value();
}

FeatureStats feature_stats(const std::vector<Tensor>& images, Embedder& embedder) {
    const int n = static_cast<int>(images.size());
    if (n < 2) {
        throw PreconditionError(msg("feature_stats: need >= 2 images for a sample covariance, got ", n));
    }
    const int d = embedder.dim();
    std::vector<Tensor> embeddings;
    embeddings.reserve(images.size());
    for (const Tensor& img : images) embeddings.push_back(embedder.embed(img));

    FeatureStats stats;
    stats.mean = Tensor::zeros({d});
    for (const Tensor& e : embeddings) stats.mean.add_scaled(e, 1.0 / n);
    stats.cov = Tensor::zeros({d, d});
    for (const Tensor& e : embeddings) {
        for (int i = 0; i < d; ++i) {
            const double di = e[i] - stats.mean[i];
            for (int j = 0; j < d; ++j) {
                stats.cov[static_cast<std::int64_t>(i) * d + j] += di * (e[j] - stats.mean[j]) / (n - 1);
            }
        }
    }
    return stats;
}

namespace {

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
    const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
    if (solver.info() != Eigen::Success) {
        throw NumericError("fid: eigendecomposition failed");
    }
    Eigen::VectorXd lambda = solver.eigenvalues();
    for (int i = 0; i < lambda.size(); ++i) lambda[i] = std::sqrt(std::max(lambda[i], 0.0));
    return solver.eigenvectors() * lambda.asDiagonal() * solver.eigenvectors().transpose();
}

}  // namespace

double fid(const FeatureStats& s1, const FeatureStats& s2) {
    if (s1.dim() < 1 || s1.dim() != s2.dim()) {
        throw PreconditionError(msg("fid: dimension mismatch ", s1.dim(), " vs ", s2.dim()));
    }
    const int d = s1.dim();
    double mean_term = 0.0;
    for (int i = 0; i < d; ++i) {
        const double diff = s1.mean[i] - s2.mean[i];
        mean_term += diff * diff;
    }
    Eigen::MatrixXd c1(d, d), c2(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            c1(i, j) = s1.cov[static_cast<std::int64_t>(i) * d + j];
            c2(i, j) = s2.cov[static_cast<std::int64_t>(i) * d + j];
        }
    }
    // Tr((S1 S2)^1/2) computed on the symmetric product S1^1/2 S2 S1^1/2.
    const Eigen::MatrixXd root1 = psd_sqrt(c1);
    const Eigen::MatrixXd inner = psd_sqrt(root1 * c2 * root1);
    const double value = mean_term + c1.trace() + c2.trace() - 2.0 * inner.trace();
    return std::max(value, 0.0);
}

nlohmann::json MetricReport::to_json() const {
    nlohmann::json j;
    j["aggregate"]["mean_psnr_db"] = mean_psnr;
    j["aggregate"]["mean_ssim"] = mean_ssim;
    if (std::isnan(fid_value)) {
        j["aggregate"]["fid"] = nullptr;
    } else {
        j["aggregate"]["fid"] = fid_value;
    }
    j["per_image"] = nlohmann::json::array();
    for (const auto& row : per_image) {
        j["per_image"].push_back({{"id", row.id}, {"psnr_db", row.psnr_db}, {"ssim", row.ssim_value}});
    }
    if (!config_echo.is_null()) j["config"] = config_echo;
    return j;
}

std::string MetricReport::to_table() const {
    std::ostringstream os;
    os << std::left << std::setw(24) << "id" << std::right << std::setw(12) << "psnr_db" << std::setw(12)
       << "ssim" << "\n";
    os << std::string(48, '-') << "\n";
    os << std::fixed << std::setprecision(4);
    for (const auto& row : per_image) {
        os << std::left << std::setw(24) << row.id << std::right << std::setw(12) << row.psnr_db
           << std::setw(12) << row.ssim_value << "\n";
    }
    os << std::string(48, '-') << "\n";
    os << std::left << std::setw(24) << "mean" << std::right << std::setw(12) << mean_psnr << std::setw(12)
       << mean_ssim << "\n";
    if (std::isnan(fid_value)) {
        os << "fid: n/a (need >= 2 pairs)\n";
    } else {
        os << "fid: " << fid_value << "\n";
    }
    return os.str();
}

MetricReport evaluate_dirs(const std::string& pred_dir, const std::string& gt_dir, Embedder& embedder) {
    auto list_ids = [](const std::string& dir) {
        if (!fs::is_directory(dir)) throw IoError(msg("'", dir, "' is not a directory"));
        std::vector<std::string> ids;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.is_regular_file() && entry.path().extension() == ".png") {
                ids.push_back(entry.path().stem().string());
            }
        }
        std::sort(ids.begin(), ids.end());
        return ids;
    };
    const auto pred_ids = list_ids(pred_dir);
    const auto gt_ids = list_ids(gt_dir);
    std::vector<std::string> unmatched;
    std::set_symmetric_difference(pred_ids.begin(), pred_ids.end(), gt_ids.begin(), gt_ids.end(),
                                  std::back_inserter(unmatched));
    if (!unmatched.empty()) {
        std::string names;
        for (const auto& id : unmatched) names += (names.empty() ? "" : ", ") + id;
        throw ValidationError(msg("evaluate: unmatched ids: ", names));
    }
    if (pred_ids.empty()) throw ValidationError("evaluate: no prediction/ground-truth pairs found");

    MetricReport report;
    std::vector<Tensor> preds, gts;
    for (const auto& id : pred_ids) {
        Tensor p = read_image_rgb8((fs::path(pred_dir) / (id + ".png")).string());
        Tensor g = read_image_rgb8((fs::path(gt_dir) / (id + ".png")).string());
        if (!p.same_shape(g)) {
            throw ValidationError(msg("evaluate: '", id, "' shapes differ: ", p.shape_string(), " vs ",
                                      g.shape_string()));
        }
        MetricRow row;
        row.id = id;
        row.psnr_db = psnr(p, g);
        row.ssim_value = ssim(p, g);
        report.per_image.push_back(row);
        report.mean_psnr += row.psnr_db;
        report.mean_ssim += row.ssim_value;
        preds.push_back(std::move(p));
        gts.push_back(std::move(g));
    }
    report.mean_psnr /= static_cast<double>(report.per_image.size());
    report.mean_ssim /= static_cast<double>(report.per_image.size());
    if (preds.size() >= 2) {
        report.fid_value = fid(feature_stats(preds, embedder), feature_stats(gts, embedder));
    } else {
        report.fid_value = std::numeric_limits<double>::quiet_NaN();
    }
    return report;
}

}  // namespace m2gan
