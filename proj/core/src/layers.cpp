#include "m2gan/layers.hpp"

#include <cmath>

namespace m2gan {

namespace {

double dot(const double* a, const double* b, std::int64_t n) {
    double s = 0.0;
    for (std::int64_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

Var spectral_norm_weight(const Var& w, SpectralState& state, int iterations, bool persist_u) {
    const Tensor& wv = w.value();
    const std::int64_t rows = wv.dim(0);
    const std::int64_t cols = wv.size() / rows;
    if (state.u.empty() || state.u.size() != rows) {
        throw StateError(msg("spectral_norm_weight: u vector has size ",
                             state.u.empty() ? 0 : state.u.size(), ", expected ", rows));
    }
    if (iterations < 1) throw ConfigError("spectral_norm_weight: iterations must be >= 1");

    std::vector<double> u(state.u.data(), state.u.data() + rows);
    std::vector<double> v(static_cast<size_t>(cols), 0.0);
    const double* W = wv.data();
    for (int it = 0; it < iterations; ++it) {
        // v = normalize(W^T u)
        std::fill(v.begin(), v.end(), 0.0);
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* row = W + r * cols;
            const double ur = u[static_cast<size_t>(r)];
            for (std::int64_t c = 0; c < cols; ++c) v[static_cast<size_t>(c)] += ur * row[c];
        }
        const double nv = norm2(v);
        if (nv < 1e-12) break;  // degenerate (zero) matrix; u keeps its previous direction
        for (double& x : v) x /= nv;
        // u = normalize(W v)
        std::vector<double> un(static_cast<size_t>(rows), 0.0);
        for (std::int64_t r = 0; r < rows; ++r) un[static_cast<size_t>(r)] = dot(W + r * cols, v.data(), cols);
        const double nu = norm2(un);
        if (nu < 1e-12) break;
        for (double& x : un) x /= nu;
        u = std::move(un);
    }

    double sigma = 0.0;
    for (std::int64_t r = 0; r < rows; ++r) sigma += u[static_cast<size_t>(r)] * dot(W + r * cols, v.data(), cols);
    state.sigma_floored = sigma < 1e-12;
    if (state.sigma_floored) sigma = 1e-12;
    state.last_sigma = sigma;
    if (persist_u) {
        for (std::int64_t r = 0; r < rows; ++r) state.u[r] = u[static_cast<size_t>(r)];
    }

    Tensor out = wv;
    out.scale(1.0 / sigma);
    return make_op(std::move(out), {w},
                   [u = std::move(u), v = std::move(v), sigma, rows, cols](AdNode& self) {
                       AdNode& pw = *self.parents[0];
                       if (!pw.requires_grad) return;
                       // d(W/sigma)/dW with sigma = u^T W v and u, v held fixed:
                       //   gW = (g - <g, W_hat> u v^T) / sigma
                       const Tensor& what = self.value;
                       double inner = 0.0;
                       for (std::int64_t i = 0; i < what.size(); ++i) inner += self.grad[i] * what[i];
                       Tensor& gw = pw.ensure_grad();
                       for (std::int64_t r = 0; r < rows; ++r) {
                           const double ur = u[static_cast<size_t>(r)];
                           for (std::int64_t c = 0; c < cols; ++c) {
                               const std::int64_t i = r * cols + c;
                               gw[i] += (self.grad[i] - inner * ur * v[static_cast<size_t>(c)]) / sigma;
                           }
                       }
                   });
}

Conv2d::Conv2d(int in_channels, int out_channels, int kernel_size, const Conv2dOptions& opts, Rng& rng)
    : in_channels_(in_channels), out_channels_(out_channels), kernel_size_(kernel_size), opts_(opts) {
    if (in_channels < 1 || out_channels < 1 || kernel_size < 1) {
        throw ConfigError("Conv2d: channels and kernel size must be >= 1");
    }
    if (opts.same_padding && kernel_size % 2 == 0) {
        throw ConfigError("Conv2d: same padding requires an odd kernel size");
    }
    weight_ = register_param("weight", init_conv_weight({out_channels, kernel_size, kernel_size, in_channels}, rng));
    bias_ = register_param("bias", Tensor({out_channels}));
    if (opts_.spectral_norm) {
        sn_state_.u = Tensor({out_channels});
        rng.fill_normal(sn_state_.u, 0.0, 1.0);
        double n = 0.0;
        for (std::int64_t i = 0; i < sn_state_.u.size(); ++i) n += sn_state_.u[i] * sn_state_.u[i];
        sn_state_.u.scale(1.0 / std::sqrt(n));
        register_buffer("sn_u", &sn_state_.u);
    }
}

void Conv2d::refresh_effective_weight() {
    if (opts_.spectral_norm) {
        w_eff_ = spectral_norm_weight(weight_, sn_state_, sn_iterations_, sn_persist_);
    }
}

void Conv2d::set_sn_policy(int iterations, bool persist_u) {
    sn_iterations_ = iterations;
    sn_persist_ = persist_u;
}

Var Conv2d::effective_weight() {
    if (!opts_.spectral_norm) return weight_;
    if (!w_eff_.defined()) refresh_effective_weight();
    return w_eff_;
}

Var Conv2d::forward(const Var& x) {
    if (x.value().rank() != 3 || x.value().dim(2) != in_channels_) {
        throw ConfigError(msg("Conv2d: expected ", in_channels_, " input channels, got ",
                              x.value().rank() == 3 ? x.value().dim(2) : -1));
    }
    Var in = x;
    if (opts_.same_padding && kernel_size_ > 1) {
        in = reflect_pad(x, opts_.dilation * (kernel_size_ - 1) / 2);
    }
    return conv2d(in, effective_weight(), bias_, opts_.stride, opts_.dilation);
}

Linear::Linear(int in_features, int out_features, bool spectral_norm, Rng& rng)
    : spectral_norm_(spectral_norm) {
    if (in_features < 1 || out_features < 1) throw ConfigError("Linear: features must be >= 1");
    weight_ = register_param("weight", init_conv_weight({out_features, in_features}, rng));
    bias_ = register_param("bias", Tensor({out_features}));
    if (spectral_norm_) {
        sn_state_.u = Tensor({out_features});
        rng.fill_normal(sn_state_.u, 0.0, 1.0);
        double n = 0.0;
        for (std::int64_t i = 0; i < sn_state_.u.size(); ++i) n += sn_state_.u[i] * sn_state_.u[i];
        sn_state_.u.scale(1.0 / std::sqrt(n));
        register_buffer("sn_u", &sn_state_.u);
    }
}

void Linear::refresh_effective_weight() {
    if (spectral_norm_) {
        w_eff_ = spectral_norm_weight(weight_, sn_state_, sn_iterations_, sn_persist_);
    }
}

void Linear::set_sn_policy(int iterations, bool persist_u) {
    sn_iterations_ = iterations;
    sn_persist_ = persist_u;
}

Var Linear::forward(const Var& x) {
    Var w = weight_;
    if (spectral_norm_) {
        if (!w_eff_.defined()) refresh_effective_weight();
        w = w_eff_;
    }
    return linear(x, w, bias_);
}

}  // namespace m2gan
