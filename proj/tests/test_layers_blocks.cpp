#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>

#include "m2gan/blocks.hpp"
#include "m2gan/layers.hpp"
#include "test_util.hpp"

using namespace m2gan;
using testutil::random_tensor;

namespace {

double top_singular_value(const Tensor& w) {
    const int rows = w.dim(0);
    const auto cols = w.size() / rows;
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (std::int64_t c = 0; c < cols; ++c) m(r, c) = w[r * cols + c];
    return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
}

}  // namespace

TEST_CASE("conv2d same padding preserves spatial dims") {
    Rng rng(1);
    Conv2d conv(3, 8, 3, Conv2dOptions{}, rng);
    const Var y = conv.forward(Var::leaf(random_tensor(rng, {6, 7, 3})));
    CHECK(y.value().height() == 6);
    CHECK(y.value().width() == 7);
    CHECK(y.value().channels() == 8);

    Conv2dOptions dil;
    dil.dilation = 2;
    Conv2d conv_d(3, 4, 3, dil, rng);
    const Var yd = conv_d.forward(Var::leaf(random_tensor(rng, {8, 8, 3})));
    CHECK(yd.value().height() == 8);

    Conv2dOptions strided;
    strided.stride = 2;
    Conv2d conv_s(3, 4, 3, strided, rng);
    const Var ys = conv_s.forward(Var::leaf(random_tensor(rng, {8, 8, 3})));
    CHECK(ys.value().height() == 4);
}

TEST_CASE("conv2d rejects even kernels and channel mismatches") {
    Rng rng(1);
    CHECK_THROWS_AS(Conv2d(3, 4, 2, Conv2dOptions{}, rng), ConfigError);
    Conv2d conv(3, 4, 3, Conv2dOptions{}, rng);
    CHECK_THROWS_AS(conv.forward(Var::leaf(Tensor({4, 4, 2}))), ConfigError);
}

TEST_CASE("spectral normalization bounds the top singular value") {
    Rng rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        Var w = Var::leaf(random_tensor(rng, {6, 3, 3, 4}, -1.0, 1.0), true);
        SpectralState state;
        state.u = random_tensor(rng, {6}, -1.0, 1.0);

        const Var wn = spectral_norm_weight(w, state, 50, true);
        const double top = top_singular_value(wn.value());
        CHECK(top <= 1.0 + 1e-3);
        CHECK(top > 0.5);  // normalization divides by sigma, not more

        // The estimate itself converges to the dense-SVD value.
        CHECK(state.last_sigma == doctest::Approx(top_singular_value(w.value())).epsilon(1e-6));
    }
}

TEST_CASE("spectral norm flags the zero-matrix floor") {
    Var w = Var::leaf(Tensor({4, 8}), true);
    SpectralState state;
    state.u = Tensor::full({4}, 0.5);
    const Var wn = spectral_norm_weight(w, state, 10, true);
    CHECK(state.sigma_floored);
    CHECK(state.last_sigma == 1e-12);
    CHECK(wn.value().all_finite());
}

TEST_CASE("spectral norm gradient matches finite differences at convergence") {
    Rng rng(9);
    Tensor w0 = random_tensor(rng, {3, 4}, -1.0, 1.0);
    const Tensor u0 = random_tensor(rng, {3}, -1.0, 1.0);
    const Tensor probe_dir = random_tensor(rng, {3, 4}, -1.0, 1.0);

    const auto eval = [&](const Tensor& wt) {
        Var w = Var::leaf(wt, false);
        SpectralState state;
        state.u = u0;
        // persist_u=false keeps the evaluation a pure function of w.
        Var wn = spectral_norm_weight(w, state, 100, false);
        double acc = 0.0;
        for (std::int64_t i = 0; i < wn.value().size(); ++i) acc += wn.value()[i] * probe_dir[i];
        return acc;
    };

    Var w = Var::leaf(w0, true);
    SpectralState state;
    state.u = u0;
    Var wn = spectral_norm_weight(w, state, 100, false);
    Var loss = sum(mul(wn, Var::leaf(probe_dir)));
    backward(loss);

    const double worst = testutil::max_grad_rel_error(
        w0, w.grad(), [&]() { return eval(w0); });
    CHECK(worst < 1e-5);
}

TEST_CASE("conv2d effective weight is cached between refreshes") {
    Rng rng(13);
    Conv2dOptions opts;
    opts.spectral_norm = true;
    Conv2d conv(2, 4, 3, opts, rng);
    conv.set_sn_policy(5, true);

    const Tensor x = random_tensor(rng, {4, 4, 2});
    conv.refresh_effective_weight();
    const Tensor y1 = conv.forward(Var::leaf(x)).value();
    const Tensor y2 = conv.forward(Var::leaf(x)).value();
    for (std::int64_t i = 0; i < y1.size(); ++i) CHECK(y1[i] == y2[i]);

    // New refreshes advance the power iteration, changing the estimate.
    conv.refresh_effective_weight();
    conv.refresh_effective_weight();
    const Tensor y3 = conv.forward(Var::leaf(x)).value();
    CHECK(y3.same_shape(y1));
}

TEST_CASE("linear layer applies weight and bias") {
    Rng rng(3);
    Linear lin(3, 2, false, rng);
    const Tensor x = random_tensor(rng, {3}, -1.0, 1.0);
    const Var y = lin.forward(Var::leaf(x));
    REQUIRE(y.value().size() == 2);
    const Tensor& w = lin.weight().value();
    for (int o = 0; o < 2; ++o) {
        double acc = lin.bias().value()[o];
        for (int i = 0; i < 3; ++i) acc += w.at(o, i) * x[i];
        CHECK(y.value()[o] == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("residual dense block reduces to identity with zero fusion") {
    Rng rng(7);
    ResidualDenseBlock block(6, RdbConfig{}, rng);
    block.fusion().weight().mutable_value().fill(0.0);
    block.fusion().bias().mutable_value().fill(0.0);
    const Tensor x = random_tensor(rng, {4, 4, 6});
    const Tensor y = block.forward(Var::leaf(x)).value();
    for (std::int64_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("residual dense block grows dense inputs layer by layer") {
    Rng rng(7);
    RdbConfig cfg;
    cfg.num_layers = 3;
    cfg.growth_rate = 5;
    ResidualDenseBlock block(4, cfg, rng);
    CHECK(block.num_layers() == 3);
    CHECK(block.layer(0).in_channels() == 4);
    CHECK(block.layer(1).in_channels() == 9);
    CHECK(block.layer(2).in_channels() == 14);
    CHECK(block.fusion().in_channels() == 19);
    CHECK(block.fusion().out_channels() == 4);

    const Var y = block.forward(Var::leaf(random_tensor(rng, {4, 4, 4})));
    CHECK(y.value().channels() == 4);
}

TEST_CASE("urdb shapes, divisibility guard and skip wiring") {
    Rng rng(11);
    UrdbConfig cfg;
    cfg.base_channels = 8;
    Urdb urdb(5, 7, cfg, rng);
    CHECK(urdb.spatial_divisor() == 4);
    CHECK(urdb.contraction_channels() == std::vector<int>{8, 16});
    CHECK(urdb.expansion_channels() == std::vector<int>{16, 8});

    const Var y = urdb.forward(Var::leaf(random_tensor(rng, {8, 12, 5})));
    CHECK(y.value().height() == 8);
    CHECK(y.value().width() == 12);
    CHECK(y.value().channels() == 7);

    CHECK_THROWS_AS(urdb.forward(Var::leaf(Tensor({6, 8, 5}))), PreconditionError);
    CHECK_THROWS_AS(urdb.forward(Var::leaf(Tensor({8, 8, 3}))), ConfigError);
}

TEST_CASE("aspp fuses dilated branches to the declared width") {
    Rng rng(15);
    AsppConfig cfg;
    cfg.dilation_rates = {1, 2};
    cfg.out_channels = 6;
    Aspp aspp(4, cfg, rng);
    CHECK(aspp.num_branches() == 3);  // two dilation branches + global pool
    const Var y = aspp.forward(Var::leaf(random_tensor(rng, {8, 8, 4})));
    CHECK(y.value().channels() == 6);
    CHECK(y.value().height() == 8);

    cfg.include_global_pool = false;
    Aspp no_pool(4, cfg, rng);
    CHECK(no_pool.num_branches() == 2);

    cfg.dilation_rates = {2, 2};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("conv lstm step matches hand-computed scalar gates") {
    Rng rng(19);
    ConvLstmCell cell(1, 1, 1, rng);

    // One spatial cell, 1x1 kernel: the gate conv is a plain affine map of
    // [x, h]. Fix its parameters to known values.
    auto params = cell.named_parameters();
    REQUIRE(params.size() == 2);  // weight + bias of the gate conv
    Tensor* wp = nullptr;
    Tensor* bp = nullptr;
    for (auto& p : params) {
        if (p.var.value().rank() == 4) wp = &p.var.mutable_value();
        if (p.var.value().rank() == 1) bp = &p.var.mutable_value();
    }
    REQUIRE(wp != nullptr);
    REQUIRE(bp != nullptr);
    REQUIRE(wp->shape() == std::vector<int>{4, 1, 1, 2});
    // Gate rows in order: input, forget, output, candidate.
    const double W[4][2] = {{0.3, -0.2}, {0.5, 0.1}, {-0.4, 0.6}, {0.7, 0.2}};
    const double B[4] = {0.01, -0.02, 0.03, -0.04};
    for (int g = 0; g < 4; ++g) {
        (*wp)[2 * g] = W[g][0];
        (*wp)[2 * g + 1] = W[g][1];
        (*bp)[g] = B[g];
    }

    const double x = 0.8, h0 = -0.5, c0 = 0.25;
    ConvLstmState state;
    state.hidden = Var::leaf(Tensor::from_data({1, 1, 1}, {h0}));
    state.cell = Var::leaf(Tensor::from_data({1, 1, 1}, {c0}));

    auto [hv, next] = cell.step(Var::leaf(Tensor::from_data({1, 1, 1}, {x})), state);

    const auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
    const double i_g = sig(W[0][0] * x + W[0][1] * h0 + B[0]);
    const double f_g = sig(W[1][0] * x + W[1][1] * h0 + B[1]);
    const double o_g = sig(W[2][0] * x + W[2][1] * h0 + B[2]);
    const double cand = std::tanh(W[3][0] * x + W[3][1] * h0 + B[3]);
    const double c1 = f_g * c0 + i_g * cand;
    const double h1 = o_g * std::tanh(c1);

    CHECK(next.cell.value()[0] == doctest::Approx(c1).epsilon(1e-12));
    CHECK(hv.value()[0] == doctest::Approx(h1).epsilon(1e-12));
}

TEST_CASE("conv lstm initial state is zero and step checks alignment") {
    Rng rng(23);
    ConvLstmCell cell(3, 4, 3, rng);
    const ConvLstmState s0 = cell.initial_state(6, 6);
    CHECK(s0.defined());
    CHECK(s0.hidden.value().max_value() == 0.0);
    CHECK(s0.hidden.value().channels() == 4);

    CHECK_THROWS_AS(cell.step(Var::leaf(Tensor({6, 6, 3})), ConvLstmState{}), StateError);
    CHECK_THROWS_AS(cell.step(Var::leaf(Tensor({4, 4, 3})), s0), ConfigError);
    CHECK_THROWS_AS(cell.step(Var::leaf(Tensor({6, 6, 2})), s0), ConfigError);

    auto [h, s1] = cell.step(Var::leaf(random_tensor(rng, {6, 6, 3})), s0);
    CHECK(h.value().channels() == 4);
    CHECK(s1.cell.value().same_shape(s1.hidden.value()));
}

TEST_CASE("module parameter registration uses dotted paths") {
    Rng rng(27);
    ResidualDenseBlock block(4, RdbConfig{}, rng);
    const auto params = block.named_parameters();
    CHECK(params.size() == 10);  // 4 dense layers + fusion, each weight + bias
    bool found_fusion = false;
    for (const auto& p : params) {
        if (p.name.find("fusion.weight") != std::string::npos) found_fusion = true;
        CHECK(p.var.requires_grad());
    }
    CHECK(found_fusion);
    CHECK(block.parameter_count() > 0);

    block.zero_grad();
    for (const auto& p : block.named_parameters()) {
        CHECK(p.var.grad().max_value() == 0.0);
    }
}
