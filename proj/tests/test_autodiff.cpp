#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "m2gan/autodiff.hpp"
#include "test_util.hpp"

using namespace m2gan;
using testutil::max_grad_rel_error;
using testutil::random_tensor;

namespace {

// Finite-difference check for a scalar-valued graph builder: rebuilds the
// graph per evaluation so the comparison covers the whole forward path.
void check_gradient(Tensor x0, const std::function<Var(const Var&)>& build, double tol = 1e-6) {
    Var x = Var::leaf(x0, true);
    Var y = build(x);
    REQUIRE(y.value().size() == 1);
    backward(y);
    const Tensor analytic = x.grad();

    Tensor probe = x0;
    const auto eval = [&]() {
        Var xl = Var::leaf(probe, false);
        return build(xl).value()[0];
    };
    CHECK(max_grad_rel_error(probe, analytic, eval) < tol);
}

}  // namespace

TEST_CASE("leaf and make_op basics") {
    Var a = Var::leaf(Tensor::scalar(2.0), true);
    CHECK(a.requires_grad());
    Var b = a.detach();
    CHECK_FALSE(b.requires_grad());
    CHECK(b.value()[0] == 2.0);

    Var c = add(a, Var::leaf(Tensor::scalar(3.0)));
    CHECK(c.value()[0] == 5.0);
    CHECK(c.requires_grad());
    backward(c);
    CHECK(a.grad()[0] == 1.0);
}

TEST_CASE("gradient accumulates across reuse of a leaf") {
    Var a = Var::leaf(Tensor::scalar(3.0), true);
    Var y = add(mul(a, a), a);  // a^2 + a, dy/da = 2a + 1 = 7
    backward(y);
    CHECK(a.grad()[0] == doctest::Approx(7.0));

    // A second independent graph accumulates on top unless zeroed.
    Var y2 = scale(a, 2.0);
    backward(y2);
    CHECK(a.grad()[0] == doctest::Approx(9.0));
    a.zero_grad();
    CHECK(a.grad()[0] == 0.0);
}

TEST_CASE("elementwise op gradients match finite differences") {
    Rng rng(21);
    const Tensor x = random_tensor(rng, {3, 4, 2}, 0.15, 0.85);

    Rng other_rng(5);
    const Tensor other_t = random_tensor(other_rng, {3, 4, 2}, -1.0, 1.0);
    check_gradient(x, [](const Var& v) { return sum(mul(v, v)); });
    check_gradient(x, [&](const Var& v) {
        Var other = Var::leaf(other_t);
        return sum(mul(add(v, other), sub(v, other)));
    });
    check_gradient(x, [](const Var& v) { return sum(neg(v)); });
    check_gradient(x, [](const Var& v) { return sum(scale(v, -2.5)); });
    check_gradient(x, [](const Var& v) { return sum(add_const(v, 1.5)); });
    check_gradient(x, [](const Var& v) { return sum(vlog(add_const(v, 0.5))); });
    check_gradient(x, [](const Var& v) { return sum(sigmoid(v)); });
    check_gradient(x, [](const Var& v) { return sum(vtanh(v)); });
    check_gradient(x, [](const Var& v) { return sum(softplus(v)); });
    check_gradient(x, [](const Var& v) { return mean(mul(v, sigmoid(v))); });
}

TEST_CASE("kinked op gradients away from their kinks") {
    // Values bounded away from 0 and 1 so the finite-difference probe never
    // crosses a non-differentiable point.
    const Tensor x = Tensor::from_data({2, 2, 1}, {0.2, 0.7, -0.4, 0.45});
    check_gradient(x, [](const Var& v) { return sum(vabs(v)); });
    check_gradient(x, [](const Var& v) { return sum(leaky_relu(v, 0.2)); });
    check_gradient(x, [](const Var& v) { return sum(clamp01(v)); });

    // clamp01 passes gradient only inside the interval.
    Var v = Var::leaf(Tensor::from_data({3}, {-0.5, 0.5, 1.5}), true);
    backward(sum(clamp01(v)));
    CHECK(v.grad()[0] == 0.0);
    CHECK(v.grad()[1] == 1.0);
    CHECK(v.grad()[2] == 0.0);
}

TEST_CASE("reduction values and gradients") {
    Var v = Var::leaf(Tensor::from_data({4}, {1.0, 2.0, 3.0, 4.0}), true);
    Var s = sum(v);
    CHECK(s.value()[0] == 10.0);
    Var m = mean(v);
    CHECK(m.value()[0] == 2.5);
    backward(m);
    CHECK(v.grad()[0] == doctest::Approx(0.25));

    std::vector<Var> scalars = {Var::leaf(Tensor::scalar(1.0)), Var::leaf(Tensor::scalar(5.0))};
    CHECK(mean_of(scalars).value()[0] == 3.0);
    CHECK(stack_scalars(scalars).value().size() == 2);
}

TEST_CASE("concat and slice are inverses with routed gradients") {
    Rng rng(4);
    const Tensor a = random_tensor(rng, {2, 2, 2});
    const Tensor b = random_tensor(rng, {2, 2, 3});
    Var va = Var::leaf(a, true), vb = Var::leaf(b, true);
    Var cat = concat_channels({va, vb});
    CHECK(cat.value().channels() == 5);

    Var back_a = slice_channels(cat, 0, 2);
    for (std::int64_t i = 0; i < a.size(); ++i) CHECK(back_a.value()[i] == a[i]);

    backward(sum(slice_channels(cat, 2, 5)));
    for (std::int64_t i = 0; i < a.size(); ++i) CHECK(va.grad()[i] == 0.0);
    for (std::int64_t i = 0; i < b.size(); ++i) CHECK(vb.grad()[i] == 1.0);

    check_gradient(a, [](const Var& v) { return sum(mul(slice_channels(v, 1, 2), slice_channels(v, 0, 1))); });
}

TEST_CASE("reflect_pad values and gradient") {
    const Tensor x = Tensor::from_data({2, 2, 1}, {1.0, 2.0, 3.0, 4.0});
    Var v = Var::leaf(x, true);
    Var p = reflect_pad(v, 1);
    CHECK(p.value().height() == 4);
    CHECK(p.value().width() == 4);
    // Reflection without edge repetition: row -1 mirrors row 1.
    CHECK(p.value().at(0, 1, 0) == 3.0);
    CHECK(p.value().at(1, 0, 0) == 2.0);
    CHECK(p.value().at(0, 0, 0) == 4.0);

    check_gradient(x, [](const Var& q) { return sum(mul(reflect_pad(q, 1), reflect_pad(q, 1))); });
}

namespace {

// Direct-loop valid cross-correlation used as the conv2d oracle.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int dilation) {
    const int oc = w.dim(0), kh = w.dim(1), kw = w.dim(2), ic = w.dim(3);
    const int oh = (x.height() - dilation * (kh - 1) - 1) / stride + 1;
    const int ow = (x.width() - dilation * (kw - 1) - 1) / stride + 1;
    Tensor y({oh, ow, oc});
    for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j)
            for (int o = 0; o < oc; ++o) {
                double acc = b[o];
                for (int u = 0; u < kh; ++u)
                    for (int v = 0; v < kw; ++v)
                        for (int c = 0; c < ic; ++c)
                            acc += x.at(i * stride + u * dilation, j * stride + v * dilation, c) *
                                   w[((static_cast<std::int64_t>(o) * kh + u) * kw + v) * ic + c];
                y.at(i, j, o) = acc;
            }
    return y;
}

}  // namespace

TEST_CASE("conv2d forward matches a direct-loop oracle") {
    Rng rng(17);
    for (const auto& [stride, dilation] : std::vector<std::pair<int, int>>{{1, 1}, {2, 1}, {1, 2}, {2, 2}}) {
        const Tensor x = random_tensor(rng, {7, 8, 3}, -1.0, 1.0);
        const Tensor w = random_tensor(rng, {4, 3, 3, 3}, -0.5, 0.5);
        const Tensor b = random_tensor(rng, {4}, -0.1, 0.1);
        const Var y = conv2d(Var::leaf(x), Var::leaf(w), Var::leaf(b), stride, dilation);
        const Tensor ref = naive_conv(x, w, b, stride, dilation);
        REQUIRE(y.value().same_shape(ref));
        for (std::int64_t i = 0; i < ref.size(); ++i) {
            CHECK(y.value()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("conv2d gradients w.r.t. input, weight and bias") {
    Rng rng(29);
    const Tensor x = random_tensor(rng, {5, 5, 2}, -1.0, 1.0);
    const Tensor w = random_tensor(rng, {3, 3, 3, 2}, -0.5, 0.5);
    const Tensor b = random_tensor(rng, {3}, -0.1, 0.1);

    for (const auto& [stride, dilation] : std::vector<std::pair<int, int>>{{1, 1}, {2, 1}, {1, 2}}) {
        const int s = stride, d = dilation;
        check_gradient(x, [&](const Var& v) {
            return sum(mul(conv2d(v, Var::leaf(w), Var::leaf(b), s, d),
                           conv2d(v, Var::leaf(w), Var::leaf(b), s, d)));
        });
        check_gradient(w, [&](const Var& v) {
            Var y = conv2d(Var::leaf(x), v, Var::leaf(b), s, d);
            return sum(mul(y, y));
        });
        check_gradient(b, [&](const Var& v) {
            Var y = conv2d(Var::leaf(x), Var::leaf(w), v, s, d);
            return sum(mul(y, y));
        });
    }
}

TEST_CASE("pooling and upsampling") {
    const Tensor x = Tensor::from_data({2, 2, 1}, {1.0, 2.0, 3.0, 4.0});
    Var v = Var::leaf(x, true);

    Var pooled = avg_pool2(v);
    CHECK(pooled.value().height() == 1);
    CHECK(pooled.value()[0] == 2.5);

    Var up = upsample_nearest2(pooled);
    CHECK(up.value().height() == 2);
    CHECK(up.value()[3] == 2.5);

    Var g = global_avg_pool(v);
    CHECK(g.value().rank() == 1);
    CHECK(g.value()[0] == 2.5);

    Var bcast = broadcast_spatial(g, 3, 2);
    CHECK(bcast.value().height() == 3);
    CHECK(bcast.value().at(2, 1, 0) == 2.5);

    check_gradient(x, [](const Var& q) { return sum(mul(avg_pool2(q), avg_pool2(q))); });
    check_gradient(x, [](const Var& q) { return sum(mul(upsample_nearest2(q), upsample_nearest2(q))); });
    check_gradient(x, [](const Var& q) { return sum(mul(broadcast_spatial(global_avg_pool(q), 4, 4),
                                                        broadcast_spatial(global_avg_pool(q), 4, 4))); });
}

TEST_CASE("odd-sized pooling rejects") {
    Var v = Var::leaf(Tensor({3, 3, 1}));
    CHECK_THROWS_AS(avg_pool2(v), PreconditionError);
}

TEST_CASE("linear layer op") {
    const Tensor x = Tensor::from_data({2}, {1.0, 2.0});
    const Tensor w = Tensor::from_data({2, 2}, {1.0, 0.0, 0.0, 1.0});
    const Tensor b = Tensor::from_data({2}, {0.5, -0.5});
    Var y = linear(Var::leaf(x), Var::leaf(w), Var::leaf(b));
    CHECK(y.value()[0] == 1.5);
    CHECK(y.value()[1] == 1.5);

    Rng rng(31);
    const Tensor xr = random_tensor(rng, {5}, -1.0, 1.0);
    const Tensor wr = random_tensor(rng, {3, 5}, -1.0, 1.0);
    const Tensor br = random_tensor(rng, {3}, -1.0, 1.0);
    check_gradient(xr, [&](const Var& v) {
        Var out = linear(v, Var::leaf(wr), Var::leaf(br));
        return sum(mul(out, out));
    });
    check_gradient(wr, [&](const Var& v) {
        Var out = linear(Var::leaf(xr), v, Var::leaf(br));
        return sum(mul(out, out));
    });
}

TEST_CASE("channel_softmax normalizes and differentiates") {
    Rng rng(37);
    const Tensor x = random_tensor(rng, {3, 3, 4}, -2.0, 2.0);
    Var s = channel_softmax(Var::leaf(x), 0.5);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (int c = 0; c < 4; ++c) {
                const double v = s.value().at(i, j, c);
                CHECK(v >= 0.0);
                acc += v;
            }
            CHECK(acc == doctest::Approx(1.0).epsilon(1e-12));
        }

    check_gradient(x, [](const Var& v) {
        Var sm = channel_softmax(v, 0.5);
        return sum(mul(sm, sm));
    });

    // Large magnitudes must not overflow the exponentials.
    Tensor huge({1, 1, 3});
    huge[0] = 1e6;
    huge[1] = -1e6;
    huge[2] = 0.0;
    Var hs = channel_softmax(Var::leaf(huge), 1.0);
    CHECK(hs.value().all_finite());
    CHECK(hs.value()[0] == doctest::Approx(1.0));
}

TEST_CASE("backward rejects non-scalar roots") {
    Var v = Var::leaf(Tensor({2, 2, 1}), true);
    CHECK_THROWS_AS(backward(add(v, v)), PreconditionError);
}
