#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dgar/gradcheck.hpp"
#include "dgar/ops.hpp"
#include "dgar/optim.hpp"
#include "test_util.hpp"

using namespace dgar;
using testutil::rand_away_from_zero;
using testutil::randn;

namespace {

constexpr int kSeedsPerOp = 20;
constexpr double kTol = 1e-5;  // f64 relative error budget per primitive

// FD-checks d(loss)/d(param) where loss = sum(weights ⊙ op(param, ...)).
// Random fixed weights exercise the whole Jacobian, not just row sums.
template <class BuildOp>
double check_op(Rng& rng, Parameter<double>& p, BuildOp&& op_of) {
    Tensor<double> w;
    {
        auto probe = op_of(Var<double>::constant(p.value));
        w = randn<double>(rng, probe.value().shape());
    }
    auto builder = [&]() {
        BoundLoss<double> r;
        r.leaves = {bind(p)};
        r.loss = sum_all(mul(op_of(r.leaves[0]), Var<double>::constant(w)));
        return r;
    };
    return finite_diff_check<double>(builder, {&p});
}

}  // namespace

TEST_CASE("elementwise ops match finite differences") {
    for (int seed = 0; seed < kSeedsPerOp; ++seed) {
        Rng rng(100 + seed);
        Parameter<double> p("p", randn<double>(rng, {3, 7}));
        Parameter<double> q("q", rand_away_from_zero<double>(rng, {3, 7}));

        CHECK(check_op(rng, p, [](Var<double> v) { return sigmoid(v); }) < kTol);
        CHECK(check_op(rng, p, [](Var<double> v) { return tanh_op(v); }) < kTol);
        CHECK(check_op(rng, p, [](Var<double> v) { return exp_op(scale(v, 0.3)); }) < kTol);
        CHECK(check_op(rng, p, [](Var<double> v) { return softplus(v); }) < kTol);
        CHECK(check_op(rng, p, [](Var<double> v) { return powi(v, 3); }) < kTol);
        CHECK(check_op(rng, p, [](Var<double> v) { return mul(v, v); }) < kTol);
        CHECK(check_op(rng, p, [](Var<double> v) { return sub(scale(v, 2.0), v); }) < kTol);
        // kink ops evaluated away from the origin
        CHECK(check_op(rng, q, [](Var<double> v) { return relu(v); }) < kTol);
        CHECK(check_op(rng, q, [](Var<double> v) { return leaky_relu(v, 0.01); }) < kTol);
        // sqrt on strictly positive input
        Parameter<double> pos("pos", testutil::rand_uniform<double>(rng, {4, 5}, 0.5, 2.0));
        CHECK(check_op(rng, pos, [](Var<double> v) { return sqrt_op(v); }) < kTol);
    }
}

TEST_CASE("reductions and broadcasts match finite differences") {
    for (int seed = 0; seed < kSeedsPerOp; ++seed) {
        Rng rng(200 + seed);
        Parameter<double> p("p", randn<double>(rng, {4, 6}));
        CHECK(check_op(rng, p, [](Var<double> v) { return mean_rows(v); }) < kTol);
        CHECK(check_op(rng, p, [](Var<double> v) { return sum_axis(v, 1); }) < kTol);
        CHECK(check_op(rng, p, [](Var<double> v) { return mean_all(v); }) < kTol);
        CHECK(check_op(rng, p, [](Var<double> v) { return sumsq(v); }) < kTol);
        CHECK(check_op(rng, p, [](Var<double> v) { return sub_rowvec(v, mean_rows(v)); }) < kTol);
        CHECK(check_op(rng, p, [](Var<double> v) { return slice_rows(v, 1, 3); }) < kTol);
        CHECK(check_op(rng, p, [](Var<double> v) { return slice_col(v, 2); }) < kTol);
        CHECK(check_op(rng, p, [](Var<double> v) { return reshape(v, {24}); }) < kTol);
        CHECK(check_op(rng, p, [](Var<double> v) {
                  return scale_rows(v, slice_col(v, 0));
              }) < kTol);
    }
}

TEST_CASE("matmul and linear match finite differences") {
    for (int seed = 0; seed < kSeedsPerOp; ++seed) {
        Rng rng(300 + seed);
        Tensor<double> other = randn<double>(rng, {6, 5});
        Parameter<double> p("p", randn<double>(rng, {4, 6}));
        for (bool ta : {false, true})
            for (bool tb : {false, true}) {
                auto shaped = ta ? Tensor<double>::from({6, 4}, p.value.vec()) : p.value;
                Parameter<double> a("a", shaped);
                auto o = tb ? Tensor<double>::from({5, 6}, other.vec()) : other;
                CHECK(check_op(rng, a, [&](Var<double> v) {
                          return matmul(v, Var<double>::constant(o), ta, tb);
                      }) < kTol);
                // gradient w.r.t. the right operand
                Parameter<double> b("b", o);
                CHECK(check_op(rng, b, [&](Var<double> v) {
                          return matmul(Var<double>::constant(shaped), v, ta, tb);
                      }) < kTol);
            }

        Parameter<double> w("w", randn<double>(rng, {3, 6}));
        Parameter<double> bias("b", randn<double>(rng, {3}));
        Tensor<double> x = randn<double>(rng, {5, 6});
        auto builder = [&]() {
            BoundLoss<double> r;
            r.leaves = {bind(w), bind(bias)};
            auto out = linear(Var<double>::constant(x), r.leaves[0], r.leaves[1]);
            r.loss = sumsq(out);
            return r;
        };
        CHECK(finite_diff_check<double>(builder, {&w, &bias}) < kTol);
    }
}

TEST_CASE("conv1d, pooling, batchnorm match finite differences") {
    for (int seed = 0; seed < kSeedsPerOp; ++seed) {
        Rng rng(400 + seed);
        Tensor<double> x = randn<double>(rng, {2, 3, 8});
        Parameter<double> w("w", randn<double>(rng, {4, 3, 3}, 0.4));
        Parameter<double> b("b", randn<double>(rng, {4}, 0.2));
        Parameter<double> px("x", x);

        auto conv_builder = [&]() {
            BoundLoss<double> r;
            r.leaves = {bind(w), bind(b), bind(px)};
            auto out = conv1d(r.leaves[2], r.leaves[0], r.leaves[1], 1);
            r.loss = sumsq(out);
            return r;
        };
        CHECK(finite_diff_check<double>(conv_builder, {&w, &b, &px}) < kTol);

        // padding 0 path
        auto conv0_builder = [&]() {
            BoundLoss<double> r;
            r.leaves = {bind(w), bind(px)};
            Var<double> none;
            auto out = conv1d(r.leaves[1], r.leaves[0], none, 0);
            r.loss = sumsq(out);
            return r;
        };
        CHECK(finite_diff_check<double>(conv0_builder, {&w, &px}) < kTol);

        // maxpool away from ties
        Parameter<double> pool_in("pin", rand_away_from_zero<double>(rng, {2, 3, 8}, 0.05));
        CHECK(check_op(rng, pool_in, [](Var<double> v) { return maxpool1d(v); }) < kTol);
        CHECK(check_op(rng, pool_in, [](Var<double> v) { return global_avg_pool(v); }) < kTol);

        // batchnorm, train mode (batch statistics differentiable)
        Parameter<double> gamma("g", testutil::rand_uniform<double>(rng, {3}, 0.5, 1.5));
        Parameter<double> beta("beta", randn<double>(rng, {3}, 0.2));
        Parameter<double> bx("bx", randn<double>(rng, {2, 3, 6}));
        auto bn_builder = [&]() {
            BoundLoss<double> r;
            r.leaves = {bind(gamma), bind(beta), bind(bx)};
            BatchNormBuffers<double> buf(3);  // fresh buffers: builder stays pure
            auto out = batchnorm1d(r.leaves[2], r.leaves[0], r.leaves[1], buf, true);
            r.loss = sumsq(out);
            return r;
        };
        CHECK(finite_diff_check<double>(bn_builder, {&gamma, &beta, &bx}) < kTol);

        // eval mode: deterministic affine map of the running stats
        BatchNormBuffers<double> ebuf(3);
        for (int c = 0; c < 3; ++c) {
            ebuf.running_mean[c] = rng.gaussian(0, 0.3);
            ebuf.running_var[c] = rng.uniform(0.5, 1.5);
        }
        auto bn_eval_builder = [&]() {
            BoundLoss<double> r;
            r.leaves = {bind(gamma), bind(beta), bind(bx)};
            auto buf = ebuf;
            auto out = batchnorm1d(r.leaves[2], r.leaves[0], r.leaves[1], buf, false);
            r.loss = sumsq(out);
            return r;
        };
        CHECK(finite_diff_check<double>(bn_eval_builder, {&gamma, &beta, &bx}) < kTol);
    }
}

TEST_CASE("softmax and cross-entropy") {
    // softmax([0, 0]) = [0.5, 0.5]
    auto v = Var<double>::constant(Tensor<double>::from({1, 2}, {0.0, 0.0}));
    auto s = softmax(v);
    CHECK(s.value()[0] == doctest::Approx(0.5));
    CHECK(s.value()[1] == doctest::Approx(0.5));

    // uniform logits, C = 6: loss = ln 6
    auto lv = Var<double>::constant(Tensor<double>({1, 6}, 0.0));
    auto ce = cross_entropy_logits(lv, {3});
    CHECK(ce.value()[0] == doctest::Approx(std::log(6.0)).epsilon(1e-9));
    CHECK(ce.value()[0] == doctest::Approx(1.791759).epsilon(1e-5));

    // rows sum to 1, entries nonnegative
    Rng rng(7);
    for (int seed = 0; seed < kSeedsPerOp; ++seed) {
        auto x = randn<double>(rng, {5, 9}, 3.0);
        auto sm = softmax(Var<double>::constant(x));
        for (int64_t i = 0; i < 5; ++i) {
            double row = 0;
            for (int64_t j = 0; j < 9; ++j) {
                CHECK(sm.value().at(i, j) >= 0.0);
                row += sm.value().at(i, j);
            }
            CHECK(row == doctest::Approx(1.0).epsilon(1e-6));
        }
    }

    // FD for softmax and CE
    for (int seed = 0; seed < kSeedsPerOp; ++seed) {
        Rng r2(500 + seed);
        Parameter<double> p("p", randn<double>(r2, {4, 6}));
        CHECK(check_op(r2, p, [](Var<double> x) { return softmax(x); }) < kTol);
        auto builder = [&]() {
            BoundLoss<double> rr;
            rr.leaves = {bind(p)};
            rr.loss = cross_entropy_logits(rr.leaves[0], {0, 3, 5, 1});
            return rr;
        };
        CHECK(finite_diff_check<double>(builder, {&p}) < kTol);
    }

    // closed-form CE gradient: (softmax - onehot) / B
    Rng r3(77);
    Parameter<double> logits("lg", randn<double>(r3, {3, 4}));
    std::vector<int> labels{2, 0, 1};
    auto leaf = bind(logits);
    auto loss = cross_entropy_logits(leaf, labels);
    backward(loss);
    auto probs = softmax(Var<double>::constant(logits.value()));
    for (int64_t i = 0; i < 3; ++i)
        for (int64_t j = 0; j < 4; ++j) {
            double expect = (probs.value().at(i, j) - (labels[size_t(i)] == j ? 1.0 : 0.0)) / 3.0;
            CHECK(leaf.grad().at(i, j) == doctest::Approx(expect).epsilon(1e-9));
        }
}

TEST_CASE("pairwise sqdist and wasserstein primitives") {
    for (int seed = 0; seed < kSeedsPerOp; ++seed) {
        Rng rng(600 + seed);
        Parameter<double> a("a", randn<double>(rng, {4, 3}));
        Tensor<double> b = randn<double>(rng, {5, 3});
        CHECK(check_op(rng, a, [&](Var<double> v) {
                  return pairwise_sqdist(v, Var<double>::constant(b));
              }) < kTol);
        CHECK(check_op(rng, a, [&](Var<double> v) {
                  return pairwise_sqdist(Var<double>::constant(b), v);
              }) < kTol);

        // 1-D Wasserstein with distinct sorted values (unequal sizes)
        Parameter<double> xs("xs", rand_away_from_zero<double>(rng, {5}, 0.05));
        Tensor<double> ys = rand_away_from_zero<double>(rng, {7}, 0.05);
        auto builder = [&]() {
            BoundLoss<double> r;
            r.leaves = {bind(xs)};
            r.loss = wasserstein2_sq_1d(r.leaves[0], Var<double>::constant(ys));
            return r;
        };
        CHECK(finite_diff_check<double>(builder, {&xs}) < kTol);
    }

    // point masses {0}, {1}: W2^2 = 1
    auto x = Var<double>::constant(Tensor<double>::from({1}, {0.0}));
    auto y = Var<double>::constant(Tensor<double>::from({1}, {1.0}));
    CHECK(wasserstein2_sq_1d(x, y).value()[0] == doctest::Approx(1.0));

    // equal-size case agrees with sorted mean-square difference
    Rng rng(9);
    auto xs = randn<double>(rng, {6});
    auto ys = randn<double>(rng, {6});
    auto w = wasserstein2_sq_1d(Var<double>::constant(xs), Var<double>::constant(ys));
    std::vector<double> sx(xs.vec()), sy(ys.vec());
    std::sort(sx.begin(), sx.end());
    std::sort(sy.begin(), sy.end());
    double expect = 0;
    for (int i = 0; i < 6; ++i) expect += (sx[i] - sy[i]) * (sx[i] - sy[i]) / 6.0;
    CHECK(w.value()[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("covariance: hand case and finite differences") {
    // 2 samples {(0,0), (2,0)} -> [[2, 0], [0, 0]]
    auto h = Var<double>::constant(Tensor<double>::from({2, 2}, {0, 0, 2, 0}));
    auto cov = batch_covariance(h);
    CHECK(cov.value().at(0, 0) == doctest::Approx(2.0));
    CHECK(cov.value().at(0, 1) == doctest::Approx(0.0));
    CHECK(cov.value().at(1, 0) == doctest::Approx(0.0));
    CHECK(cov.value().at(1, 1) == doctest::Approx(0.0));

    // constant rows -> zero matrix; symmetry on random input
    auto hc = Var<double>::constant(Tensor<double>::from({3, 2}, {1, 2, 1, 2, 1, 2}));
    auto covc = batch_covariance(hc);
    for (int64_t i = 0; i < 4; ++i) CHECK(covc.value()[i] == doctest::Approx(0.0));

    for (int seed = 0; seed < kSeedsPerOp; ++seed) {
        Rng rng(700 + seed);
        Parameter<double> p("p", randn<double>(rng, {6, 4}));
        CHECK(check_op(rng, p, [](Var<double> v) { return batch_covariance(v); }) < kTol);
        auto cv = batch_covariance(Var<double>::constant(p.value));
        for (int64_t i = 0; i < 4; ++i)
            for (int64_t j = 0; j < 4; ++j)
                CHECK(cv.value().at(i, j) == doctest::Approx(cv.value().at(j, i)).epsilon(1e-12));
    }

    CHECK_THROWS_AS(batch_covariance(Var<double>::constant(Tensor<double>({1, 3}))), ShapeError);
}

TEST_CASE("grad: analytic cases and disconnected parameters") {
    // loss = sum(p^2), p = [1, 2] -> grad [2, 4]
    Parameter<double> p("p", Tensor<double>::from({2}, {1.0, 2.0}));
    auto leaf = bind(p);
    auto loss = sumsq(leaf);
    backward(loss);
    CHECK(leaf.grad()[0] == doctest::Approx(2.0));
    CHECK(leaf.grad()[1] == doctest::Approx(4.0));

    // non-scalar loss rejected
    CHECK_THROWS_AS(backward(leaf), ShapeError);

    // disconnected parameter: grad stays zero after collect
    Parameter<double> unused("unused", Tensor<double>({3}, 1.0));
    unused.zero_grad();
    p.zero_grad();
    auto leaf2 = bind(p);
    auto loss2 = sumsq(leaf2);
    backward(loss2);
    collect_gradients<double>({leaf2, Var<double>()}, {&p, &unused});
    CHECK(p.grad[0] == doctest::Approx(2.0));
    for (int64_t i = 0; i < 3; ++i) CHECK(unused.grad[i] == 0.0);
}

TEST_CASE("batchnorm invariants") {
    Rng rng(11);
    auto x = randn<double>(rng, {4, 3, 10}, 2.0, 0.7);
    Parameter<double> gamma("g", Tensor<double>({3}, 1.0));
    Parameter<double> beta("b", Tensor<double>({3}, 0.0));
    BatchNormBuffers<double> buf(3);
    auto out = batchnorm1d(Var<double>::constant(x), bind(gamma), bind(beta), buf, true);
    // per-channel batch mean ~ 0 and variance ~ 1 (before affine; affine is identity here)
    for (int64_t c = 0; c < 3; ++c) {
        double mean = 0, var = 0;
        int64_t n = 0;
        for (int64_t b = 0; b < 4; ++b)
            for (int64_t l = 0; l < 10; ++l) {
                mean += out.value().at(b, c, l);
                ++n;
            }
        mean /= double(n);
        for (int64_t b = 0; b < 4; ++b)
            for (int64_t l = 0; l < 10; ++l) {
                double d = out.value().at(b, c, l) - mean;
                var += d * d;
            }
        var /= double(n);
        CHECK(std::abs(mean) < 1e-5);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
    }

    // eval mode is a deterministic affine map: same input -> same output, and
    // single sample == same sample inside a larger batch
    auto e1 = batchnorm1d(Var<double>::constant(x), bind(gamma), bind(beta), buf, false);
    auto e2 = batchnorm1d(Var<double>::constant(x), bind(gamma), bind(beta), buf, false);
    for (int64_t i = 0; i < e1.value().numel(); ++i) CHECK(e1.value()[i] == e2.value()[i]);
}

TEST_CASE("adam: closed forms") {
    // g = 1 everywhere at step 1, wd = 0: delta = -lr / (1 + eps)
    Parameter<double> p("p", Tensor<double>({4}, 3.0));
    p.grad.fill(1.0);
    AdamState<double> st;
    st.lr = 1e-2;
    st.weight_decay = 0;
    adam_step<double>(st, {&p});
    for (int64_t i = 0; i < 4; ++i)
        CHECK(p.value[i] == doctest::Approx(3.0 - 1e-2 / (1.0 + 1e-8)).epsilon(1e-12));

    // lr = 0: parameters unchanged
    Parameter<double> q("q", Tensor<double>({4}, 2.0));
    q.grad.fill(0.5);
    AdamState<double> st0;
    st0.lr = 0;
    st0.weight_decay = 0;
    adam_step<double>(st0, {&q});
    for (int64_t i = 0; i < 4; ++i) CHECK(q.value[i] == 2.0);

    // decoupled weight decay applied to the value before the Adam delta
    Parameter<double> r("r", Tensor<double>({1}, 10.0));
    r.grad.fill(0.0);
    AdamState<double> stw;
    stw.lr = 1e-4;
    stw.weight_decay = 1e-5;
    adam_step<double>(stw, {&r});
    CHECK(r.value[0] == doctest::Approx(10.0 * (1.0 - 1e-4 * 1e-5)).epsilon(1e-12));

    // non-finite gradient rejected
    Parameter<double> bad("bad", Tensor<double>({1}, 1.0));
    bad.grad[0] = std::nan("");
    AdamState<double> stb;
    CHECK_THROWS_AS(adam_step<double>(stb, {&bad}), NumericError);
}

TEST_CASE("forward passes are bit-reproducible") {
    auto run = [](uint64_t seed) {
        Rng rng(seed);
        auto x = randn<float>(rng, {3, 4, 8});
        Parameter<float> w("w", randn<float>(rng, {5, 4, 3}, 0.3));
        Var<float> none;
        auto out = conv1d(Var<float>::constant(x), Var<float>::leaf(w.value, true), none, 1);
        auto pooled = maxpool1d(relu(out));
        return global_avg_pool(pooled).value();
    };
    auto a = run(123);
    auto b = run(123);
    REQUIRE(a.numel() == b.numel());
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("shape errors name the op and shapes") {
    auto a = Var<double>::constant(Tensor<double>({2, 3}));
    auto b = Var<double>::constant(Tensor<double>({3, 2}));
    try {
        (void)add(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        std::string msg = e.what();
        CHECK(msg.find("add") != std::string::npos);
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[3x2]") != std::string::npos);
    }
    CHECK_THROWS_AS((void)matmul(a, a), ShapeError);
    CHECK_THROWS_AS((void)maxpool1d(Var<double>::constant(Tensor<double>({1, 2, 7}))),
                    ShapeError);
}
