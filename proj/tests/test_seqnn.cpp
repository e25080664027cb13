#include <doctest.h>

#include <cmath>

#include "engae/adam.hpp"
#include "engae/layers.hpp"
#include "engae/losses.hpp"
#include "gradcheck.hpp"

using namespace engae;
using namespace engae::testing;

namespace {

SeqTensor column(std::vector<double> vals) {
    std::size_t n = vals.size();
    return SeqTensor(n, 1, std::move(vals));
}

void set_values(Param& p, std::vector<double> vals) {
    REQUIRE(p.value.size() == vals.size());
    p.value = std::move(vals);
}

}  // namespace

TEST_CASE("causal conv: zero input, zero bias gives zero output") {
    Rng rng(1);
    CausalConv1d conv(2, 3, 3, 1, rng);
    set_values(*conv.params()[1], {0, 0, 0});
    SeqTensor x(5, 2);
    SeqTensor y = conv.forward(x);
    for (double v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("causal conv: k=1, identity kernel reproduces input") {
    Rng rng(1);
    CausalConv1d conv(2, 2, 1, 1, rng);
    set_values(*conv.params()[0], {1, 0, 0, 1});
    set_values(*conv.params()[1], {0, 0});
    SeqTensor x = random_tensor(6, 2, rng);
    SeqTensor y = conv.forward(x);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("causal conv: dilation 2, W=[1,1] running sum example") {
    Rng rng(1);
    CausalConv1d conv(1, 1, 2, 2, rng);
    set_values(*conv.params()[0], {1, 1});  // W[j=0]=1 (current), W[j=1]=1 (lag 2)
    set_values(*conv.params()[1], {0});
    SeqTensor x = column({1, 2, 3, 4, 5, 6, 7, 8});
    SeqTensor y = conv.forward(x);
    std::vector<double> expect = {1, 2, 4, 6, 8, 10, 12, 14};
    for (std::size_t t = 0; t < 8; ++t) CHECK(y(t, 0) == expect[t]);
}

TEST_CASE("causal conv: channel mismatch is a configuration error") {
    Rng rng(1);
    CausalConv1d conv(3, 2, 2, 1, rng);
    CHECK_THROWS_AS(conv.forward(SeqTensor(4, 2)), ConfigError);
}

TEST_CASE("causal conv: causality, perturbing row t leaves earlier rows bit-identical") {
    Rng rng(42);
    for (int trial = 0; trial < 10; ++trial) {
        CausalConv1d conv(3, 3, 4, 2, rng);
        SeqTensor x = random_tensor(20, 3, rng);
        SeqTensor y0 = conv.forward(x);
        std::size_t t = 5 + rng.below(14);
        x(t, rng.below(3)) += 1.0;
        SeqTensor y1 = conv.forward(x);
        for (std::size_t r = 0; r < t; ++r)
            for (std::size_t c = 0; c < 3; ++c) CHECK(y0(r, c) == y1(r, c));
    }
}

TEST_CASE("dense: identity weights reproduce input") {
    Rng rng(1);
    Dense d(3, 3, rng);
    set_values(*d.params()[0], {1, 0, 0, 0, 1, 0, 0, 0, 1});
    set_values(*d.params()[1], {0, 0, 0});
    SeqTensor x = random_tensor(4, 3, rng);
    SeqTensor y = d.forward(x);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("dense: time equivariance, permuting rows permutes outputs") {
    Rng rng(3);
    Dense d(4, 2, rng);
    SeqTensor x = random_tensor(5, 4, rng);
    SeqTensor y = d.forward(x);
    SeqTensor xr(5, 4);
    for (std::size_t r = 0; r < 5; ++r)
        for (std::size_t c = 0; c < 4; ++c) xr(r, c) = x(4 - r, c);
    SeqTensor yr = d.forward(xr);
    for (std::size_t r = 0; r < 5; ++r)
        for (std::size_t c = 0; c < 2; ++c) CHECK(yr(r, c) == y(4 - r, c));
}

TEST_CASE("dense: 24 -> 11 projection shape") {
    Rng rng(1);
    Dense d(24, 11, rng);
    SeqTensor y = d.forward(SeqTensor(7, 24));
    CHECK(y.rows() == 7);
    CHECK(y.cols() == 11);
}

TEST_CASE("avg pool: constant sequence stays constant") {
    SeqTensor x(12, 2, 3.5);
    SeqTensor y = avg_pool_time(x, 4);
    CHECK(y.rows() == 3);
    for (double v : y.data()) CHECK(v == doctest::Approx(3.5));
}

TEST_CASE("avg pool: T=300 d=4 gives 75 rows") {
    CHECK(avg_pool_time(SeqTensor(300, 11), 4).rows() == 75);
}

TEST_CASE("avg pool: (1,3,5,7) with d=2 gives (2,6)") {
    SeqTensor y = avg_pool_time(column({1, 3, 5, 7}), 2);
    CHECK(y(0, 0) == 2.0);
    CHECK(y(1, 0) == 6.0);
}

TEST_CASE("avg pool: non-divisible length is an input error") {
    CHECK_THROWS_AS(avg_pool_time(SeqTensor(7, 1), 2), InputError);
}

TEST_CASE("upsample: d=1 is the identity") {
    Rng rng(5);
    SeqTensor x = random_tensor(6, 3, rng);
    SeqTensor y = upsample_time(x, 1);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("upsample: (2,6) with d=2 gives (2,2,6,6)") {
    SeqTensor y = upsample_time(column({2, 6}), 2);
    std::vector<double> expect = {2, 2, 6, 6};
    for (std::size_t t = 0; t < 4; ++t) CHECK(y(t, 0) == expect[t]);
}

TEST_CASE("pool/upsample adjunction") {
    Rng rng(11);
    SUBCASE("round trip on constant 300x11 sequence with d=4") {
        SeqTensor x(300, 11, 1.25);
        SeqTensor rt = upsample_time(avg_pool_time(x, 4), 4);
        for (std::size_t i = 0; i < x.size(); ++i) CHECK(rt.data()[i] == x.data()[i]);
    }
    SUBCASE("upsample(pool(x)) = x for blockwise-constant x") {
        SeqTensor x(12, 2);
        for (std::size_t r = 0; r < 12; ++r)
            for (std::size_t c = 0; c < 2; ++c) x(r, c) = static_cast<double>(r / 3 + c);
        SeqTensor rt = upsample_time(avg_pool_time(x, 3), 3);
        for (std::size_t i = 0; i < x.size(); ++i) CHECK(rt.data()[i] == x.data()[i]);
    }
    SUBCASE("pool(upsample(y)) = y exactly for all y") {
        for (std::size_t d : {2, 3, 5}) {
            SeqTensor y = random_tensor(8, 3, rng);
            SeqTensor rt = avg_pool_time(upsample_time(y, d), d);
            for (std::size_t i = 0; i < y.size(); ++i)
                CHECK(rt.data()[i] == doctest::Approx(y.data()[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("lstm: zero weights and input give zero hidden outputs") {
    Rng rng(1);
    Lstm lstm(3, 4, rng);
    for (Param* p : lstm.params()) std::fill(p->value.begin(), p->value.end(), 0.0);
    SeqTensor y = lstm.forward(SeqTensor(6, 3));
    for (double v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("lstm: output shape 300x11 -> 300x128") {
    Rng rng(1);
    Lstm lstm(11, 128, rng);
    SeqTensor y = lstm.forward(SeqTensor(300, 11));
    CHECK(y.rows() == 300);
    CHECK(y.cols() == 128);
}

TEST_CASE("lstm: analytic gradients match finite differences on 5x3, H=4") {
    Rng rng(99);
    Lstm lstm(3, 4, rng);
    double err = check_layer(lstm, random_tensor(5, 3, rng));
    CHECK(err < 1e-4);
}

TEST_CASE("gradient checks per layer, rel err < 1e-4") {
    Rng rng(7);
    SUBCASE("causal conv") {
        CausalConv1d conv(3, 2, 3, 2, rng);
        CHECK(check_layer(conv, random_tensor(8, 3, rng)) < 1e-4);
    }
    SUBCASE("dense") {
        Dense d(4, 3, rng);
        CHECK(check_layer(d, random_tensor(1, 4, rng)) < 1e-4);
    }
    SUBCASE("avg pool") {
        AvgPoolTime p(2);
        CHECK(check_layer(p, random_tensor(8, 3, rng)) < 1e-4);
    }
    SUBCASE("upsample nearest") {
        UpsampleTime u(3);
        CHECK(check_layer(u, random_tensor(4, 2, rng)) < 1e-4);
    }
    SUBCASE("upsample linear") {
        UpsampleTime u(3, UpsampleMode::linear);
        CHECK(check_layer(u, random_tensor(4, 2, rng)) < 1e-4);
    }
    SUBCASE("residual block") {
        ResidualBlock blk(3, 4, 3, 2, 0.0, rng, 1);
        CHECK(check_layer(blk, random_tensor(8, 3, rng)) < 1e-4);
    }
    SUBCASE("sigmoid head") {
        Sigmoid s;
        CHECK(check_layer(s, random_tensor(1, 3, rng)) < 1e-4);
    }
}

TEST_CASE("dropout") {
    SUBCASE("p outside [0,1) rejected") {
        CHECK_THROWS_AS(Dropout(1.0, 1), ConfigError);
        CHECK_THROWS_AS(Dropout(-0.1, 1), ConfigError);
    }
    SUBCASE("p=0 is identity in both modes") {
        Dropout d(0.0, 1);
        Rng rng(2);
        SeqTensor x = random_tensor(10, 3, rng);
        for (Mode m : {Mode::train, Mode::eval}) {
            d.set_mode(m);
            SeqTensor y = d.forward(x);
            for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.data()[i] == x.data()[i]);
        }
    }
    SUBCASE("eval mode with p=0.05 is identity") {
        Dropout d(0.05, 1);
        d.set_mode(Mode::eval);
        Rng rng(2);
        SeqTensor x = random_tensor(10, 3, rng);
        SeqTensor y = d.forward(x);
        for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.data()[i] == x.data()[i]);
    }
    SUBCASE("train-mode empirical zero fraction within 0.005 of p") {
        const double p = 0.05;
        Dropout d(p, 1234);
        d.set_mode(Mode::train);
        SeqTensor x(1000, 100, 1.0);
        SeqTensor y = d.forward(x);
        std::size_t zeros = 0;
        for (double v : y.data())
            if (v == 0.0) ++zeros;
        double frac = static_cast<double>(zeros) / static_cast<double>(y.size());
        CHECK(std::abs(frac - p) < 0.005);
    }
    SUBCASE("train mode preserves the mean within 1% over 1e6 elements") {
        Dropout d(0.2, 99);
        d.set_mode(Mode::train);
        SeqTensor x(1000, 1000, 2.0);
        SeqTensor y = d.forward(x);
        double mean = 0.0;
        for (double v : y.data()) mean += v;
        mean /= static_cast<double>(y.size());
        CHECK(std::abs(mean - 2.0) / 2.0 < 0.01);
    }
}

TEST_CASE("mse loss") {
    SUBCASE("x == xhat gives 0") {
        SeqTensor x = column({1, 2, 3});
        CHECK(mse_loss(x, x) == 0.0);
    }
    SUBCASE("(0,0) vs (1,1) gives 1") {
        CHECK(mse_loss(column({0, 0}), column({1, 1})) == 1.0);
    }
    SUBCASE("shape mismatch throws") {
        CHECK_THROWS_AS(mse_loss(SeqTensor(2, 2), SeqTensor(2, 3)), InputError);
    }
    SUBCASE("gradient matches finite differences") {
        Rng rng(8);
        SeqTensor x = random_tensor(4, 3, rng);
        SeqTensor xhat = random_tensor(4, 3, rng);
        SeqTensor g = mse_loss_grad(x, xhat);
        double max_err = 0.0;
        for (std::size_t i = 0; i < xhat.size(); ++i) {
            double num = numeric_grad([&] { return mse_loss(x, xhat); },
                                      &xhat.data()[i]);
            max_err = std::max(max_err, rel_err(g.data()[i], num));
        }
        CHECK(max_err < 1e-4);
    }
}

TEST_CASE("bce loss") {
    CHECK(bce_loss(0.5, 1, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(bce_loss(1.0, 1, 1.0) < 1e-6);  // clamped near zero loss
    CHECK(bce_loss(0.3, 0, 1.0) == doctest::Approx(-std::log(0.7)));
    SUBCASE("weight_pos from a 5111/247 split") {
        double w = 5111.0 / 247.0;
        CHECK(w == doctest::Approx(20.69).epsilon(1e-3));
        CHECK(bce_loss(0.5, 1, w) == doctest::Approx(w * std::log(2.0)));
    }
    SUBCASE("weight 1 recovers plain bce on negatives") {
        CHECK(bce_loss(0.4, 0, 1.0) == bce_loss(0.4, 0, 17.0));
    }
    SUBCASE("gradient matches finite differences") {
        for (int y : {0, 1}) {
            double p = 0.37;
            double num = numeric_grad([&] { return bce_loss(p, y, 2.5); }, &p);
            CHECK(rel_err(bce_loss_grad(0.37, y, 2.5), num) < 1e-4);
        }
    }
}

TEST_CASE("adam") {
    SUBCASE("zero gradient leaves parameters unchanged") {
        Param w("w", 3);
        w.value = {1.0, -2.0, 0.5};
        Adam opt({&w}, {});
        opt.step();
        CHECK(w.value[0] == 1.0);
        CHECK(w.value[1] == -2.0);
        CHECK(w.value[2] == 0.5);
    }
    SUBCASE("first step magnitude is about lr") {
        Param w("w", 1);
        w.value = {1.0};
        w.grad = {1.0};
        AdamConfig cfg;
        cfg.lr = 0.1;
        Adam opt({&w}, cfg);
        opt.step();
        CHECK(w.value[0] == doctest::Approx(0.9).epsilon(1e-6));
    }
    SUBCASE("50 steps on f(w)=(w-3)^2 reduce f by >= 90%") {
        Param w("w", 1);
        w.value = {0.0};
        AdamConfig cfg;
        cfg.lr = 0.2;
        cfg.decay = 1.0;
        Adam opt({&w}, cfg);
        auto f = [&] { return (w.value[0] - 3.0) * (w.value[0] - 3.0); };
        double f0 = f();
        for (int i = 0; i < 50; ++i) {
            w.grad[0] = 2.0 * (w.value[0] - 3.0);
            opt.step();
        }
        CHECK(f() <= 0.1 * f0);
    }
    SUBCASE("invalid config rejected") {
        Param w("w", 1);
        AdamConfig bad;
        bad.lr = 0.0;
        CHECK_THROWS_AS(Adam({&w}, bad), ConfigError);
    }
}

TEST_CASE("backward before forward is a usage error") {
    Rng rng(1);
    Dense d(2, 2, rng);
    CHECK_THROWS_AS(d.backward(SeqTensor(1, 2)), InputError);
}

TEST_CASE("sum-of-losses gradient equals sum of per-sample gradients") {
    Rng rng(21);
    Dense d(3, 2, rng);
    SeqTensor a = random_tensor(1, 3, rng);
    SeqTensor b = random_tensor(1, 3, rng);

    auto grads_for = [&](const SeqTensor& x) {
        for (Param* p : d.params()) p->zero_grad();
        SeqTensor out = d.forward(x);
        d.backward(out);
        std::vector<double> g;
        for (Param* p : d.params()) g.insert(g.end(), p->grad.begin(), p->grad.end());
        return g;
    };
    auto ga = grads_for(a);
    auto gb = grads_for(b);

    for (Param* p : d.params()) p->zero_grad();
    SeqTensor oa = d.forward(a);
    d.backward(oa);
    SeqTensor ob = d.forward(b);
    d.backward(ob);
    std::vector<double> gsum;
    for (Param* p : d.params()) gsum.insert(gsum.end(), p->grad.begin(), p->grad.end());

    for (std::size_t i = 0; i < gsum.size(); ++i)
        CHECK(gsum[i] == doctest::Approx(ga[i] + gb[i]).epsilon(1e-12));
}

TEST_CASE("determinism: identical seed gives bit-identical layer outputs") {
    auto run = [] {
        Rng rng(77);
        CausalConv1d conv(2, 3, 3, 2, rng);
        SeqTensor x = random_tensor(10, 2, rng);
        return conv.forward(x);
    };
    SeqTensor a = run(), b = run();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data()[i] == b.data()[i]);
}
