#include <cmath>

#include "doctest.h"
#include "omnical/amf.hpp"
#include "omnical/losses.hpp"

using namespace omnical;

namespace {

FiniteClass boolean_class() {
    std::vector<Predictor> ps;
    ps.push_back({"x0_hi", [](const Example& e) { return e.x[0] > 0.5 ? 1.0 : 0.0; }});
    ps.push_back({"x1_lo", [](const Example& e) { return e.x[1] <= 0.3 ? 1.0 : 0.0; }});
    return make_finite_class(ps, 1.0);
}

FiniteClass real_class() {
    std::vector<Predictor> ps;
    ps.push_back({"x0", [](const Example& e) { return e.x[0]; }});
    ps.push_back({"neg_x1", [](const Example& e) { return -e.x[1]; }});
    ps.push_back(constant_predictor("half", 0.5));
    return make_finite_class(ps, 1.0);
}

Example draw_example(RandomSource& rng) { return Example{{rng.uniform(), rng.uniform()}, {}}; }

double draw_label(RandomSource& rng, const Example& x) {
    return rng.bernoulli(0.2 + 0.6 * x.x[0] * x.x[1]) ? 1.0 : 0.0;
}

double sgn(double v) { return v >= 0.0 ? 1.0 : -1.0; }

}  // namespace

TEST_CASE("chi_weights examples") {
    auto w = chi_weights(std::vector<double>{0.0, 0.0, 0.0, 0.0}, 0.3);
    for (double v : w) CHECK(v == 0.25);
    w = chi_weights(std::vector<double>{0.0, std::log(2.0)}, 1.0);
    CHECK(w[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(w[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    w = chi_weights(std::vector<double>{0.0, 50.0, 1.0}, 1.0);
    CHECK(w[1] >= 1.0 - 1e-20);
    // Overflow safety and shift invariance.
    RandomSource rng(2, 0);
    for (int k = 0; k < 200; ++k) {
        std::vector<double> c(7), s(7);
        const double shift = (rng.uniform() - 0.5) * 1e4;
        for (int j = 0; j < 7; ++j) {
            c[j] = (rng.uniform() - 0.5) * 100.0;
            s[j] = c[j] + shift;
        }
        auto a = chi_weights(c, 2.0), b = chi_weights(s, 2.0);
        double sum = 0.0;
        for (int j = 0; j < 7; ++j) {
            sum += a[j];
            CHECK(std::fabs(a[j] - b[j]) <= 1e-9 * std::max(a[j], 1e-300) + 1e-300);
        }
        CHECK(std::fabs(sum - 1.0) <= 1e-14);
    }
}

TEST_CASE("AMF state accumulates and enforces the loss bound") {
    AMFState s(2, 0.5, 1.0);
    s.accumulate(std::vector<double>{0.5, -1.0});
    CHECK(s.cum_loss() == std::vector<double>{0.5, -1.0});
    CHECK_THROWS_AS(s.accumulate(std::vector<double>{1.5, 0.0}), NumericalError);
    CHECK_THROWS_AS(s.accumulate(std::vector<double>{0.0}), Error);
    CHECK(default_eta(2.0, 16, 100) == doctest::Approx(std::sqrt(std::log(16.0) / 100.0) / 4.0));
}

TEST_CASE("multical coordinate loss examples") {
    CHECK(multical_coordinate_loss(1.0, 0.5, 1.0, 0.0) == 0.0);
    CHECK(multical_coordinate_loss(0.7, 0.5, 0.5, 0.3) == 0.0);
    CHECK(multical_coordinate_loss(1.0, 0.5, 1.0, 0.2) == doctest::Approx(0.1).epsilon(1e-15));
}

TEST_CASE("solve_minmax examples") {
    {
        std::vector<double> L{0.4, 0.1, 0.1, 0.7};
        auto s = solve_minmax(L, L);
        CHECK(s.probs == std::vector<double>{0.0, 1.0, 0.0, 0.0});
        CHECK(s.value == 0.1);
    }
    {
        auto s = solve_minmax(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 1.0});
        CHECK(s.probs[0] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(s.probs[1] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(s.value == doctest::Approx(0.5).epsilon(1e-12));
    }
    {
        auto s = solve_minmax(std::vector<double>{0.3, -0.2, 0.5}, std::vector<double>{0.1, -0.4, 0.2});
        CHECK(s.probs == std::vector<double>{0.0, 1.0, 0.0});
    }
    CHECK_THROWS(solve_minmax(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}));
    CHECK_THROWS(solve_minmax(std::vector<double>{}, std::vector<double>{}));
}

TEST_CASE("solve_minmax agrees with exact enumeration on random instances") {
    RandomSource rng(12, 0);
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const int n = 2 + static_cast<int>(rng.uniform() * 100);
        std::vector<double> L0(n), L1(n);
        const int style = k % 3;
        for (int i = 0; i < n; ++i) {
            if (style == 0) {
                L0[i] = rng.uniform() * 2 - 1;
                L1[i] = rng.uniform() * 2 - 1;
            } else {
                // Structured like the forecasters: L_z(theta) = (z - theta) w(theta).
                const double th = static_cast<double>(i) / (n - 1);
                const double w = style == 1 ? rng.uniform() * 2 - 1 : 0.3 - th + 0.01 * rng.normal();
                L0[i] = -th * w;
                L1[i] = (1 - th) * w;
            }
        }
        auto s = solve_minmax(L0, L1);
        auto b = solve_minmax_brute(L0, L1);
        double sum = 0.0;
        for (double p : s.probs) {
            CHECK(p >= 0.0);
            sum += p;
        }
        CHECK(std::fabs(sum - 1.0) <= 1e-12);
        CHECK(std::fabs(s.value - mixed_value(s.probs, L0, L1)) <= 1e-15);
        worst = std::max(worst, std::fabs(s.value - b.value));
        // Weak duality on the lambda grid, with the grid's resolution as the gap allowance.
        double maxd = 0.0;
        for (int i = 0; i < n; ++i) maxd = std::max(maxd, std::fabs(L0[i] - L1[i]));
        const double dg = minmax_dual_grid(L0, L1);
        CHECK(dg <= s.value + 1e-12);
        CHECK(s.value - dg <= maxd / 2000.0 + 1e-12);
    }
    CHECK(worst <= 1e-9);
}

TEST_CASE("AMF multicalibration forecaster") {
    const int m = 10;
    const std::size_t T = 3000;
    AMFMulticalForecaster fc(ForecastGrid(m), real_class(), T);
    RandomSource rng(5, 0), env(5, 1);
    Transcript tr;
    tr.grid = ForecastGrid(m);
    Example x0 = draw_example(env);
    CHECK(fc.forecast(x0, rng) == 0.0);  // all K zero: tie-to-lower point mass
    CHECK(fc.last_round().strategy.probs[0] == 1.0);
    CHECK_THROWS_AS(fc.forecast(x0, rng), ProtocolError);
    const double y0 = draw_label(env, x0);
    fc.update(x0, y0);
    CHECK_THROWS_AS(fc.update(x0, y0), ProtocolError);
    tr.push({x0, y0, 0.0});
    for (std::size_t t = 1; t < T; ++t) {
        Example x = draw_example(env);
        const double p = fc.forecast(x, rng);
        const auto& r = fc.last_round();
        if (t % 100 == 0) {
            auto b = solve_minmax_brute(r.L0, r.L1);
            CHECK(std::fabs(b.value - r.strategy.value) <= 1e-6);
        }
        const double y = draw_label(env, x);
        fc.update(x, y);
        tr.push({x, y, p});
    }
    CHECK(fc.worst_value() <= fc.value_bound() + 1e-9);
    CHECK(fc.value_bound() == doctest::Approx(1.0 / m));
    CHECK(fc.worst_increase_excess() <= 1e-12);
    const auto cls = real_class();
    const auto stats = bucket_stats(tr, cls);
    for (std::size_t f = 0; f < cls.predictors.size(); ++f) {
        CompensatedSum u;
        for (int p = 0; p <= m; ++p) {
            CHECK(fc.n(p) == stats.n(p));
            const double K = stats.n(p) ? stats.residual_sum(p, f) / stats.n(p) : 0.0;
            CHECK(std::fabs(fc.K(p, f) - K) <= 1e-10);
            u.add(stats.n(p) * K * K);
        }
        CHECK(std::fabs(fc.unnormalized_K2(f) - u.value()) <= 1e-8);
        CHECK(std::fabs(fc.telescoped_K2(f) - fc.unnormalized_K2(f)) <= 1e-8);
    }
}

TEST_CASE("V-forecaster configuration") {
    CHECK_THROWS_AS(VForecaster(ForecastGrid(4), 4, boolean_class(), 10), ConfigError);
    VForecaster v(ForecastGrid(64), 128, make_finite_class({}, 1.0), 4096);
    CHECK(v.coordinate_count() == 1u * 65 * 2 * 129);
    std::vector<Predictor> bad{{"real", [](const Example& e) { return e.x[0]; }}};
    VForecaster w(ForecastGrid(2), 4, make_finite_class(bad, 1.0), 10);
    RandomSource rng(1, 0);
    CHECK_THROWS_WITH_AS(w.forecast(Example{{0.3}, {}}, rng), doctest::Contains("real"), Error);
}

TEST_CASE("V-forecaster matches a dense coordinate reference") {
    const int m = 3, mp = 5;
    const std::size_t T = 400;
    const auto cls = boolean_class();
    const std::size_t nf = cls.predictors.size();
    VForecaster vf(ForecastGrid(m), mp, cls, T);
    const std::size_t d = vf.coordinate_count();
    AMFState dense(d, vf.eta(), 2.0);
    auto coord = [&](std::size_t f, int a, int b, int v) {
        return ((f * (m + 1) + a) * 2 + b) * (mp + 1) + v;
    };
    RandomSource rng(3, 0), env(3, 1);
    double worst_L = 0.0, worst_cum = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        Example x = draw_example(env);
        std::vector<int> bits(nf);
        for (std::size_t f = 0; f < nf; ++f) bits[f] = static_cast<int>(cls.predictors[f].fn(x));
        const auto chi = dense.chi_weights();
        const double p = vf.forecast(x, rng);
        const auto& r = vf.last_round();
        for (int th = 0; th <= m; ++th)
            for (int z = 0; z < 2; ++z) {
                double L = 0.0;
                for (std::size_t f = 0; f < nf; ++f)
                    for (int a = 0; a <= m; ++a)
                        for (int v = 0; v <= mp; ++v) {
                            const double vv = static_cast<double>(v) / mp;
                            const double l = (vv - z) * (sgn(static_cast<double>(th) / m - vv) -
                                                         sgn(static_cast<double>(a) / m - vv));
                            L += chi[coord(f, a, bits[f], v)] * l;
                        }
                worst_L = std::max(worst_L, std::fabs(L - (z == 0 ? r.L0[th] : r.L1[th])));
            }
        CHECK(r.strategy.value <= vf.value_bound() + 1e-9);
        const double y = draw_label(env, x);
        vf.update(x, y);
        std::vector<double> losses(d, 0.0);
        for (std::size_t f = 0; f < nf; ++f)
            for (int a = 0; a <= m; ++a)
                for (int v = 0; v <= mp; ++v) {
                    const double vv = static_cast<double>(v) / mp;
                    losses[coord(f, a, bits[f], v)] =
                        eval_v_loss(vv, static_cast<int>(y), p) - eval_v_loss(vv, static_cast<int>(y), a / double(m));
                }
        dense.accumulate(losses);
    }
    const auto cum = dense.cum_loss();
    double brute_max = -INFINITY;
    for (std::size_t f = 0; f < nf; ++f)
        for (int a = 0; a <= m; ++a)
            for (int b = 0; b < 2; ++b)
                for (int v = 0; v <= mp; ++v) {
                    const double c = cum[coord(f, a, b, v)];
                    worst_cum = std::max(worst_cum, std::fabs(c - vf.cum_loss(f, a, b, v)));
                    brute_max = std::max(brute_max, c);
                }
    CHECK(worst_L <= 1e-12);
    CHECK(worst_cum <= 1e-9);
    CHECK(vf.max_coordinate_regret() == doctest::Approx(brute_max).epsilon(1e-12));
}

TEST_CASE("V-forecaster coordinate zero cases") {
    // Only the identity predictor: coordinates with b = 0 never see an active round.
    VForecaster vf(ForecastGrid(2), 4, make_finite_class({}, 1.0), 50);
    RandomSource rng(9, 0), env(9, 1);
    for (int t = 0; t < 50; ++t) {
        Example x = draw_example(env);
        vf.forecast(x, rng);
        vf.update(x, draw_label(env, x));
    }
    for (int a = 0; a <= 2; ++a)
        for (int v = 0; v <= 4; ++v) CHECK(vf.cum_loss(0, a, 0, v) == 0.0);
    CHECK(eval_v_loss(0.25, 1, 0.5) - eval_v_loss(0.25, 1, 0.5) == 0.0);
}

TEST_CASE("V-forecaster golden run") {
    VForecaster vf(ForecastGrid(2), 4, make_finite_class({}, 1.0), 12);
    RandomSource rng(42, 0), env(42, 1);
    std::vector<double> seq;
    for (int t = 0; t < 12; ++t) {
        Example x = draw_example(env);
        seq.push_back(vf.forecast(x, rng));
        vf.update(x, draw_label(env, x));
    }
    CHECK(seq == std::vector<double>{0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.0, 0.0, 0.5, 0.0, 0.0});
}
