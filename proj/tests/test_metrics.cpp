#include <algorithm>
#include <array>
#include <cmath>

#include "doctest.h"
#include "omnical/metrics.hpp"
#include "test_util.hpp"

using namespace omnical;

namespace {

Transcript make_transcript(int m, const std::vector<double>& forecasts, const std::vector<double>& ys,
                           const std::vector<std::vector<double>>& xs = {}) {
    Transcript t;
    t.grid = ForecastGrid(m);
    for (std::size_t k = 0; k < forecasts.size(); ++k) {
        TranscriptEntry e;
        e.x.x = xs.empty() ? std::vector<double>{0.0} : xs[k];
        e.forecast = forecasts[k];
        e.outcome = ys[k];
        t.push(e);
    }
    return t;
}

// Miscalibrated transcript on a random grid: forecasts are a noisy, biased rounding of the true mean.
Transcript random_transcript(RandomSource& rng, std::size_t d = 2) {
    const int m = 2 + static_cast<int>(rng.uniform() * 9);
    const std::size_t T = 1 + static_cast<std::size_t>(rng.uniform() * 200);
    const double bias = (rng.uniform() - 0.5) * 0.6, noise = rng.uniform() * 0.3;
    Transcript t;
    t.grid = ForecastGrid(m);
    for (std::size_t k = 0; k < T; ++k) {
        TranscriptEntry e;
        e.x.x = testing::ball_point(rng, d);
        const double mu = std::clamp(0.5 + 0.45 * e.x.x[0] - 0.3 * e.x.x[1], 0.0, 1.0);
        e.outcome = rng.bernoulli(mu) ? 1.0 : 0.0;
        e.forecast = t.grid.round(mu + bias + noise * rng.normal());
        t.push(e);
    }
    return t;
}

// Predictors with values in [0,1].
FiniteClass random_class(RandomSource& rng) {
    std::vector<Predictor> ps{constant_predictor("zero", 0.0), constant_predictor("one", 1.0)};
    const int extra = 1 + static_cast<int>(rng.uniform() * 4);
    for (int k = 0; k < extra; ++k) {
        const double a = rng.normal(), b = rng.normal(), c = rng.uniform();
        const bool threshold = rng.bernoulli(0.3);
        ps.push_back({"f" + std::to_string(k), [=](const Example& x) {
                          const double s = c + 0.5 * (a * x.x[0] + b * x.x[1]);
                          return threshold ? (s > 0.5 ? 1.0 : 0.0) : std::clamp(s, 0.0, 1.0);
                      }});
    }
    return make_finite_class(std::move(ps), 1.0);
}

double direct_K(const Transcript& t, int p, const std::function<double(const Example&)>& f) {
    double s = 0.0;
    int n = 0;
    for (const auto& e : t.entries)
        if (t.grid.index_of(e.forecast) == p) s += f(e.x) * (e.outcome - e.forecast), ++n;
    return n ? s / n : 0.0;
}

}  // namespace

TEST_CASE("bucket_K examples") {
    const Predictor I = constant_predictor("I", 1.0);
    CHECK(bucket_K(make_transcript(2, {0.5, 0.5}, {1, 0}), 0, I) == 0.0);
    CHECK(bucket_K(make_transcript(2, {0.5, 0.5}, {1, 0}), 1, I) == 0.0);
    CHECK(bucket_K(make_transcript(2, {0.5, 0.5, 0.5}, {1, 0, 1}), 1, I) == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
}

TEST_CASE("calibration_report examples") {
    // Bucket means equal bucket values.
    const auto cal = make_transcript(4, {0.5, 0.5, 0.25, 0.25, 0.25, 0.25}, {1, 0, 1, 0, 0, 0});
    const auto r = calibration_report(cal, make_finite_class({}, 1.0));
    for (double v : {r.K1, r.K2, r.Kinf, r.sK1, r.sK2, r.sKinf}) CHECK(v == 0.0);

    // v_p = ((a - b)/(4 sqrt 2), 0) with a - b = 2 sqrt 2, so ||v_p|| = 0.5.
    const double a = std::sqrt(2.0);
    const auto lin = make_transcript(2, {0.5, 0.5}, {1, 0}, {{a}, {-a}});
    const auto rl = calibration_report(lin, LinearBall{1, 1.0});
    CHECK(rl.sK1 == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(rl.K1 == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(rl.sK2 == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(rl.K2 == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(rl.K1_exact);

    const auto e = calibration_report(Transcript{}, LinearBall{1, 1.0});
    CHECK(e.K1 == 0.0);
}

TEST_CASE("omni_regret examples") {
    const auto sq = builtin_convex_losses()[0];
    REQUIRE(sq.name == "squared");
    const auto t = make_transcript(2, {0.5, 0.5}, {1, 1});
    const auto cls = make_finite_class({constant_predictor("zero", 0.0)}, 1.0);
    const auto r = omni_regret(t, {sq}, cls);
    CHECK(r.omni == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(r.swap_omni == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(r.omni_predictor == "I");

    // Comparator equal to the post-processed action.
    const auto own = FiniteClass{{constant_predictor("k", post_process(sq, 0.5))}, 1.0};
    CHECK(omni_regret(make_transcript(2, {0.5, 0.5, 0.5}, {1, 0, 1}), {sq}, own).omni == 0.0);
    CHECK(omni_regret(Transcript{}, {sq}, cls).omni == 0.0);

    const auto bad = FiniteClass{{constant_predictor("big", 2.0)}, 4.0};
    CHECK_THROWS_AS(omni_regret(t, {sq}, bad), Error);
}

TEST_CASE("explicit swap omni equals the per-bucket sup when families are singletons") {
    RandomSource rng(11, 0);
    const auto losses = builtin_convex_losses();
    for (int rep = 0; rep < 50; ++rep) {
        const auto t = random_transcript(rng);
        const auto cls = random_class(rng);
        const auto& l = losses[rep % losses.size()];
        const auto& f = cls.predictors[rep % cls.predictors.size()];
        const double a = swap_omni_explicit(t, std::vector<LossSpec>(t.grid.size(), l),
                                            std::vector<Predictor>(t.grid.size(), f));
        const double b = omni_regret(t, {l}, FiniteClass{{f}, 1.0}).omni;
        CHECK(a == doctest::Approx(b).epsilon(1e-12));
    }
}

TEST_CASE("lowerbound examples") {
    const std::size_t T = 7;
    const auto t = make_transcript(3, std::vector<double>(T, 0.0), std::vector<double>(T, 1.0));
    const auto c = check_lowerbound_inequality(t);
    CHECK(c.rhs == doctest::Approx(2.0 - 2.0 / T).epsilon(1e-14));
    CHECK(c.lhs >= 2.0 - 2.0 / T - 1e-12);
    CHECK(c.holds);
    const auto cal = make_transcript(2, {0.5, 0.5}, {1, 0});
    CHECK(check_lowerbound_inequality(cal).rhs <= 0.0);
    CHECK(check_lowerbound_inequality(cal).holds);
}

TEST_CASE("quantile multivalidity examples") {
    const Predictor I = constant_predictor("I", 1.0);
    std::vector<double> s10(10, 0.2);
    s10[9] = 0.9;
    CHECK(std::fabs(quantile_multivalidity(make_transcript(2, std::vector<double>(10, 0.5), s10), 0.9, 1, I)) < 1e-15);
    const auto t4 = make_transcript(2, std::vector<double>(4, 0.5), {0.1, 0.7, 0.8, 0.9});
    CHECK(quantile_multivalidity(t4, 0.9, 1, I) == doctest::Approx(0.65).epsilon(1e-14));
    CHECK(swap_quantile_error_L2(t4, make_finite_class({}, 1.0), 0.9) == doctest::Approx(0.65 * 0.65).epsilon(1e-14));
}

TEST_CASE("norm chain and swap dominance on random transcripts") {
    RandomSource rng(3, 0);
    const auto losses = builtin_convex_losses();
    for (int rep = 0; rep < 300; ++rep) {
        const auto t = random_transcript(rng);
        const auto cls = random_class(rng);
        for (const FunctionClass& fc : {FunctionClass{cls}, FunctionClass{LinearBall{2, 0.5 + rng.uniform()}}}) {
            const auto r = calibration_report(t, fc);
            CHECK(r.K1 <= std::sqrt(r.K2) + 1e-12);
            CHECK(r.sK1 <= std::sqrt(r.sK2) + 1e-12);
            CHECK(r.Kinf <= r.K1 + 1e-12);
            CHECK(r.sKinf <= r.sK1 + 1e-12);
            CHECK(r.sK1 >= r.K1 - 1e-12);
            CHECK(r.sK2 >= r.K2 - 1e-12);
            CHECK(r.sKinf >= r.Kinf - 1e-12);
        }
        const auto o = omni_regret(t, losses, cls);
        CHECK(o.swap_omni >= o.omni - 1e-12);
    }
}

TEST_CASE("finite report matches direct bucket sums") {
    RandomSource rng(5, 0);
    for (int rep = 0; rep < 100; ++rep) {
        const auto t = random_transcript(rng);
        const auto cls = random_class(rng);
        const auto r = calibration_report(t, cls);
        const double T = static_cast<double>(t.size());
        double k1 = 0.0, sk1 = 0.0;
        for (const auto& f : cls.predictors) {
            double s = 0.0;
            for (int p = 0; p < t.grid.size(); ++p) s += r.n[p] / T * std::fabs(direct_K(t, p, f.fn));
            k1 = std::max(k1, s);
        }
        for (int p = 0; p < t.grid.size(); ++p) {
            double mx = 0.0;
            for (const auto& f : cls.predictors) mx = std::max(mx, std::fabs(direct_K(t, p, f.fn)));
            CHECK(r.bucket_sup[p] == doctest::Approx(mx).epsilon(1e-12));
            sk1 += r.n[p] / T * mx;
        }
        CHECK(r.K1 == doctest::Approx(k1).epsilon(1e-12));
        CHECK(r.sK1 == doctest::Approx(sk1).epsilon(1e-12));
    }
}

TEST_CASE("linear closed forms against random directions") {
    RandomSource rng(7, 0);
    for (int rep = 0; rep < 6; ++rep) {
        const auto t = random_transcript(rng);
        const double B = 0.5 + rng.uniform();
        const auto r = calibration_report(t, LinearBall{2, B});
        const int np = t.grid.size();
        const double T = static_cast<double>(t.size());
        // Independent route: per-bucket residual vectors from scratch.
        std::vector<std::array<double, 3>> v(np, {0, 0, 0});
        std::vector<double> n(np, 0.0);
        for (const auto& e : t.entries) {
            const int p = t.grid.index_of(e.forecast);
            const auto xt = augment(e.x.x);
            for (int i = 0; i < 3; ++i) v[p][i] += xt[i] * (e.outcome - e.forecast);
            n[p] += 1.0;
        }
        std::vector<double> best(np, 0.0);
        double k1 = 0.0, k2 = 0.0, kinf = 0.0;
        for (int s = 0; s < 100000; ++s) {
            double th[3], nn = 0.0;
            for (double& c : th) c = rng.normal(), nn += c * c;
            for (double& c : th) c *= std::sqrt(B / nn);
            double a1 = 0.0, a2 = 0.0, ainf = 0.0;
            for (int p = 0; p < np; ++p) {
                if (n[p] == 0) continue;
                const double k = std::fabs(th[0] * v[p][0] + th[1] * v[p][1] + th[2] * v[p][2]) / n[p];
                best[p] = std::max(best[p], k);
                a1 += n[p] / T * k;
                a2 += n[p] / T * k * k;
                ainf = std::max(ainf, n[p] / T * k);
            }
            k1 = std::max(k1, a1), k2 = std::max(k2, a2), kinf = std::max(kinf, ainf);
        }
        for (int p = 0; p < np; ++p) {
            CHECK(best[p] <= r.bucket_sup[p] * (1 + 1e-12) + 1e-15);
            CHECK(best[p] >= r.bucket_sup[p] * (1 - 1e-3));
        }
        CHECK(k1 <= r.K1 * (1 + 1e-12) + 1e-15);
        CHECK(k1 >= r.K1 * (1 - 1e-3));
        CHECK(k2 <= r.K2 * (1 + 1e-12) + 1e-15);
        CHECK(k2 >= r.K2 * (1 - 1e-3));
        CHECK(kinf <= r.Kinf * (1 + 1e-12) + 1e-15);
        CHECK(kinf >= r.Kinf * (1 - 1e-3));
    }
}

TEST_CASE("non-swap linear ascent brackets the exact sign enumeration") {
    RandomSource rng(9, 0);
    int inexact = 0;
    for (int rep = 0; rep < 30; ++rep) {
        Transcript t = random_transcript(rng);
        Transcript wide;
        wide.grid = ForecastGrid(40);
        for (auto e : t.entries) {
            e.forecast = wide.grid.round(e.forecast + 0.1 * rng.normal());
            wide.push(e);
        }
        const auto r = calibration_report(wide, LinearBall{2, 1.0});
        CHECK(r.K1 <= r.sK1 + 1e-12);
        CHECK(r.K1 <= std::sqrt(r.K2) + 1e-12);
        // The ascent starts from the longest bucket vector, so it never drops below Kinf.
        CHECK(r.K1 >= r.Kinf - 1e-12);
        inexact += !r.K1_exact;
    }
    CHECK(inexact > 0);
}

TEST_CASE("conditional-mean bound on random transcripts") {
    RandomSource rng(13, 0);
    for (int rep = 0; rep < 1000; ++rep) {
        const auto t = random_transcript(rng);
        for (const auto& c : check_conditional_mean(t, random_class(rng))) {
            INFO(c.name << " lhs=" << c.lhs << " rhs=" << c.rhs);
            CHECK(c.holds);
        }
    }
    CHECK_THROWS_AS(check_conditional_mean(make_transcript(2, {0.5}, {1}), FiniteClass{{}, 2.0}), UnsupportedError);
}

TEST_CASE("witness advantage on random triples") {
    RandomSource rng(17, 0);
    int tested = 0;
    for (int rep = 0; rep < 3000 && tested < 1000; ++rep) {
        const auto t = random_transcript(rng);
        const auto cls = random_class(rng);
        const auto& f = cls.predictors[static_cast<std::size_t>(rng.uniform() * cls.predictors.size())];
        const int p = t.grid.index_of(t.entries[static_cast<std::size_t>(rng.uniform() * t.size())].forecast);
        const double K = direct_K(t, p, f.fn);
        if (!(K > 1e-6)) continue;
        const double alpha = K * (0.05 + 0.95 * rng.uniform());
        const auto w = witness_advantage(t, p, f, alpha);
        CHECK(w.advantage >= alpha * alpha / cls.B - 1e-9);
        ++tested;
    }
    CHECK(tested == 1000);
}

TEST_CASE("post-processing gap bounds") {
    // Absolute loss at p = 0.6 with mean outcome 0.3: k = 1 loses 0.7, the action 0 loses 0.3.
    const auto t = make_transcript(10, std::vector<double>(10, 0.6), {1, 1, 1, 0, 0, 0, 0, 0, 0, 0});
    const auto abs_loss = builtin_convex_losses()[1];
    REQUIRE(abs_loss.name == "absolute");
    const auto c = check_post_process_optimality(t, abs_loss);
    CHECK(c.worst_excess == doctest::Approx(0.4 - 0.3).epsilon(1e-12));
    CHECK(c.violations == 1);
    CHECK(c.violations_2C == 0);

    RandomSource rng(19, 0);
    for (int rep = 0; rep < 300; ++rep) {
        const auto rt = random_transcript(rng);
        for (const auto& l : builtin_convex_losses()) {
            const auto r = check_post_process_optimality(rt, l);
            INFO(l.name);
            CHECK(r.violations_2C == 0);
            if (l.name == "squared") CHECK(r.violations == 0);
        }
    }
}

TEST_CASE("lowerbound and multical-to-omni on random transcripts") {
    RandomSource rng(23, 0);
    const auto losses = builtin_convex_losses();
    std::size_t bound_fail = 0;
    for (int rep = 0; rep < 1000; ++rep) {
        const auto t = random_transcript(rng);
        const auto lb = check_lowerbound_inequality(t);
        INFO("lhs=" << lb.lhs << " rhs=" << lb.rhs);
        CHECK(lb.holds);
        const auto cls = random_class(rng);
        for (const auto& c : check_multical_to_omni(t, losses, cls)) bound_fail += !c.holds;
        const auto ident = check_multical_to_omni(t, {losses[0]}, make_finite_class({}, 1.0));
        for (const auto& c : ident) CHECK(c.holds);
    }
    CHECK(bound_fail == 0);
}

TEST_CASE("u-forecast bound") {
    RandomSource rng(29, 0);
    for (int rep = 0; rep < 300; ++rep) {
        const auto t = random_transcript(rng);
        for (const auto& l : builtin_proper_losses()) {
            const auto c = check_u_forecast(t, l);
            INFO(l.name << " lhs=" << c.lhs << " sup=" << c.sup_v);
            CHECK(c.holds);
            CHECK(c.sup_v >= c.grid_v);
            CHECK(c.sup_v >= 0.0);
        }
    }
    // The piecewise-linear sup is attained at a breakpoint: a fine scan never exceeds it.
    const auto t = random_transcript(rng);
    const auto c = check_u_forecast(t, builtin_proper_losses()[0]);
    double beta = 0.0;
    for (const auto& e : t.entries) beta += e.outcome;
    beta /= t.size();
    for (int k = 0; k <= 100000; ++k) CHECK_LE(v_regret_vs_constant(t, k / 1e5, beta), c.sup_v + 1e-9);
}
