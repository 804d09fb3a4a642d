#include "verify_suite.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <ostream>
#include <sstream>

#include "cli_common.hpp"
#include "omnical/adversaries.hpp"
#include "omnical/amf.hpp"
#include "omnical/conformal.hpp"
#include "omnical/metrics.hpp"
#include "omnical/oracles.hpp"
#include "omnical/swapcal.hpp"

namespace omnical::cli {

namespace {

struct Criterion {
    int id = 0;
    std::string name;
    bool pass = true;
    Json details = Json::object();
};

// Transcripts generated anywhere in the suite, with the classes they are scored against.
struct Pool {
    struct Item {
        std::string source;
        Transcript t;
        FunctionClass cls;
        double q = 0.5;
    };
    std::vector<Item> items;
};

std::vector<double> ball(RandomSource& rng, std::size_t d) { return uniform_ball(rng, d); }

// Binary-label regression sequence with a random linear mean.
std::vector<RegretRound> binary_sequence(std::uint64_t k, std::size_t d, std::size_t T) {
    RandomSource rng(0xc1, k);
    std::vector<double> theta(d);
    for (auto& v : theta) v = rng.normal() * 0.5;
    std::vector<RegretRound> h(T);
    for (auto& r : h) {
        r.x = ball(rng, d);
        double mu = 0.5;
        for (std::size_t i = 0; i < d; ++i) mu += theta[i] * r.x[i];
        r.outcome = rng.bernoulli(std::clamp(mu, 0.0, 1.0)) ? 1.0 : 0.0;
    }
    return h;
}

// Miscalibrated transcript: forecasts are a noisy, biased rounding of the true mean.
Transcript random_transcript(RandomSource& rng, std::size_t d = 2) {
    const int m = 2 + static_cast<int>(rng.uniform() * 9);
    const std::size_t T = 1 + static_cast<std::size_t>(rng.uniform() * 200);
    const double bias = (rng.uniform() - 0.5) * 0.6, noise = rng.uniform() * 0.3;
    Transcript t;
    t.grid = ForecastGrid(m);
    for (std::size_t k = 0; k < T; ++k) {
        TranscriptEntry e;
        e.x.x = ball(rng, d);
        const double mu = std::clamp(0.5 + 0.45 * e.x.x[0] - 0.3 * e.x.x[1], 0.0, 1.0);
        e.outcome = rng.bernoulli(mu) ? 1.0 : 0.0;
        e.forecast = t.grid.round(mu + bias + noise * rng.normal());
        t.push(e);
    }
    return t;
}

// Predictors with values in [0,1], B = 1.
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

Eigen::MatrixXd random_chain(RandomSource& rng, int n) {
    Eigen::MatrixXd Q(n, n);
    const int style = static_cast<int>(rng.uniform() * 3);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) {
            double v = rng.uniform() + 1e-6;
            if (style == 1) v = std::pow(v, 8.0) + 1e-9;
            if (style == 2 && j == (i * 7 + 3) % n) v += n * 50.0;
            Q(i, j) = v;
            s += v;
        }
        Q.row(i) /= s;
    }
    return Q;
}

double own_loss(std::span<const RegretRound> h, RegressionLoss loss) {
    CompensatedSum s;
    for (const auto& r : h) s.add(loss(r.prediction, r.outcome));
    return s.value();
}

void write_csv(const std::filesystem::path& path, const std::string& header, const std::vector<std::vector<double>>& rows) {
    std::string s = header + "\n";
    for (const auto& row : rows) {
        for (std::size_t k = 0; k < row.size(); ++k) s += (k ? "," : "") + fmt(row[k]);
        s += "\n";
    }
    write_text(path, s);
}

// Criteria 1 and 2: forward ridge regret and rounding overhead on the same sequences.
void oracle_suite(const std::filesystem::path& out, Criterion& c1, Criterion& c2) {
    const std::size_t T = 2000;
    const double B = 4.0;
    const int ms[] = {4, 16, 64};
    std::vector<std::vector<double>> rows;
    double worst1 = -INFINITY, worst2 = -INFINITY;
    std::size_t fail1 = 0, fail2 = 0;
    for (std::uint64_t k = 0; k < 100; ++k) {
        const std::size_t d = 1 + k % 8;
        auto h = binary_sequence(k, d, T);
        AzouryWarmuth aw(d, 1.0);
        for (auto& r : h) {
            r.prediction = aw.predict(r.x);
            aw.update(r.x, r.outcome);
        }
        const auto sq = RegressionLoss::squared();
        const double regret = own_loss(h, sq) - best_in_ball(h, B, sq).lower_bound;
        const double bound = B + 2.0 * static_cast<double>(d) * std::log(T + 1.0);
        worst1 = std::max(worst1, regret - bound);
        if (regret > bound + 1e-6) ++fail1;
        std::vector<double> row{static_cast<double>(k), static_cast<double>(d), regret, bound};
        for (int m : ms) {
            const ForecastGrid g(m);
            CompensatedSum excess;
            for (const auto& r : h) excess.add(sq(g.round(r.prediction), r.outcome) - sq(r.prediction, r.outcome));
            const double b2 = 3.0 * T / m;
            worst2 = std::max(worst2, excess.value() - b2);
            if (excess.value() > b2 + 1e-9) ++fail2;
            row.push_back(excess.value());
        }
        rows.push_back(row);
    }
    write_csv(out / "c01_c02_oracle.csv", "seq,d,aw_regret,aw_bound,round_excess_m4,round_excess_m16,round_excess_m64", rows);
    c1.pass = fail1 == 0;
    c1.details = {{"sequences", 100}, {"failures", fail1}, {"worst_regret_minus_bound", worst1}};
    c2.pass = fail2 == 0;
    c2.details = {{"sequences", 100}, {"grids", {4, 16, 64}}, {"failures", fail2}, {"worst_excess_minus_bound", worst2}};
}

void pgd_suite(const std::filesystem::path& out, Criterion& c) {
    const std::size_t T = 2000;
    const double R = 2.0, qs[] = {0.1, 0.5, 0.9};
    std::vector<std::vector<double>> rows;
    std::size_t fail = 0;
    double worst = -INFINITY;
    for (std::uint64_t k = 0; k < 100; ++k) {
        const std::size_t d = 1 + k % 8;
        const double q = qs[k % 3];
        RandomSource rng(0xc3, k);
        std::vector<double> theta(d);
        for (auto& v : theta) v = rng.normal() * 0.4;
        PinballPGD pgd(d, q, R / std::sqrt(static_cast<double>(T)), R);
        std::vector<RegretRound> h(T);
        for (auto& r : h) {
            r.x = ball(rng, d);
            double c0 = 0.5;
            for (std::size_t i = 0; i < d; ++i) c0 += theta[i] * r.x[i];
            r.outcome = std::clamp(c0 + 0.25 * (rng.uniform() - 0.5), 0.0, 1.0);
            r.prediction = pgd.predict(r.x);
            pgd.update(r.x, r.outcome);
        }
        const auto loss = RegressionLoss::pinball_q(q);
        const double regret = own_loss(h, loss) - best_in_ball(h, R * R, loss).lower_bound;
        const double bound = R * std::sqrt(static_cast<double>(T));
        worst = std::max(worst, regret - bound);
        if (regret > bound + 1e-6) ++fail;
        rows.push_back({static_cast<double>(k), static_cast<double>(d), q, regret, bound});
    }
    write_csv(out / "c03_pgd.csv", "seq,d,q,regret,bound", rows);
    c.pass = fail == 0;
    c.details = {{"sequences", 100}, {"failures", fail}, {"worst_regret_minus_bound", worst}};
}

void stationary_suite(Criterion& c4, Criterion& c5) {
    RandomSource rng(0xc4, 0);
    double worst = 0.0;
    std::size_t fallbacks = 0;
    for (int k = 0; k < 10000; ++k) {
        const int n = 2 + k % 64;
        const auto Q = random_chain(rng, n);
        const auto s = stationary_distribution(Q);
        worst = std::max({worst, s.residual, stationary_residual(Q, s.a)});
        if (s.used_fallback) ++fallbacks;
    }
    c4.pass = worst <= 1e-9;
    c4.details = {{"chains", 10000}, {"max_size", 65}, {"worst_residual", worst}, {"fallbacks", fallbacks}};

    // sum_i a_i sum_j Q_ij l(f_j(x)) = sum_j a_j l(f_j(x)) for per-index linear comparators f_j.
    RandomSource r5(0xc5, 0);
    double gap = 0.0;
    const auto sq = RegressionLoss::squared();
    for (int k = 0; k < 10000; ++k) {
        const int n = 2 + static_cast<int>(r5.uniform() * 64);
        const auto Q = random_chain(r5, n);
        const auto a = stationary_distribution(Q).a;
        const std::size_t d = 1 + k % 6;
        const auto x = augment(ball(r5, d));
        std::vector<double> f(n);
        for (auto& v : f) {
            double s = 0.0;
            for (double xi : x) s += r5.normal() * xi;
            v = s;
        }
        const double y = r5.bernoulli(0.5) ? 1.0 : 0.0;
        CompensatedSum lhs, rhs;
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) lhs.add(a[i] * Q(i, j) * sq(f[j], y));
            rhs.add(a[i] * sq(f[i], y));
        }
        gap = std::max(gap, std::fabs(lhs.value() - rhs.value()));
    }
    c5.pass = gap <= 1e-12;
    c5.details = {{"triples", 10000}, {"worst_discrepancy", gap}};
}

double direct_K(const Transcript& t, int p, const Predictor& f) {
    CompensatedSum s;
    std::size_t n = 0;
    for (const auto& e : t.entries)
        if (t.grid.index_of(e.forecast) == p) s.add(f.fn(e.x) * (e.outcome - e.forecast)), ++n;
    return n ? s.value() / static_cast<double>(n) : 0.0;
}

void witness_suite(Criterion& c) {
    RandomSource rng(0xc6, 0);
    std::size_t tested = 0, fail = 0;
    double worst = INFINITY;
    for (int rep = 0; rep < 20000 && tested < 1000; ++rep) {
        const auto t = random_transcript(rng);
        const auto cls = random_class(rng);
        const auto& f = cls.predictors[static_cast<std::size_t>(rng.uniform() * cls.predictors.size())];
        const int p = t.grid.index_of(t.entries[static_cast<std::size_t>(rng.uniform() * t.size())].forecast);
        const double K = direct_K(t, p, f);
        const double alpha = K * (0.05 + 0.95 * rng.uniform());
        if (!(alpha >= 0.01)) continue;
        const auto w = witness_advantage(t, p, f, alpha);
        const double margin = w.advantage - alpha * alpha / cls.B;
        worst = std::min(worst, margin);
        if (margin < -1e-9) ++fail;
        ++tested;
    }
    c.pass = tested == 1000 && fail == 0;
    c.details = {{"triples", tested}, {"failures", fail}, {"worst_advantage_minus_bound", worst}};
}

void lowerbound_suite(Criterion& c, Pool& pool) {
    RandomSource rng(0xc8, 0);
    std::size_t fail = 0;
    double worst = INFINITY;
    for (int k = 0; k < 1000; ++k) {
        auto t = random_transcript(rng);
        const auto r = check_lowerbound_inequality(t);
        worst = std::min(worst, r.lhs - r.rhs);
        if (!r.holds) ++fail;
        pool.items.push_back({"random", std::move(t), random_class(rng), 0.5});
    }
    c.pass = fail == 0;
    c.details = {{"transcripts", 1000}, {"failures", fail}, {"worst_lhs_minus_rhs", worst}};
}

double slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    const double n = static_cast<double>(xs.size());
    double mx = 0, my = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) mx += xs[k] / n, my += ys[k] / n;
    double sxy = 0, sxx = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) sxy += (xs[k] - mx) * (ys[k] - my), sxx += (xs[k] - mx) * (xs[k] - mx);
    return sxy / sxx;
}

int quarter_root(std::size_t T) { return static_cast<int>(std::ceil(std::pow(static_cast<double>(T), 0.25))); }

void rate_suite(const std::filesystem::path& out, Criterion& c, Pool& pool) {
    const std::size_t Ts[] = {1024, 4096, 16384};
    std::vector<std::vector<double>> rows;
    std::vector<double> lx, ly, means;
    const auto bank = make_class("bank:8", 4);
    for (std::size_t T : Ts) {
        const int m = quarter_root(T);
        CompensatedSum total;
        for (std::uint64_t s = 0; s < 10; ++s) {
            auto st = EpisodeStreams::for_replication(0xc9, s);
            const auto adv = make_adversary("linear:4", st.adversary);
            AzouryWarmuth proto(5, 1.0);
            ContextualSwapForecaster fc(ForecastGrid(m), proto, 1.0 / static_cast<double>(T), true);
            EpisodeHooks hooks{[&](const Example& x, RandomSource& r) { return fc.forecast(x, r); },
                               [&](const Example& x, double y) { fc.update(x, y); }, {}};
            auto t = run_episode(*adv, m, T, hooks, st.forecaster, st.outcome);
            const double sK2 = calibration_report(t, LinearBall{4, 1.0}).sK2;
            total.add(sK2);
            rows.push_back({static_cast<double>(T), static_cast<double>(m), static_cast<double>(s), sK2});
            pool.items.push_back({"rate", t, LinearBall{4, 1.0}, 0.5});
            pool.items.push_back({"rate", std::move(t), bank, 0.5});
        }
        means.push_back(total.value() / 10.0);
        lx.push_back(std::log(static_cast<double>(T)));
        ly.push_back(std::log(means.back()));
    }
    write_csv(out / "c09_rate.csv", "T,m,seed,sK2", rows);
    const double sl = slope(lx, ly);
    const bool decreasing = means[0] > means[1] && means[1] > means[2];
    c.pass = decreasing && sl <= -0.15;
    c.details = {{"mean_sK2", means}, {"strictly_decreasing", decreasing}, {"loglog_slope", sl}, {"slope_bound", -0.15}};
}

void amf_suite(const std::filesystem::path& out, Criterion& c, Pool& pool) {
    const std::size_t T = 10000;
    const int m = 100;
    const FiniteClass cls = std::get<FiniteClass>(make_class("bank:16", 4));
    const double B = cls.B, F = static_cast<double>(cls.predictors.size());
    const double bound = (3.0 * B * std::log(static_cast<double>(T)) + 4.0 * std::sqrt(B * std::log(F)) + std::sqrt(B)) /
                         std::sqrt(static_cast<double>(T));
    const double vbound = std::sqrt(B) / m;
    std::vector<std::vector<double>> rows;
    CompensatedSum total;
    double worst_value = -INFINITY, worst_gap = 0.0;
    std::size_t sampled = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        auto st = EpisodeStreams::for_replication(0xca, s);
        const auto adv = make_adversary("linear:4", st.adversary);
        AMFMulticalForecaster fc(ForecastGrid(m), cls, T);
        std::size_t round = 0;
        EpisodeHooks hooks{[&](const Example& x, RandomSource& r) {
                               const double p = fc.forecast(x, r);
                               return ForecastDraw{p, -1, fc.grid().index_of(p)};
                           },
                           [&](const Example& x, double y) { fc.update(x, y); },
                           [&](const Transcript&, const AdversaryDraw&) {
                               // Every 200th round: 50 per seed, 1000 in total.
                               if (round++ % 200 != 0) return;
                               const auto& lr = fc.last_round();
                               const double brute = solve_minmax_brute(lr.L0, lr.L1).value;
                               worst_gap = std::max(worst_gap, std::fabs(lr.strategy.value - brute));
                               ++sampled;
                           }};
        auto t = run_episode(*adv, m, T, hooks, st.forecaster, st.outcome);
        const double K2 = calibration_report(t, cls).K2;
        total.add(K2);
        worst_value = std::max(worst_value, fc.worst_value());
        rows.push_back({static_cast<double>(s), K2, fc.worst_value(), fc.worst_increase_excess()});
        pool.items.push_back({"amf", std::move(t), cls, 0.5});
    }
    write_csv(out / "c10_amf.csv", "seed,K2,worst_value,worst_increase_excess", rows);
    const double mean = total.value() / 20.0;
    c.pass = mean <= bound && worst_value <= vbound + 1e-9 && worst_gap <= 1e-6 && sampled == 1000;
    c.details = {{"mean_K2", mean},           {"K2_bound", bound},          {"worst_value", worst_value},
                 {"value_bound", vbound},     {"minmax_rounds", sampled},   {"minmax_worst_gap", worst_gap}};
}

void vcal_suite(const std::filesystem::path& out, Criterion& c, Pool& pool) {
    const std::size_t T = 4096;
    const int m = 64, mprime = 128;
    const double rho = 0.05;
    const FiniteClass cls = std::get<FiniteClass>(make_class("boolbank:8", 4));
    std::vector<std::vector<double>> rows;
    std::size_t within = 0, ufail = 0;
    double bound = 0.0, worst_u = -INFINITY;
    std::size_t dcoord = 0;
    for (std::uint64_t s = 0; s < 10; ++s) {
        auto st = EpisodeStreams::for_replication(0xcb, s);
        const auto adv = make_adversary("linear:4", st.adversary);
        VForecaster fc(ForecastGrid(m), mprime, cls, T);
        dcoord = fc.coordinate_count();
        bound = 16.0 * std::sqrt(T * std::log(2.0 * static_cast<double>(dcoord) / rho)) + 2.0 * T / m;
        EpisodeHooks hooks{[&](const Example& x, RandomSource& r) {
                               const double p = fc.forecast(x, r);
                               return ForecastDraw{p, -1, fc.grid().index_of(p)};
                           },
                           [&](const Example& x, double y) { fc.update(x, y); }, {}};
        auto t = run_episode(*adv, m, T, hooks, st.forecaster, st.outcome);
        const double regret = fc.max_coordinate_regret();
        if (regret <= bound) ++within;
        for (const auto& loss : builtin_proper_losses()) {
            const auto u = check_u_forecast(t, loss);
            worst_u = std::max(worst_u, u.lhs - 2.0 * u.sup_v);
            if (!u.holds) ++ufail;
        }
        rows.push_back({static_cast<double>(s), regret, bound});
        pool.items.push_back({"vcal", std::move(t), cls, 0.5});
    }
    write_csv(out / "c11_vcal.csv", "seed,max_coordinate_regret,bound", rows);
    c.pass = within >= 9 && ufail == 0;
    c.details = {{"coordinates", dcoord}, {"bound", bound},         {"seeds_within_bound", within},
                 {"seeds", 10},           {"u_forecast_failures", ufail}, {"worst_u_lhs_minus_rhs", worst_u}};
}

void conformal_suite(const std::filesystem::path& out, Criterion& c, Pool& pool) {
    const std::size_t Ts[] = {2500, 10000, 40000};
    const double q = 0.9;
    const LinearBall lin{6, 1.0};
    std::vector<std::vector<double>> rows;
    std::vector<double> mean_sq2;
    bool coverage_ok = true;
    double cov_lo = INFINITY, cov_hi = -INFINITY, grp_lo = INFINITY, grp_hi = -INFINITY;
    for (std::size_t T : Ts) {
        CompensatedSum total;
        for (std::uint64_t s = 0; s < 10; ++s) {
            auto st = EpisodeStreams::for_replication(0xcc, s);
            const auto adv = make_adversary("smoothscore:4:4", st.adversary);
            ConformalConfig cc;
            cc.q = q;
            cc.m = quarter_root(T);
            cc.T = T;
            ConformalLearner learner(adv->dim(), cc);
            EpisodeHooks hooks{[&](const Example& x, RandomSource& r) { return learner.threshold(x, r); },
                               [&](const Example& x, double v) { learner.update(x, v); }, {}};
            auto t = run_episode(*adv, cc.m, T, hooks, st.forecaster, st.outcome);
            const double sq2 = swap_quantile_error_L2(t, lin, q);
            total.add(sq2);
            const auto cov = coverage(t);
            std::vector<double> row{static_cast<double>(T), static_cast<double>(s), cov.marginal, sq2};
            row.insert(row.end(), cov.group_coverage.begin(), cov.group_coverage.end());
            rows.push_back(row);
            if (T == 10000) {
                cov_lo = std::min(cov_lo, cov.marginal), cov_hi = std::max(cov_hi, cov.marginal);
                if (cov.marginal < 0.88 || cov.marginal > 0.92) coverage_ok = false;
                for (double g : cov.group_coverage) {
                    grp_lo = std::min(grp_lo, g), grp_hi = std::max(grp_hi, g);
                    if (g < 0.85 || g > 0.95) coverage_ok = false;
                }
            }
            pool.items.push_back({"conformal", std::move(t), lin, q});
        }
        mean_sq2.push_back(total.value() / 10.0);
    }
    write_csv(out / "c12_conformal.csv", "T,seed,coverage_marginal,sQ2,coverage_g0,coverage_g1,coverage_g2,coverage_g3", rows);
    const bool decreasing = mean_sq2[0] > mean_sq2[1] && mean_sq2[1] > mean_sq2[2];
    c.pass = coverage_ok && decreasing;
    c.details = {{"marginal_range_T10000", {cov_lo, cov_hi}}, {"group_range_T10000", {grp_lo, grp_hi}},
                 {"mean_sQ2", mean_sq2},                       {"sQ2_decreasing", decreasing}};
}

void post_process_suite(Criterion& c) {
    const int m = 100, N = 10000;
    double worst = 0.0;
    std::string worst_loss;
    for (const auto& loss : builtin_convex_losses()) {
        for (int j = 0; j <= m; ++j) {
            const double p = static_cast<double>(j) / m;
            double brute = INFINITY;
            for (int i = 0; i <= N; ++i) brute = std::min(brute, loss.expected(p, static_cast<double>(i) / N));
            for (double k : {post_process_numeric(loss, p), post_process(loss, p)}) {
                const double gap = std::fabs(loss.expected(p, k) - brute);
                if (gap > worst) worst = gap, worst_loss = loss.name;
            }
        }
    }
    c.pass = worst <= 1e-6;
    c.details = {{"losses", builtin_convex_losses().size()}, {"grid_points", N + 1}, {"worst_gap", worst},
                 {"worst_loss", worst_loss}};
}

// Criterion 7 over the pool. Mean-track checks need binary outcomes and a finite class.
void inequality_suite(const std::filesystem::path& out, Criterion& c, const Pool& pool) {
    const auto losses = builtin_convex_losses();
    std::map<std::string, std::size_t> fails;
    for (const char* k : {"K1<=sqrt(K2)", "sK1<=sqrt(sK2)", "sK>=K", "sO>=O", "multical_to_omni", "conditional_mean",
                          "post_process_C", "post_process_2C"})
        fails[k] = 0;
    std::size_t checked = 0, pp_buckets = 0;
    double worst_pp = -INFINITY, worst_pp2 = -INFINITY;
    std::string worst_pp_loss;
    std::vector<std::vector<double>> rows;
    for (std::size_t n = 0; n < pool.items.size(); ++n) {
        const auto& it = pool.items[n];
        const ResidualRule rule{it.t.track, it.q};
        const auto r = calibration_report(it.t, it.cls, rule);
        ++checked;
        if (r.K1 > std::sqrt(r.K2) + 1e-12) ++fails["K1<=sqrt(K2)"];
        if (r.sK1 > std::sqrt(r.sK2) + 1e-12) ++fails["sK1<=sqrt(sK2)"];
        if (r.K1 > r.sK1 + 1e-12 || r.K2 > r.sK2 + 1e-12 || r.Kinf > r.sKinf + 1e-12) ++fails["sK>=K"];
        std::vector<double> row{static_cast<double>(n), r.K1, r.K2, r.sK1, r.sK2};
        const auto* fc = std::get_if<FiniteClass>(&it.cls);
        if (it.t.track == Track::Mean && fc) {
            const auto o = omni_regret(it.t, losses, *fc);
            if (o.omni > o.swap_omni + 1e-12) ++fails["sO>=O"];
            for (const auto& i : check_multical_to_omni(it.t, losses, *fc))
                if (!i.holds) ++fails["multical_to_omni"];
            for (const auto& i : check_conditional_mean(it.t, *fc))
                if (!i.holds) ++fails["conditional_mean"];
            std::size_t pv = 0, pv2 = 0;
            for (const auto& loss : losses) {
                const auto pp = check_post_process_optimality(it.t, loss);
                pv += pp.violations;
                pv2 += pp.violations_2C;
                if (pp.worst_excess > worst_pp) worst_pp = pp.worst_excess, worst_pp_loss = loss.name;
                worst_pp2 = std::max(worst_pp2, pp.worst_excess_2C);
            }
            for (int p = 0; p < it.t.grid.size(); ++p) pp_buckets += r.n[p] > 0 ? losses.size() : 0;
            fails["post_process_C"] += pv;
            fails["post_process_2C"] += pv2;
            row.insert(row.end(), {o.omni, o.swap_omni, static_cast<double>(pv), static_cast<double>(pv2)});
        } else {
            row.insert(row.end(), {NAN, NAN, NAN, NAN});
        }
        rows.push_back(row);
    }
    write_csv(out / "c07_inequalities.csv", "item,K1,K2,sK1,sK2,omni,swap_omni,post_process_violations_C,post_process_violations_2C",
              rows);
    Json f = Json::object();
    bool pass = true;
    for (const auto& [k, v] : fails) {
        f[k] = v;
        pass = pass && v == 0;
    }
    c.pass = pass;
    c.details = {{"transcripts", checked},
                 {"failures", f},
                 {"post_process_bucket_loss_pairs", pp_buckets},
                 {"post_process_worst_excess_C", worst_pp},
                 {"post_process_worst_loss", worst_pp_loss},
                 {"post_process_worst_excess_2C", worst_pp2}};
}

}  // namespace

int run_verify(const std::filesystem::path& out, std::ostream& log) {
    std::filesystem::create_directories(out);
    std::vector<Criterion> cs(13);
    const char* names[] = {"oracle regret bound",     "rounding overhead",        "pinball PGD regret",
                           "stationary solver",       "stationarity cancellation", "witness advantage",
                           "metric inequalities",     "lower-bound construction", "multicalibration rate",
                           "AMF multicalibration",    "V-forecaster",             "conformal coverage",
                           "post-processing oracle"};
    for (int k = 0; k < 13; ++k) cs[k].id = k + 1, cs[k].name = names[k];
    std::vector<double> seconds(13, 0.0);
    Pool pool;
    auto timed = [&](std::initializer_list<int> ids, const std::function<void()>& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        // Criteria computed together share one timing; each is charged the whole.
        for (int id : ids) seconds[id - 1] = s;
    };
    timed({1, 2}, [&] { oracle_suite(out, cs[0], cs[1]); });
    timed({3}, [&] { pgd_suite(out, cs[2]); });
    timed({4, 5}, [&] { stationary_suite(cs[3], cs[4]); });
    timed({6}, [&] { witness_suite(cs[5]); });
    timed({8}, [&] { lowerbound_suite(cs[7], pool); });
    timed({9}, [&] { rate_suite(out, cs[8], pool); });
    timed({10}, [&] { amf_suite(out, cs[9], pool); });
    timed({11}, [&] { vcal_suite(out, cs[10], pool); });
    timed({12}, [&] { conformal_suite(out, cs[11], pool); });
    timed({13}, [&] { post_process_suite(cs[12]); });
    timed({7}, [&] { inequality_suite(out, cs[6], pool); });

    Json j;
    j["criteria"] = Json::array();
    bool all = true;
    for (const auto& c : cs) {
        j["criteria"].push_back({{"id", c.id}, {"name", c.name}, {"pass", c.pass}, {"details", c.details}});
        all = all && c.pass;
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", seconds[c.id - 1]);
        log << "criterion " << c.id << ": " << (c.pass ? "PASS" : "FAIL") << " " << c.name << " seconds=" << buf << " "
            << c.details.dump() << "\n";
    }
    j["pass"] = all;
    write_json(out / "verify.json", j);
    return all ? 0 : 2;
}

}  // namespace omnical::cli
