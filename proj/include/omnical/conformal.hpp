#pragma once

#include <vector>

#include "omnical/core.hpp"
#include "omnical/swapcal.hpp"

namespace omnical {

// Piecewise-linear score CDF on [0,1]; knots strictly increase from 0 to 1, F(1) = 1.
// F(0) > 0 is an atom at 0.
class ScoreCDF {
public:
    ScoreCDF(std::vector<double> knots, std::vector<double> values);
    // Uniform on [a, b], 0 <= a < b <= 1.
    static ScoreCDF uniform(double a, double b);
    // Five-knot logistic-shaped CDF spanning [center - width/2, center + width/2].
    static ScoreCDF smooth(double center, double width);

    double operator()(double tau) const;
    // Smallest tau with F(tau) >= u.
    double quantile(double u) const;
    double sample(RandomSource& rng) const { return quantile(rng.uniform()); }
    // Maximum segment slope.
    double lipschitz() const;
    const std::vector<double>& knots() const { return knots_; }
    const std::vector<double>& values() const { return values_; }

private:
    std::vector<double> knots_;
    std::vector<double> values_;
};

// Largest slope of the five-knot shape relative to 1/width.
inline constexpr double kSmoothSlope = 1.4;

struct PredictionSet {
    double threshold = 0.0;
    bool contains(double score) const { return score <= threshold; }
};

struct ConformalConfig {
    double q = 0.9;
    int m = 10;
    std::size_t T = 1;      // horizon; sets the defaults below
    double gamma = -1.0;    // < 0 selects 1/sqrt(T)
    double radius = 2.0;    // pinball oracle parameter ball
    // < 0 selects 2(m+1) radius/sqrt(T): the start-up coverage deficit from theta = 0 is about
    // (m+1) radius/(eta T) summed over the oracles, so this keeps it near 1/(2 sqrt T).
    double eta = -1.0;
    bool augment = true;

    double resolved_gamma() const;
    double resolved_eta() const;
};

// Contextual-swap learner with pinball-PGD oracles at target q; thresholds live on the grid.
class ConformalLearner {
public:
    ConformalLearner(std::size_t d, ConformalConfig cfg);

    ForecastDraw threshold(const Example& x, RandomSource& rng) { return swap_.forecast(x, rng); }
    PredictionSet prediction_set(const ForecastDraw& d) const { return {d.forecast}; }
    void update(const Example& x, double score);

    const ConformalConfig& config() const { return cfg_; }
    const ContextualSwapForecaster& forecaster() const { return swap_; }

private:
    ConformalConfig cfg_;
    ContextualSwapForecaster swap_;
};

struct CoverageReport {
    double marginal = 0.0;
    std::vector<std::size_t> bucket_n;
    std::vector<double> bucket_coverage;  // 0 where bucket_n is 0
    std::vector<std::size_t> group_n;
    std::vector<double> group_coverage;  // 0 where group_n is 0
};

// Fractions of rounds with s_t <= p_t, overall, per threshold bucket and per group bit.
CoverageReport coverage(const Transcript& t);

// sum_p sum_{S(p)} PB_q(p_t, s_t) - PB_q(f_p(x_t), s_t).
double pinball_contextual_swap_regret(const Transcript& t, const std::vector<ExamplePredictor>& comparators, double q);

}  // namespace omnical
