#pragma once

#include <span>
#include <vector>

#include "omnical/core.hpp"

namespace omnical {

// Exponential-weights bookkeeping over d loss coordinates.
class AMFState {
public:
    AMFState(std::size_t d, double eta, double C);
    std::size_t dim() const { return cum_.size(); }
    double eta() const { return eta_; }
    double C() const { return C_; }
    std::vector<double> cum_loss() const;
    // Adds one round of realized coordinate losses; each must satisfy |l| <= C.
    void accumulate(std::span<const double> losses);
    std::vector<double> chi_weights() const;

private:
    std::vector<CompensatedSum> cum_;
    double eta_;
    double C_;
};

// chi_j proportional to exp(eta * cum_j), max-shifted.
std::vector<double> chi_weights(std::span<const double> cum_loss, double eta);
// (1/(2C)) sqrt(ln d / T).
double default_eta(double C, std::size_t d, std::size_t T);

struct MixedStrategy {
    std::vector<double> probs;
    double value = 0.0;   // max(probs . L0, probs . L1)
    double lambda = 0.0;  // dual weight on vertex 0
};

double mixed_value(std::span<const double> probs, std::span<const double> L0, std::span<const double> L1);
// min over distributions of max(L0 . p, L1 . p): ternary search on the concave dual, two-point reconstruction.
MixedStrategy solve_minmax(std::span<const double> L0, std::span<const double> L1);
// Exact enumeration of pure strategies and all two-point equalizing mixtures.
MixedStrategy solve_minmax_brute(std::span<const double> L0, std::span<const double> L1);
// max over a uniform lambda grid of min_theta(lambda L0 + (1-lambda) L1); a lower bound on the value.
double minmax_dual_grid(std::span<const double> L0, std::span<const double> L1, int points = 2001);

// Weighted per-arm losses at the two outcome vertices for the current round.
struct AMFRound {
    std::vector<double> L0;
    std::vector<double> L1;
    MixedStrategy strategy;
    int theta_index = -1;
};

// f(x) (z - theta) K; zero for empty buckets.
inline double multical_coordinate_loss(double fx, double theta, double z, double K) { return fx * (z - theta) * K; }

// Exponential-weights L2 multicalibration forecaster for a finite class.
// One coordinate per predictor; coordinate loss f(x)(y - theta) K(history, theta, f).
class AMFMulticalForecaster {
public:
    AMFMulticalForecaster(ForecastGrid grid, FiniteClass cls, std::size_t T, double eta = -1.0);

    double forecast(const Example& x, RandomSource& rng);
    void update(const Example& x, double y);

    const ForecastGrid& grid() const { return grid_; }
    const AMFState& amf() const { return amf_; }
    const AMFRound& last_round() const { return round_; }
    std::size_t rounds() const { return rounds_; }
    std::size_t n(int p) const { return n_[p]; }
    double K(int p, std::size_t f) const;
    // Unnormalized per-predictor L2 error sum_p n(p) K(p,f)^2.
    double unnormalized_K2(std::size_t f) const;
    // Sum of realized per-round increases of unnormalized_K2(f).
    double telescoped_K2(std::size_t f) const { return telescoped_[f].value(); }
    // Largest excess of a realized increase over its per-round bound; <= 0 means every round complied.
    double worst_increase_excess() const { return worst_excess_; }
    // Bound on the per-round minmax value.
    double value_bound() const;
    double worst_value() const { return worst_value_; }

private:
    void eval_features(const Example& x);

    ForecastGrid grid_;
    FiniteClass cls_;
    AMFState amf_;
    std::vector<std::size_t> n_;
    std::vector<std::vector<CompensatedSum>> resid_;  // [p][f]
    std::vector<CompensatedSum> telescoped_;
    std::vector<double> fx_;
    std::vector<double> pending_x_;
    AMFRound round_;
    bool awaiting_ = false;
    std::size_t rounds_ = 0;
    double worst_excess_ = -INFINITY;
    double worst_value_ = -INFINITY;
};

// Exponential-weights forecaster over the coordinates (f, a, b, v) with loss
// 1[f(x)=b] E_z[l_v(y,theta) - l_v(y,a)]. The cumulative loss of every coordinate is
// A(f,b,v) - sign(a-v) S(f,b,v), so state is two accumulators per (f,b,v).
class VForecaster {
public:
    VForecaster(ForecastGrid grid, int mprime, FiniteClass cls, std::size_t T, double eta = -1.0);

    double forecast(const Example& x, RandomSource& rng);
    void update(const Example& x, double y);

    std::size_t coordinate_count() const;
    double C() const { return 2.0; }
    double eta() const { return eta_; }
    int mprime() const { return mprime_; }
    const ForecastGrid& grid() const { return grid_; }
    const AMFRound& last_round() const { return round_; }
    std::size_t rounds() const { return rounds_; }
    // Cumulative realized loss of coordinate (f, a, b, v) by grid indices.
    double cum_loss(std::size_t f, int a, int b, int v) const;
    // max over all coordinates of the cumulative realized loss.
    double max_coordinate_regret() const;
    double value_bound() const { return 2.0 / grid_.m(); }
    double worst_value() const { return worst_value_; }

private:
    std::size_t idx(std::size_t f, int b, int v) const { return (f * 2 + b) * (mprime_ + 1) + v; }
    int n_ge(int v) const { return n_ge_[v]; }

    ForecastGrid grid_;
    int mprime_;
    FiniteClass cls_;
    double eta_;
    std::vector<CompensatedSum> A_;
    std::vector<CompensatedSum> S_;
    std::vector<int> n_ge_;
    std::vector<int> bits_;
    std::vector<double> pending_x_;
    AMFRound round_;
    bool awaiting_ = false;
    std::size_t rounds_ = 0;
    double worst_value_ = -INFINITY;
};

}  // namespace omnical
