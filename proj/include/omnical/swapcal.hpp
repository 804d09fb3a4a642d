#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

#include "omnical/core.hpp"
#include "omnical/oracles.hpp"

namespace omnical {

// One wrapped oracle per grid index, plus the rounds fed to each.
class OracleBank {
public:
    OracleBank(ForecastGrid grid, const Oracle& prototype, double gamma);
    const ForecastGrid& grid() const { return grid_; }
    std::size_t size() const { return oracles_.size(); }
    const WrappedOracle& oracle(std::size_t i) const { return oracles_[i]; }
    // Direct access for seeding oracle states; bypasses the fed-round record.
    WrappedOracle& mutable_oracle(std::size_t i) { return oracles_.at(i); }
    // Feeds (x, outcome) to oracle i only.
    void feed(std::size_t i, std::span<const double> x, double outcome, std::size_t round);
    const std::vector<std::size_t>& fed_rounds(std::size_t i) const { return fed_[i]; }
    std::size_t fed_total() const;

private:
    ForecastGrid grid_;
    std::vector<WrappedOracle> oracles_;
    std::vector<std::vector<std::size_t>> fed_;
};

struct ChainState {
    Eigen::MatrixXd Q;       // row i = distribution of oracle i
    std::vector<double> a;   // stationary distribution
    double residual = 0.0;   // ||Q^T a - a||_inf
    bool used_fallback = false;
};

// Row i is oracle i's forecast distribution at x.
ChainState build_chain(const OracleBank& bank, std::span<const double> x);

struct StationaryResult {
    std::vector<double> a;
    double residual = 0.0;
    bool used_fallback = false;
};

// Solves (Q^T - I) a = 0, sum a = 1 by partially pivoted elimination; power iteration as fallback.
StationaryResult stationary_distribution(const Eigen::MatrixXd& Q);
double stationary_residual(const Eigen::MatrixXd& Q, std::span<const double> a);

struct ForecastDraw {
    double forecast = 0.0;
    int i = -1;
    int j = -1;
};

// Contextual-swap forecaster over a bank of wrapped oracles.
// Linear oracles see intercept-augmented features when augment is set.
class ContextualSwapForecaster {
public:
    ContextualSwapForecaster(ForecastGrid grid, const Oracle& prototype, double gamma, bool augment = true);

    ForecastDraw forecast(const Example& x, RandomSource& rng);
    void update(const Example& x, double outcome);

    const OracleBank& bank() const { return bank_; }
    const ChainState& last_chain() const { return chain_; }
    std::size_t rounds() const { return rounds_; }
    bool awaiting_outcome() const { return awaiting_; }
    std::vector<double> features(const Example& x) const;

private:
    OracleBank bank_;
    bool augment_;
    ChainState chain_;
    bool awaiting_ = false;
    ForecastDraw pending_;
    std::vector<double> pending_x_;
    std::size_t rounds_ = 0;
};

using ExamplePredictor = std::function<double(const Example&)>;

// sum_p sum_{t in S(p)} [loss(p_t, o_t) - loss(f_p(x_t), o_t)].
double contextual_swap_regret(const Transcript& t, const std::vector<ExamplePredictor>& comparators,
                              RegressionLoss loss);

// Supremum over per-bucket comparators drawn from the class.
// LinearBall supports squared loss only.
double sup_contextual_swap_regret(const Transcript& t, const FunctionClass& cls, RegressionLoss loss);

}  // namespace omnical
