#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "omnical/core.hpp"

namespace omnical {

// Online regression oracle over real feature vectors.
class Oracle {
public:
    virtual ~Oracle() = default;
    virtual std::size_t dim() const = 0;
    virtual double predict(std::span<const double> x) const = 0;
    virtual void update(std::span<const double> x, double outcome) = 0;
    virtual std::size_t rounds() const = 0;
    virtual std::string name() const = 0;
    virtual std::unique_ptr<Oracle> clone() const = 0;
};

// Forward (Azoury-Warmuth) ridge regression with A = eps I + sum x x^T.
class AzouryWarmuth final : public Oracle {
public:
    static constexpr std::size_t kRebuildEvery = 10000;

    explicit AzouryWarmuth(std::size_t d, double eps = 1.0);
    std::size_t dim() const override { return d_; }
    // b^T (A + x x^T)^{-1} x, via a rank-one correction; no mutation.
    double predict(std::span<const double> x) const override;
    void update(std::span<const double> x, double y) override;
    std::size_t rounds() const override { return rounds_; }
    std::string name() const override { return "aw"; }
    std::unique_ptr<Oracle> clone() const override { return std::make_unique<AzouryWarmuth>(*this); }

    const Eigen::MatrixXd& inv_cov() const { return inv_cov_; }
    const Eigen::VectorXd& b() const { return b_; }
    const Eigen::MatrixXd& cov() const { return cov_; }
    double eps() const { return eps_; }
    bool inv_cov_positive_definite() const;
    // Rebuilds inv_cov from the accumulated A by a direct Cholesky solve.
    void refactor();

private:
    std::size_t d_;
    double eps_;
    Eigen::MatrixXd inv_cov_;
    Eigen::MatrixXd cov_;
    Eigen::VectorXd b_;
    std::size_t rounds_ = 0;
    std::size_t since_rebuild_ = 0;
};

// Unprojected online gradient descent on squared loss.
class OgdSquared final : public Oracle {
public:
    OgdSquared(std::size_t d, double eta);
    std::size_t dim() const override { return theta_.size(); }
    double predict(std::span<const double> x) const override;
    void update(std::span<const double> x, double y) override;
    std::size_t rounds() const override { return rounds_; }
    std::string name() const override;
    std::unique_ptr<Oracle> clone() const override { return std::make_unique<OgdSquared>(*this); }
    const std::vector<double>& theta() const { return theta_; }

private:
    std::vector<double> theta_;
    double eta_;
    std::size_t rounds_ = 0;
};

// Projected subgradient descent on the pinball loss PB_q(theta . x, s).
class PinballPGD final : public Oracle {
public:
    PinballPGD(std::size_t d, double q, double eta, double radius);
    std::size_t dim() const override { return theta_.size(); }
    double predict(std::span<const double> x) const override;
    void update(std::span<const double> x, double s) override;
    std::size_t rounds() const override { return rounds_; }
    std::string name() const override;
    std::unique_ptr<Oracle> clone() const override { return std::make_unique<PinballPGD>(*this); }
    const std::vector<double>& theta() const { return theta_; }
    void set_theta(std::vector<double> theta);
    double q() const { return q_; }
    double eta() const { return eta_; }
    double radius() const { return radius_; }

private:
    std::vector<double> theta_;
    double q_;
    double eta_;
    double radius_;
    std::size_t rounds_ = 0;
};

// Euclidean projection onto {||theta|| <= radius}.
void project_to_ball(std::vector<double>& theta, double radius);

// Registry: aw, ogd-squared:<eta>, pgd-pinball:<q>:<eta>:<radius>.
std::unique_ptr<Oracle> make_oracle(const std::string& spec, std::size_t d);

// Rounded and randomized wrapper: q[j] = gamma/(m+1) + (1-gamma) 1[round(clamp(pred)) = j/m].
class WrappedOracle {
public:
    WrappedOracle(std::unique_ptr<Oracle> inner, ForecastGrid grid, double gamma);
    WrappedOracle(const WrappedOracle& o);
    WrappedOracle& operator=(const WrappedOracle& o);
    WrappedOracle(WrappedOracle&&) noexcept = default;
    WrappedOracle& operator=(WrappedOracle&&) noexcept = default;

    int rounded_index(std::span<const double> x) const;
    std::vector<double> distribution(std::span<const double> x) const;
    void distribution_into(std::span<const double> x, std::span<double> out) const;
    void update(std::span<const double> x, double outcome) { inner_->update(x, outcome); }

    const Oracle& inner() const { return *inner_; }
    Oracle& inner() { return *inner_; }
    const ForecastGrid& grid() const { return grid_; }
    double gamma() const { return gamma_; }

private:
    std::unique_ptr<Oracle> inner_;
    ForecastGrid grid_;
    double gamma_;
};

std::vector<double> wrapped_distribution(const WrappedOracle& w, std::span<const double> x);

// Loss used to score real-valued predictions.
struct RegressionLoss {
    enum class Kind { Squared, Pinball };
    Kind kind = Kind::Squared;
    double q = 0.5;
    static RegressionLoss squared() { return {}; }
    static RegressionLoss pinball_q(double q) { return {Kind::Pinball, q}; }
    double operator()(double prediction, double outcome) const;
};

struct RegretRound {
    std::vector<double> x;
    double outcome = 0.0;
    double prediction = 0.0;
};

double realized_regret(std::span<const RegretRound> history,
                       const std::function<double(std::span<const double>)>& comparator, RegressionLoss loss);

struct BallFit {
    std::vector<double> theta;
    double loss = 0.0;         // cumulative loss at theta
    double lower_bound = 0.0;  // certified lower bound on the minimum over the ball
};

// min over ||theta||^2 <= B of the cumulative loss.
// Squared: norm-constrained least squares by bisection on the ridge multiplier.
// Pinball: accelerated projected gradient on a smoothed objective with a dual certificate.
BallFit best_in_ball(std::span<const RegretRound> history, double B, RegressionLoss loss);
// Plain projected gradient descent on squared loss; independent cross-check route.
BallFit best_in_ball_squared_pgd(std::span<const RegretRound> history, double B);

}  // namespace omnical
