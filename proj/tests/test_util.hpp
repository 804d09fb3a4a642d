#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "omnical/core.hpp"
#include "omnical/oracles.hpp"

namespace omnical::testing {

inline std::vector<double> ball_point(RandomSource& rng, std::size_t d) {
    std::vector<double> x(d);
    double n2 = 0.0;
    for (auto& v : x) {
        v = rng.normal();
        n2 += v * v;
    }
    const double r = std::pow(rng.uniform(), 1.0 / d) / std::sqrt(n2);
    for (auto& v : x) v *= r;
    return x;
}

// Predicts a fixed value; counts updates.
class FixedOracle final : public Oracle {
public:
    FixedOracle(std::size_t d, double value) : d_(d), value_(value) {}
    std::size_t dim() const override { return d_; }
    double predict(std::span<const double>) const override { return value_; }
    void update(std::span<const double>, double) override { ++rounds_; }
    std::size_t rounds() const override { return rounds_; }
    std::string name() const override { return "fixed"; }
    std::unique_ptr<Oracle> clone() const override { return std::make_unique<FixedOracle>(*this); }
    void set(double v) { value_ = v; }

private:
    std::size_t d_;
    double value_;
    std::size_t rounds_ = 0;
};

// Random row-stochastic matrix with entries in [floor, ...], full support.
inline Eigen::MatrixXd random_chain(RandomSource& rng, int n) {
    Eigen::MatrixXd Q(n, n);
    const int style = static_cast<int>(rng.uniform() * 3);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) {
            double v = rng.uniform() + 1e-6;
            if (style == 1) v = std::pow(v, 8.0) + 1e-9;  // heavy skew
            if (style == 2 && j == (i * 7 + 3) % n) v += n * 50.0;  // near-deterministic rows
            Q(i, j) = v;
            s += v;
        }
        Q.row(i) /= s;
    }
    return Q;
}

}  // namespace omnical::testing
