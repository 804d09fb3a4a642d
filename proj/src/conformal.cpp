#include "omnical/conformal.hpp"

#include <algorithm>
#include <cmath>

namespace omnical {

ScoreCDF::ScoreCDF(std::vector<double> knots, std::vector<double> values)
    : knots_(std::move(knots)), values_(std::move(values)) {
    if (knots_.size() < 2 || knots_.size() != values_.size())
        throw ConfigError("score CDF needs matching knot and value lists of length >= 2");
    if (knots_.front() != 0.0 || knots_.back() != 1.0) throw ConfigError("score CDF knots must span [0,1]");
    for (std::size_t k = 1; k < knots_.size(); ++k) {
        if (!(knots_[k] > knots_[k - 1])) throw ConfigError("score CDF knots must strictly increase");
        if (!(values_[k] >= values_[k - 1])) throw ConfigError("score CDF must be non-decreasing");
    }
    if (!(values_.front() >= 0.0) || values_.back() != 1.0) throw ConfigError("score CDF must rise from >= 0 to 1");
}

ScoreCDF ScoreCDF::uniform(double a, double b) {
    if (!(a >= 0.0 && b <= 1.0 && a < b)) throw ConfigError("uniform score support must satisfy 0 <= a < b <= 1");
    std::vector<double> k{0.0}, v{0.0};
    if (a > 0.0) k.push_back(a), v.push_back(0.0);
    k.push_back(b), v.push_back(1.0);
    if (b < 1.0) k.push_back(1.0), v.push_back(1.0);
    return ScoreCDF(std::move(k), std::move(v));
}

ScoreCDF ScoreCDF::smooth(double center, double width) {
    const double lo = center - width / 2, hi = center + width / 2;
    if (!(width > 0.0 && lo >= 0.0 && hi <= 1.0)) throw ConfigError("smooth score support must lie in [0,1]");
    const double offs[5] = {-0.5, -0.25, 0.0, 0.25, 0.5};
    const double mass[5] = {0.0, 0.15, 0.5, 0.85, 1.0};
    std::vector<double> k, v;
    if (lo > 0.0) k.push_back(0.0), v.push_back(0.0);
    for (int i = 0; i < 5; ++i) k.push_back(center + offs[i] * width), v.push_back(mass[i]);
    if (hi < 1.0) k.push_back(1.0), v.push_back(1.0);
    k.front() = 0.0;
    k.back() = 1.0;
    return ScoreCDF(std::move(k), std::move(v));
}

double ScoreCDF::operator()(double tau) const {
    if (tau < 0.0) return 0.0;
    if (tau >= 1.0) return 1.0;
    const auto it = std::upper_bound(knots_.begin(), knots_.end(), tau);
    const std::size_t k = static_cast<std::size_t>(it - knots_.begin());
    const double x0 = knots_[k - 1], x1 = knots_[k];
    return values_[k - 1] + (values_[k] - values_[k - 1]) * (tau - x0) / (x1 - x0);
}

double ScoreCDF::quantile(double u) const {
    if (u <= values_.front()) return 0.0;
    for (std::size_t k = 1; k < knots_.size(); ++k) {
        if (values_[k] >= u) {
            const double f0 = values_[k - 1], f1 = values_[k];
            return knots_[k - 1] + (knots_[k] - knots_[k - 1]) * (u - f0) / (f1 - f0);
        }
    }
    return 1.0;
}

double ScoreCDF::lipschitz() const {
    double r = 0.0;
    for (std::size_t k = 1; k < knots_.size(); ++k)
        r = std::max(r, (values_[k] - values_[k - 1]) / (knots_[k] - knots_[k - 1]));
    return r;
}

double ConformalConfig::resolved_gamma() const {
    return gamma >= 0.0 ? gamma : 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(T, 1)));
}

double ConformalConfig::resolved_eta() const {
    return eta >= 0.0 ? eta
                      : 2.0 * (m + 1) * radius / std::sqrt(static_cast<double>(std::max<std::size_t>(T, 1)));
}

namespace {

const ConformalConfig& validated(const ConformalConfig& c) {
    if (!(c.q > 0.0 && c.q < 1.0)) throw ConfigError("target coverage q must lie in (0,1)");
    if (c.m < 1) throw ConfigError("grid size m must be >= 1");
    return c;
}

}  // namespace

ConformalLearner::ConformalLearner(std::size_t d, ConformalConfig cfg)
    : cfg_(validated(cfg)),
      swap_(ForecastGrid(cfg.m), PinballPGD(cfg.augment ? d + 1 : d, cfg.q, cfg.resolved_eta(), cfg.radius),
            cfg.resolved_gamma(), cfg.augment) {}

void ConformalLearner::update(const Example& x, double score) {
    if (!(score >= 0.0 && score <= 1.0)) throw Error("conformity score must lie in [0,1]");
    swap_.update(x, score);
}

CoverageReport coverage(const Transcript& t) {
    CoverageReport r;
    const int np = t.grid.size();
    r.bucket_n.assign(np, 0);
    r.bucket_coverage.assign(np, 0.0);
    std::size_t ng = 0;
    for (const auto& e : t.entries) ng = std::max(ng, e.x.groups.size());
    r.group_n.assign(ng, 0);
    r.group_coverage.assign(ng, 0.0);
    std::size_t covered = 0;
    for (const auto& e : t.entries) {
        const bool c = e.outcome <= e.forecast;
        covered += c;
        const int p = t.grid.index_of(e.forecast);
        ++r.bucket_n[p];
        r.bucket_coverage[p] += c;
        for (std::size_t g = 0; g < e.x.groups.size(); ++g)
            if (e.x.groups[g]) ++r.group_n[g], r.group_coverage[g] += c;
    }
    if (!t.empty()) r.marginal = static_cast<double>(covered) / static_cast<double>(t.size());
    for (int p = 0; p < np; ++p)
        if (r.bucket_n[p]) r.bucket_coverage[p] /= static_cast<double>(r.bucket_n[p]);
    for (std::size_t g = 0; g < ng; ++g)
        if (r.group_n[g]) r.group_coverage[g] /= static_cast<double>(r.group_n[g]);
    return r;
}

double pinball_contextual_swap_regret(const Transcript& t, const std::vector<ExamplePredictor>& comparators,
                                      double q) {
    return contextual_swap_regret(t, comparators, RegressionLoss::pinball_q(q));
}

}  // namespace omnical
