#include "omnical/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "omnical/losses.hpp"

namespace omnical {

namespace {

Eigen::Map<const Eigen::VectorXd> as_vec(std::span<const double> x) {
    return Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
}

void check_dim(std::span<const double> x, std::size_t d, const char* who) {
    if (x.size() != d)
        throw Error(std::string(who) + ": feature dimension " + std::to_string(x.size()) + " != " + std::to_string(d));
    for (double v : x)
        if (!std::isfinite(v)) throw Error(std::string(who) + ": non-finite feature");
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

double parse_number(const std::string& spec, const std::string& text) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (text.empty() || used != text.size() || !std::isfinite(v))
        throw ConfigError("bad numeric field '" + text + "' in oracle spec '" + spec + "'");
    return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Azoury-Warmuth

AzouryWarmuth::AzouryWarmuth(std::size_t d, double eps)
    : d_(d),
      eps_(eps),
      inv_cov_(Eigen::MatrixXd::Identity(d, d) / eps),
      cov_(Eigen::MatrixXd::Identity(d, d) * eps),
      b_(Eigen::VectorXd::Zero(d)) {
    if (!(eps > 0.0)) throw ConfigError("Azoury-Warmuth ridge constant must be positive");
}

double AzouryWarmuth::predict(std::span<const double> x) const {
    check_dim(x, d_, "aw_predict");
    const auto xv = as_vec(x);
    const Eigen::VectorXd mx = inv_cov_ * xv;
    const double denom = 1.0 + xv.dot(mx);
    return b_.dot(mx) / denom;
}

void AzouryWarmuth::update(std::span<const double> x, double y) {
    check_dim(x, d_, "aw_update");
    ++rounds_;
    const auto xv = as_vec(x);
    if (xv.squaredNorm() == 0.0) return;
    cov_.noalias() += xv * xv.transpose();
    b_.noalias() += y * xv;
    const Eigen::VectorXd mx = inv_cov_ * xv;
    const double denom = 1.0 + xv.dot(mx);
    if (!(denom > 1e-14)) {
        refactor();
        since_rebuild_ = 0;
        return;
    }
    inv_cov_.noalias() -= (mx * mx.transpose()) / denom;
    if (++since_rebuild_ >= kRebuildEvery) {
        refactor();
        since_rebuild_ = 0;
    }
}

void AzouryWarmuth::refactor() {
    Eigen::LLT<Eigen::MatrixXd> llt(cov_);
    if (llt.info() != Eigen::Success)
        throw NumericalError("aw: accumulated covariance is not positive definite");
    inv_cov_ = llt.solve(Eigen::MatrixXd::Identity(d_, d_));
    inv_cov_ = 0.5 * (inv_cov_ + inv_cov_.transpose()).eval();
}

bool AzouryWarmuth::inv_cov_positive_definite() const {
    Eigen::LLT<Eigen::MatrixXd> llt(inv_cov_);
    return llt.info() == Eigen::Success && inv_cov_.isApprox(inv_cov_.transpose(), 1e-12);
}

// ---------------------------------------------------------------------------
// Gradient oracles

OgdSquared::OgdSquared(std::size_t d, double eta) : theta_(d, 0.0), eta_(eta) {
    if (!(eta >= 0.0)) throw ConfigError("ogd-squared step size must be >= 0");
}

double OgdSquared::predict(std::span<const double> x) const {
    check_dim(x, theta_.size(), "ogd_predict");
    return dot(theta_, x);
}

void OgdSquared::update(std::span<const double> x, double y) {
    check_dim(x, theta_.size(), "ogd_update");
    const double g = 2.0 * (dot(theta_, x) - y);
    for (std::size_t k = 0; k < theta_.size(); ++k) theta_[k] -= eta_ * g * x[k];
    ++rounds_;
}

std::string OgdSquared::name() const { return "ogd-squared:" + format_double(eta_); }

void project_to_ball(std::vector<double>& theta, double radius) {
    double n2 = 0.0;
    for (double v : theta) n2 += v * v;
    // Slack of a few ulps keeps the map idempotent after rescaling.
    const double n = std::sqrt(n2);
    if (n <= radius * (1.0 + 4e-16)) return;
    const double s = radius / n;
    for (double& v : theta) v *= s;
}

PinballPGD::PinballPGD(std::size_t d, double q, double eta, double radius)
    : theta_(d, 0.0), q_(q), eta_(eta), radius_(radius) {
    if (!(q > 0.0 && q < 1.0)) throw ConfigError("pgd-pinball quantile must lie in (0,1)");
    if (!(eta >= 0.0)) throw ConfigError("pgd-pinball step size must be >= 0");
    if (!(radius >= 0.0)) throw ConfigError("pgd-pinball radius must be >= 0");
}

double PinballPGD::predict(std::span<const double> x) const {
    check_dim(x, theta_.size(), "pgd_predict");
    return dot(theta_, x);
}

void PinballPGD::update(std::span<const double> x, double s) {
    check_dim(x, theta_.size(), "pgd_step");
    // Subgradient of PB_q(theta . x, s): (1-q) x when s <= theta . x, else -q x.
    const double coef = s <= dot(theta_, x) ? (1.0 - q_) : -q_;
    for (std::size_t k = 0; k < theta_.size(); ++k) theta_[k] -= eta_ * coef * x[k];
    project_to_ball(theta_, radius_);
    ++rounds_;
}

void PinballPGD::set_theta(std::vector<double> theta) {
    if (theta.size() != theta_.size()) throw Error("pgd: parameter dimension mismatch");
    theta_ = std::move(theta);
    project_to_ball(theta_, radius_);
}

std::string PinballPGD::name() const {
    return "pgd-pinball:" + format_double(q_) + ":" + format_double(eta_) + ":" + format_double(radius_);
}

std::unique_ptr<Oracle> make_oracle(const std::string& spec, std::size_t d) {
    const auto parts = split(spec, ':');
    if (parts[0] == "aw" && parts.size() == 1) return std::make_unique<AzouryWarmuth>(d, 1.0);
    if (parts[0] == "ogd-squared" && parts.size() == 2)
        return std::make_unique<OgdSquared>(d, parse_number(spec, parts[1]));
    if (parts[0] == "pgd-pinball" && parts.size() == 4)
        return std::make_unique<PinballPGD>(d, parse_number(spec, parts[1]), parse_number(spec, parts[2]),
                                            parse_number(spec, parts[3]));
    throw ConfigError("unknown oracle spec '" + spec + "'");
}

// ---------------------------------------------------------------------------
// Wrapper

WrappedOracle::WrappedOracle(std::unique_ptr<Oracle> inner, ForecastGrid grid, double gamma)
    : inner_(std::move(inner)), grid_(grid), gamma_(gamma) {
    if (!inner_) throw Error("wrapped oracle needs an inner oracle");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("mixing probability must lie in [0,1]");
}

WrappedOracle::WrappedOracle(const WrappedOracle& o) : inner_(o.inner_->clone()), grid_(o.grid_), gamma_(o.gamma_) {}

WrappedOracle& WrappedOracle::operator=(const WrappedOracle& o) {
    if (this != &o) {
        inner_ = o.inner_->clone();
        grid_ = o.grid_;
        gamma_ = o.gamma_;
    }
    return *this;
}

int WrappedOracle::rounded_index(std::span<const double> x) const {
    const double pred = inner_->predict(x);
    return grid_.round_index(std::clamp(pred, 0.0, 1.0));
}

void WrappedOracle::distribution_into(std::span<const double> x, std::span<double> out) const {
    const int n = grid_.size();
    const double floor_mass = gamma_ / n;
    for (int j = 0; j < n; ++j) out[j] = floor_mass;
    out[rounded_index(x)] += 1.0 - gamma_;
}

std::vector<double> WrappedOracle::distribution(std::span<const double> x) const {
    std::vector<double> q(grid_.size());
    distribution_into(x, q);
    return q;
}

std::vector<double> wrapped_distribution(const WrappedOracle& w, std::span<const double> x) {
    return w.distribution(x);
}

// ---------------------------------------------------------------------------
// Regret accounting

double RegressionLoss::operator()(double prediction, double outcome) const {
    if (kind == Kind::Squared) return (prediction - outcome) * (prediction - outcome);
    return pinball(q, prediction, outcome);
}

double realized_regret(std::span<const RegretRound> history,
                       const std::function<double(std::span<const double>)>& comparator, RegressionLoss loss) {
    CompensatedSum s;
    for (const auto& r : history) {
        s.add(loss(r.prediction, r.outcome));
        s.add(-loss(comparator(r.x), r.outcome));
    }
    return s.value();
}

namespace {

struct Design {
    Eigen::MatrixXd X;  // T x d
    Eigen::VectorXd y;
};

Design design_of(std::span<const RegretRound> history) {
    if (history.empty()) throw Error("best_in_ball: history must be nonempty");
    const std::size_t d = history.front().x.size();
    Design ds{Eigen::MatrixXd(history.size(), d), Eigen::VectorXd(history.size())};
    for (std::size_t t = 0; t < history.size(); ++t) {
        if (history[t].x.size() != d) throw Error("best_in_ball: inconsistent feature dimension");
        for (std::size_t k = 0; k < d; ++k) ds.X(t, k) = history[t].x[k];
        ds.y(t) = history[t].outcome;
    }
    return ds;
}

double cumulative_loss(const Design& ds, const Eigen::VectorXd& theta, RegressionLoss loss) {
    const Eigen::VectorXd pred = ds.X * theta;
    CompensatedSum s;
    for (Eigen::Index t = 0; t < pred.size(); ++t) s.add(loss(pred(t), ds.y(t)));
    return s.value();
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

BallFit squared_ridge(const Design& ds, double B) {
    const Eigen::Index d = ds.X.cols();
    if (B <= 0.0) {
        Eigen::VectorXd z = Eigen::VectorXd::Zero(d);
        const double l = cumulative_loss(ds, z, RegressionLoss::squared());
        return {to_std(z), l, l};
    }
    const Eigen::MatrixXd G = ds.X.transpose() * ds.X;
    const Eigen::VectorXd c = ds.X.transpose() * ds.y;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0);
    const Eigen::VectorXd w = es.eigenvectors().transpose() * c;
    const double lam_max = lam.size() ? lam.maxCoeff() : 0.0;
    const double zero_tol = 1e-12 * std::max(1.0, lam_max);
    auto theta_at = [&](double mu) {
        Eigen::VectorXd coef(d);
        for (Eigen::Index k = 0; k < d; ++k) {
            const double den = lam(k) + mu;
            coef(k) = den > zero_tol ? w(k) / den : 0.0;  // minimum-norm solution on the null space
        }
        return Eigen::VectorXd(es.eigenvectors() * coef);
    };
    Eigen::VectorXd theta = theta_at(0.0);
    if (theta.squaredNorm() > B) {
        double lo = 0.0, hi = std::max(1.0, c.norm() / std::sqrt(B));
        while (theta_at(hi).squaredNorm() > B) hi *= 2.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (theta_at(mid).squaredNorm() > B)
                lo = mid;
            else
                hi = mid;
            if (hi - lo <= 1e-15 * hi) break;
        }
        theta = theta_at(hi);
        if (std::fabs(theta.squaredNorm() - B) > 1e-8 * std::max(1.0, B)) {
            theta *= std::sqrt(B) / theta.norm();
        }
    }
    const double l = cumulative_loss(ds, theta, RegressionLoss::squared());
    return {to_std(theta), l, l};
}

void project(Eigen::VectorXd& v, double radius) {
    const double n = v.norm();
    if (n > radius) v *= radius / n;
}

// Smoothed pinball: max over alpha in [q-1, q] of alpha r - mu alpha^2 / 2.
BallFit pinball_ball(const Design& ds, double B, double q) {
    const Eigen::Index d = ds.X.cols();
    const RegressionLoss loss = RegressionLoss::pinball_q(q);
    const double R = std::sqrt(std::max(B, 0.0));
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(d);
    if (R == 0.0) {
        const double l = cumulative_loss(ds, theta, loss);
        return {to_std(theta), l, l};
    }
    const Eigen::MatrixXd G = ds.X.transpose() * ds.X;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G, Eigen::EigenvaluesOnly);
    const double lam_max = std::max(es.eigenvalues().maxCoeff(), 1e-300);
    const double T = static_cast<double>(ds.y.size());
    const double qq = std::max(q * q, (1.0 - q) * (1.0 - q));

    auto alphas = [&](const Eigen::VectorXd& th, double mu) {
        Eigen::VectorXd a = (ds.y - ds.X * th) / mu;
        return Eigen::VectorXd(a.cwiseMax(q - 1.0).cwiseMin(q));
    };
    auto dual_value = [&](const Eigen::VectorXd& a) { return a.dot(ds.y) - R * (ds.X.transpose() * a).norm(); };

    double best_primal = cumulative_loss(ds, theta, loss);
    Eigen::VectorXd best_theta = theta;
    double best_dual = -std::numeric_limits<double>::infinity();
    long total_iters = 0;
    constexpr long kMaxIters = 1000000;

    double mu = 1.0;
    for (int level = 0; level < 40; ++level) {
        const double L = lam_max / mu;
        Eigen::VectorXd yk = theta, prev = theta;
        double tk = 1.0;
        double f_prev = std::numeric_limits<double>::infinity();
        const double level_tol = std::max(1e-9 * (1.0 + best_primal), mu * T * qq * 1e-3);
        for (int it = 0; it < 20000 && total_iters < kMaxIters; ++it, ++total_iters) {
            const Eigen::VectorXd a = alphas(yk, mu);
            const Eigen::VectorXd grad = -(ds.X.transpose() * a);
            Eigen::VectorXd next = yk - grad / L;
            project(next, R);
            const Eigen::VectorXd an = alphas(next, mu);
            const Eigen::VectorXd rn = ds.y - ds.X * next;
            double f = 0.0;
            for (Eigen::Index t = 0; t < rn.size(); ++t) f += an(t) * rn(t) - 0.5 * mu * an(t) * an(t);
            const Eigen::VectorXd gn = -(ds.X.transpose() * an);
            const double fw_gap = gn.dot(next) + R * gn.norm();
            if (f > f_prev) {  // adaptive restart
                tk = 1.0;
                yk = theta;
                f_prev = std::numeric_limits<double>::infinity();
                continue;
            }
            prev = theta;
            theta = next;
            f_prev = f;
            if (fw_gap <= level_tol) break;
            const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
            yk = theta + ((tk - 1.0) / tn) * (theta - prev);
            tk = tn;
        }
        const double primal = cumulative_loss(ds, theta, loss);
        if (primal < best_primal) {
            best_primal = primal;
            best_theta = theta;
        }
        best_dual = std::max(best_dual, dual_value(alphas(theta, mu)));
        if (best_primal - best_dual <= 1e-6 * (1.0 + std::fabs(best_primal))) break;
        if (total_iters >= kMaxIters) break;
        mu *= 0.25;
    }
    if (best_primal - best_dual > 1e-3 * (1.0 + std::fabs(best_primal)))
        throw NumericalError("best_in_ball (pinball) did not converge: gap " + format_double(best_primal - best_dual));
    return {to_std(best_theta), best_primal, std::min(best_dual, best_primal)};
}

}  // namespace

BallFit best_in_ball(std::span<const RegretRound> history, double B, RegressionLoss loss) {
    const Design ds = design_of(history);
    if (loss.kind == RegressionLoss::Kind::Squared) return squared_ridge(ds, B);
    return pinball_ball(ds, B, loss.q);
}

BallFit best_in_ball_squared_pgd(std::span<const RegretRound> history, double B) {
    const Design ds = design_of(history);
    const Eigen::Index d = ds.X.cols();
    const double R = std::sqrt(std::max(B, 0.0));
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(d);
    const Eigen::MatrixXd G = ds.X.transpose() * ds.X;
    const Eigen::VectorXd c = ds.X.transpose() * ds.y;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G, Eigen::EigenvaluesOnly);
    const double L = 2.0 * std::max(es.eigenvalues().maxCoeff(), 1e-300);
    for (long it = 0; it < 1000000; ++it) {
        const Eigen::VectorXd grad = 2.0 * (G * theta - c);
        Eigen::VectorXd next = theta - grad / L;
        project(next, R);
        const double step = (next - theta).norm() * L;  // gradient-mapping norm
        theta = next;
        if (step <= 1e-8) {
            const double l = cumulative_loss(ds, theta, RegressionLoss::squared());
            return {to_std(theta), l, l};
        }
    }
    throw NumericalError("best_in_ball (squared, PGD) did not converge in 1e6 iterations");
}

}  // namespace omnical
