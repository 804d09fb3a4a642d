#include "omnical/swapcal.hpp"

#include <algorithm>
#include <cmath>

namespace omnical {

OracleBank::OracleBank(ForecastGrid grid, const Oracle& prototype, double gamma) : grid_(grid) {
    oracles_.reserve(grid.size());
    for (int i = 0; i < grid.size(); ++i) oracles_.emplace_back(prototype.clone(), grid, gamma);
    fed_.resize(grid.size());
}

void OracleBank::feed(std::size_t i, std::span<const double> x, double outcome, std::size_t round) {
    oracles_.at(i).update(x, outcome);
    fed_[i].push_back(round);
}

std::size_t OracleBank::fed_total() const {
    std::size_t n = 0;
    for (const auto& f : fed_) n += f.size();
    return n;
}

ChainState build_chain(const OracleBank& bank, std::span<const double> x) {
    const auto n = static_cast<Eigen::Index>(bank.size());
    ChainState c;
    c.Q.resize(n, n);
    std::vector<double> row(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        try {
            bank.oracle(i).distribution_into(x, row);
        } catch (const Error& e) {
            throw Error("oracle " + std::to_string(i) + ": " + e.what());
        }
        for (Eigen::Index j = 0; j < n; ++j) c.Q(i, j) = row[j];
    }
    return c;
}

double stationary_residual(const Eigen::MatrixXd& Q, std::span<const double> a) {
    const auto n = Q.rows();
    const Eigen::Map<const Eigen::VectorXd> av(a.data(), n);
    return (Q.transpose() * av - av).cwiseAbs().maxCoeff();
}

StationaryResult stationary_distribution(const Eigen::MatrixXd& Q) {
    const auto n = Q.rows();
    if (n == 0 || Q.cols() != n) throw Error("malformed chain: matrix must be square and nonempty");
    for (Eigen::Index i = 0; i < n; ++i) {
        if ((Q.row(i).array() < 0.0).any() || !Q.row(i).allFinite())
            throw Error("malformed chain: row " + std::to_string(i) + " has invalid entries");
        if (std::fabs(Q.row(i).sum() - 1.0) > 1e-9)
            throw Error("malformed chain: row " + std::to_string(i) + " does not sum to 1");
    }
    Eigen::MatrixXd M = Q.transpose() - Eigen::MatrixXd::Identity(n, n);
    M.row(n - 1).setOnes();  // normalization replaces one redundant balance equation
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    rhs(n - 1) = 1.0;
    Eigen::VectorXd a = M.partialPivLu().solve(rhs);

    auto normalize = [](Eigen::VectorXd& v) {
        v = v.cwiseMax(0.0);
        const double s = v.sum();
        if (s > 0.0 && std::isfinite(s)) v /= s;
    };
    normalize(a);
    StationaryResult out;
    auto resid = [&](const Eigen::VectorXd& v) { return (Q.transpose() * v - v).cwiseAbs().maxCoeff(); };
    double r = a.allFinite() && a.sum() > 0.0 ? resid(a) : INFINITY;
    if (!(r <= 1e-10)) {
        out.used_fallback = true;
        if (!(a.allFinite() && a.sum() > 0.0)) a = Eigen::VectorXd::Constant(n, 1.0 / n);
        const Eigen::MatrixXd Qt = Q.transpose();
        long it = 0;
        for (; it < 1000000 && !(r <= 1e-10); ++it) {
            a = Qt * a;
            a /= a.sum();
            r = resid(a);
        }
        if (!(r <= 1e-10)) throw NumericalError("stationary distribution: power iteration did not converge");
    }
    out.a.assign(a.data(), a.data() + n);
    out.residual = r;
    return out;
}

ContextualSwapForecaster::ContextualSwapForecaster(ForecastGrid grid, const Oracle& prototype, double gamma,
                                                   bool augment)
    : bank_(grid, prototype, gamma), augment_(augment) {}

std::vector<double> ContextualSwapForecaster::features(const Example& x) const {
    if (augment_) return augment(x.x);
    return x.x;
}

ForecastDraw ContextualSwapForecaster::forecast(const Example& x, RandomSource& rng) {
    if (awaiting_) throw ProtocolError("forecast requested twice without an outcome");
    pending_x_ = features(x);
    chain_ = build_chain(bank_, pending_x_);
    auto st = stationary_distribution(chain_.Q);
    chain_.a = std::move(st.a);
    chain_.residual = st.residual;
    chain_.used_fallback = st.used_fallback;
    ForecastDraw d;
    d.i = rng.categorical(chain_.a);
    const Eigen::VectorXd row = chain_.Q.row(d.i).transpose();
    d.j = rng.categorical(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
    d.forecast = bank_.grid().value(d.j);
    pending_ = d;
    awaiting_ = true;
    return d;
}

void ContextualSwapForecaster::update(const Example& x, double outcome) {
    if (!awaiting_) throw ProtocolError("update called before forecast");
    if (features(x) != pending_x_) throw ProtocolError("update features differ from the forecast round");
    bank_.feed(static_cast<std::size_t>(pending_.i), pending_x_, outcome, rounds_);
    awaiting_ = false;
    ++rounds_;
}

double contextual_swap_regret(const Transcript& t, const std::vector<ExamplePredictor>& comparators,
                              RegressionLoss loss) {
    if (comparators.size() != static_cast<std::size_t>(t.grid.size()))
        throw Error("contextual_swap_regret needs one comparator per grid value");
    CompensatedSum s;
    for (const auto& e : t.entries) {
        const int p = t.grid.index_of(e.forecast);
        s.add(loss(e.forecast, e.outcome));
        s.add(-loss(comparators[p](e.x), e.outcome));
    }
    return s.value();
}

double sup_contextual_swap_regret(const Transcript& t, const FunctionClass& cls, RegressionLoss loss) {
    const int n = t.grid.size();
    std::vector<std::vector<const TranscriptEntry*>> buckets(n);
    for (const auto& e : t.entries) buckets[t.grid.index_of(e.forecast)].push_back(&e);
    CompensatedSum total;
    if (const auto* fc = std::get_if<FiniteClass>(&cls)) {
        for (int p = 0; p < n; ++p) {
            if (buckets[p].empty()) continue;
            CompensatedSum own;
            for (const auto* e : buckets[p]) own.add(loss(e->forecast, e->outcome));
            double best = INFINITY;
            for (const auto& f : fc->predictors) {
                CompensatedSum l;
                for (const auto* e : buckets[p]) l.add(loss(f.fn(e->x), e->outcome));
                best = std::min(best, l.value());
            }
            total.add(own.value() - best);
        }
        return total.value();
    }
    const auto& lb = std::get<LinearBall>(cls);
    if (loss.kind != RegressionLoss::Kind::Squared)
        throw UnsupportedError("sup over a linear ball is supported for squared loss only; use a finite class");
    for (int p = 0; p < n; ++p) {
        if (buckets[p].empty()) continue;
        std::vector<RegretRound> h;
        h.reserve(buckets[p].size());
        CompensatedSum own;
        for (const auto* e : buckets[p]) {
            if (e->x.x.size() != lb.d) throw Error("feature dimension does not match the linear class");
            h.push_back({augment(e->x.x), e->outcome, e->forecast});
            own.add(loss(e->forecast, e->outcome));
        }
        const BallFit fit = best_in_ball(h, lb.B, loss);
        total.add(own.value() - fit.loss);
    }
    return total.value();
}

}  // namespace omnical
