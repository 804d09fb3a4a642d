#include "omnical/amf.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace omnical {

AMFState::AMFState(std::size_t d, double eta, double C) : cum_(d), eta_(eta), C_(C) {
    if (d == 0) throw Error("AMF state needs at least one coordinate");
    if (!(eta >= 0.0) || !std::isfinite(eta)) throw Error("AMF learning rate must be finite and nonnegative");
}

std::vector<double> AMFState::cum_loss() const {
    std::vector<double> out(cum_.size());
    for (std::size_t j = 0; j < cum_.size(); ++j) out[j] = cum_[j].value();
    return out;
}

void AMFState::accumulate(std::span<const double> losses) {
    if (losses.size() != cum_.size()) throw Error("AMF loss vector has the wrong length");
    for (std::size_t j = 0; j < losses.size(); ++j) {
        if (!(std::fabs(losses[j]) <= C_ * (1.0 + 1e-12) + 1e-15))
            throw NumericalError("AMF coordinate " + std::to_string(j) + " loss " + format_double(losses[j]) +
                                 " exceeds the bound " + format_double(C_));
        cum_[j].add(losses[j]);
    }
}

std::vector<double> AMFState::chi_weights() const { return omnical::chi_weights(cum_loss(), eta_); }

std::vector<double> chi_weights(std::span<const double> cum_loss, double eta) {
    std::vector<double> w(cum_loss.size());
    if (w.empty()) return w;
    double mx = -INFINITY;
    for (double c : cum_loss) mx = std::max(mx, eta * c);
    CompensatedSum z;
    for (std::size_t j = 0; j < w.size(); ++j) {
        w[j] = std::exp(eta * cum_loss[j] - mx);
        z.add(w[j]);
    }
    const double zs = z.value();
    for (auto& v : w) v /= zs;
    return w;
}

double default_eta(double C, std::size_t d, std::size_t T) {
    if (!(C > 0.0) || T == 0) throw Error("learning rate needs C > 0 and T >= 1");
    return std::sqrt(std::log(static_cast<double>(d)) / static_cast<double>(T)) / (2.0 * C);
}

double mixed_value(std::span<const double> probs, std::span<const double> L0, std::span<const double> L1) {
    CompensatedSum a, b;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] == 0.0) continue;
        a.add(probs[i] * L0[i]);
        b.add(probs[i] * L1[i]);
    }
    return std::max(a.value(), b.value());
}

namespace {

void check_shapes(std::span<const double> L0, std::span<const double> L1) {
    if (L0.empty() || L0.size() != L1.size()) throw Error("minmax loss vectors must be nonempty and of equal length");
}

double dual_value(std::span<const double> L0, std::span<const double> L1, double lam) {
    double g = INFINITY;
    for (std::size_t i = 0; i < L0.size(); ++i) g = std::min(g, lam * L0[i] + (1.0 - lam) * L1[i]);
    return g;
}

MixedStrategy best_pure(std::span<const double> L0, std::span<const double> L1) {
    MixedStrategy s;
    s.probs.assign(L0.size(), 0.0);
    std::size_t best = 0;
    double bv = INFINITY;
    for (std::size_t i = 0; i < L0.size(); ++i) {
        const double v = std::max(L0[i], L1[i]);
        if (v < bv) bv = v, best = i;
    }
    s.probs[best] = 1.0;
    s.value = bv;
    s.lambda = L0[best] >= L1[best] ? 1.0 : 0.0;
    return s;
}

}  // namespace

MixedStrategy solve_minmax(std::span<const double> L0, std::span<const double> L1) {
    check_shapes(L0, L1);
    const std::size_t n = L0.size();
    double lo = 0.0, hi = 1.0;
    while (hi - lo > 1e-10) {
        const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
        if (dual_value(L0, L1, m1) < dual_value(L0, L1, m2))
            lo = m1;
        else
            hi = m2;
    }
    double lam = 0.5 * (lo + hi);
    double g = dual_value(L0, L1, lam);
    for (double e : {0.0, 1.0}) {
        const double ge = dual_value(L0, L1, e);
        if (ge > g) g = ge, lam = e;
    }
    double scale = 1.0;
    for (std::size_t i = 0; i < n; ++i) scale = std::max({scale, std::fabs(L0[i]), std::fabs(L1[i])});
    const double tol = 1e-9 * scale;
    // Among minimizers of the dual at lambda*, the extreme differences D = L0 - L1 bracket the equalizer.
    std::size_t a = n, b = n;
    for (std::size_t i = 0; i < n; ++i) {
        if (lam * L0[i] + (1.0 - lam) * L1[i] > g + tol) continue;
        const double d = L0[i] - L1[i];
        if (a == n || d > L0[a] - L1[a]) a = i;
        if (b == n || d < L0[b] - L1[b]) b = i;
    }
    MixedStrategy s;
    s.probs.assign(n, 0.0);
    s.lambda = lam;
    const double da = L0[a] - L1[a], db = L0[b] - L1[b];
    if (da >= 0.0 && db <= 0.0 && da > db) {
        const double w = -db / (da - db);
        s.probs[a] += w;
        s.probs[b] += 1.0 - w;
    } else if (db >= 0.0 && da != db) {
        s.probs[b] = 1.0;
    } else if (da <= 0.0 && da != db) {
        s.probs[a] = 1.0;
    } else {
        // All active differences coincide: cheapest pure active strategy, lowest index.
        std::size_t best = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (lam * L0[i] + (1.0 - lam) * L1[i] > g + tol) continue;
            if (best == n || std::max(L0[i], L1[i]) < std::max(L0[best], L1[best])) best = i;
        }
        s.probs[best] = 1.0;
    }
    s.value = mixed_value(s.probs, L0, L1);
    MixedStrategy pure = best_pure(L0, L1);
    if (pure.value < s.value) {
        pure.lambda = lam;
        return pure;
    }
    return s;
}

MixedStrategy solve_minmax_brute(std::span<const double> L0, std::span<const double> L1) {
    check_shapes(L0, L1);
    MixedStrategy best = best_pure(L0, L1);
    const std::size_t n = L0.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double di = L0[i] - L1[i];
        if (!(di > 0.0)) continue;
        for (std::size_t j = 0; j < n; ++j) {
            const double dj = L0[j] - L1[j];
            if (!(dj < 0.0)) continue;
            const double w = -dj / (di - dj);
            const double v = std::max(w * L0[i] + (1.0 - w) * L0[j], w * L1[i] + (1.0 - w) * L1[j]);
            if (v < best.value) {
                best.probs.assign(n, 0.0);
                best.probs[i] = w;
                best.probs[j] = 1.0 - w;
                best.value = v;
            }
        }
    }
    return best;
}

double minmax_dual_grid(std::span<const double> L0, std::span<const double> L1, int points) {
    check_shapes(L0, L1);
    if (points < 2) throw Error("dual grid needs at least two points");
    double best = -INFINITY;
    for (int k = 0; k < points; ++k) best = std::max(best, dual_value(L0, L1, static_cast<double>(k) / (points - 1)));
    return best;
}

// ---------------------------------------------------------------------------

namespace {

double eval_predictor(const Predictor& p, const Example& x, std::size_t round) {
    double v;
    try {
        v = p.fn(x);
    } catch (const std::exception& e) {
        throw Error("predictor " + p.name + " failed at round " + std::to_string(round) + ": " + e.what());
    }
    if (!std::isfinite(v))
        throw Error("predictor " + p.name + " returned a non-finite value at round " + std::to_string(round));
    return v;
}

}  // namespace

AMFMulticalForecaster::AMFMulticalForecaster(ForecastGrid grid, FiniteClass cls, std::size_t T, double eta)
    : grid_(grid),
      cls_(std::move(cls)),
      amf_(cls_.predictors.size(), 1.0, 1.0),
      n_(grid.size(), 0),
      resid_(grid.size(), std::vector<CompensatedSum>(cls_.predictors.size())),
      telescoped_(cls_.predictors.size()),
      fx_(cls_.predictors.size()) {
    const double C = std::max(cls_.B, std::sqrt(cls_.B));
    const double e = eta < 0.0 ? default_eta(C, cls_.predictors.size(), T) : eta;
    amf_ = AMFState(cls_.predictors.size(), e, C);
}

double AMFMulticalForecaster::K(int p, std::size_t f) const {
    return n_[p] == 0 ? 0.0 : resid_[p][f].value() / static_cast<double>(n_[p]);
}

double AMFMulticalForecaster::unnormalized_K2(std::size_t f) const {
    CompensatedSum s;
    for (int p = 0; p < grid_.size(); ++p) {
        if (n_[p] == 0) continue;
        const double r = resid_[p][f].value();
        s.add(r * r / static_cast<double>(n_[p]));
    }
    return s.value();
}

double AMFMulticalForecaster::value_bound() const {
    // |f| |z - round(z)| |K| <= sqrt(B) * (1/(2m)) * sqrt(B); this is <= sqrt(B)/m whenever B <= 4.
    return std::max(std::sqrt(cls_.B), cls_.B / 2.0) / grid_.m();
}

void AMFMulticalForecaster::eval_features(const Example& x) {
    for (std::size_t f = 0; f < fx_.size(); ++f) {
        const double v = eval_predictor(cls_.predictors[f], x, rounds_);
        if (v * v > cls_.B * (1.0 + 1e-12))
            throw Error("predictor " + cls_.predictors[f].name + " exceeds the value bound at round " +
                        std::to_string(rounds_));
        fx_[f] = v;
    }
}

double AMFMulticalForecaster::forecast(const Example& x, RandomSource& rng) {
    if (awaiting_) throw ProtocolError("forecast requested twice without an outcome");
    eval_features(x);
    const auto chi = amf_.chi_weights();
    const int n = grid_.size();
    round_.L0.assign(n, 0.0);
    round_.L1.assign(n, 0.0);
    for (int p = 0; p < n; ++p) {
        if (n_[p] == 0) continue;
        double w = 0.0;
        for (std::size_t f = 0; f < fx_.size(); ++f) w += chi[f] * fx_[f] * K(p, f);
        const double th = grid_.value(p);
        round_.L0[p] = (0.0 - th) * w;
        round_.L1[p] = (1.0 - th) * w;
    }
    round_.strategy = solve_minmax(round_.L0, round_.L1);
    worst_value_ = std::max(worst_value_, round_.strategy.value);
    round_.theta_index = rng.categorical(round_.strategy.probs);
    pending_x_ = x.x;
    awaiting_ = true;
    return grid_.value(round_.theta_index);
}

void AMFMulticalForecaster::update(const Example& x, double y) {
    if (!awaiting_) throw ProtocolError("update called before forecast");
    if (x.x != pending_x_) throw ProtocolError("update features differ from the forecast round");
    if (y != 0.0 && y != 1.0) throw Error("mean-track outcome must be 0 or 1");
    const int p = round_.theta_index;
    const double th = grid_.value(p);
    const std::size_t nf = fx_.size();
    std::vector<double> losses(nf);
    for (std::size_t f = 0; f < nf; ++f) losses[f] = multical_coordinate_loss(fx_[f], th, y, K(p, f));
    amf_.accumulate(losses);
    const double np = static_cast<double>(n_[p]);
    for (std::size_t f = 0; f < nf; ++f) {
        const double r = fx_[f] * (y - th);
        const double s_old = resid_[p][f].value();
        const double before = n_[p] == 0 ? 0.0 : s_old * s_old / np;
        resid_[p][f].add(r);
        const double s_new = resid_[p][f].value();
        const double inc = s_new * s_new / (np + 1.0) - before;
        telescoped_[f].add(inc);
        const double bound = n_[p] == 0 ? cls_.B : cls_.B / np + 2.0 * losses[f];
        worst_excess_ = std::max(worst_excess_, inc - bound);
    }
    ++n_[p];
    awaiting_ = false;
    ++rounds_;
}

// ---------------------------------------------------------------------------

VForecaster::VForecaster(ForecastGrid grid, int mprime, FiniteClass cls, std::size_t T, double eta)
    : grid_(grid), mprime_(mprime), cls_(std::move(cls)) {
    if (mprime <= grid.m()) throw ConfigError("the loss grid m' must exceed the forecast grid m");
    if (cls_.predictors.empty()) throw ConfigError("V-forecaster needs a nonempty class");
    const std::size_t cells = cls_.predictors.size() * 2 * (mprime + 1);
    A_.resize(cells);
    S_.resize(cells);
    n_ge_.resize(mprime + 1);
    for (int v = 0; v <= mprime; ++v) {
        int c = 0;
        for (int a = 0; a <= grid.m(); ++a)
            if (static_cast<long>(a) * mprime >= static_cast<long>(v) * grid.m()) ++c;
        n_ge_[v] = c;
    }
    bits_.resize(cls_.predictors.size());
    eta_ = eta < 0.0 ? default_eta(C(), coordinate_count(), T) : eta;
}

std::size_t VForecaster::coordinate_count() const {
    return cls_.predictors.size() * static_cast<std::size_t>(grid_.size()) * 2 * (mprime_ + 1);
}

double VForecaster::cum_loss(std::size_t f, int a, int b, int v) const {
    const std::size_t k = idx(f, b, v);
    const double s = static_cast<long>(a) * mprime_ >= static_cast<long>(v) * grid_.m() ? 1.0 : -1.0;
    return A_[k].value() - s * S_[k].value();
}

double VForecaster::max_coordinate_regret() const {
    double best = -INFINITY;
    const int na = grid_.size();
    for (std::size_t f = 0; f < cls_.predictors.size(); ++f)
        for (int b = 0; b < 2; ++b)
            for (int v = 0; v <= mprime_; ++v) {
                const std::size_t k = idx(f, b, v);
                if (n_ge(v) > 0) best = std::max(best, A_[k].value() - S_[k].value());
                if (na - n_ge(v) > 0) best = std::max(best, A_[k].value() + S_[k].value());
            }
    return best;
}

double VForecaster::forecast(const Example& x, RandomSource& rng) {
    if (awaiting_) throw ProtocolError("forecast requested twice without an outcome");
    const std::size_t nf = cls_.predictors.size();
    for (std::size_t f = 0; f < nf; ++f) {
        const double v = eval_predictor(cls_.predictors[f], x, rounds_);
        if (v != 0.0 && v != 1.0)
            throw Error("predictor " + cls_.predictors[f].name + " is not boolean at round " + std::to_string(rounds_));
        bits_[f] = static_cast<int>(v);
    }
    const int na = grid_.size();
    const int nv = mprime_ + 1;
    // Global max exponent over all populated coordinate groups.
    double mx = -INFINITY;
    for (std::size_t k = 0; k < A_.size(); ++k) {
        const int v = static_cast<int>(k % nv);
        const double a = A_[k].value(), s = S_[k].value();
        if (n_ge(v) > 0) mx = std::max(mx, eta_ * (a - s));
        if (na - n_ge(v) > 0) mx = std::max(mx, eta_ * (a + s));
    }
    CompensatedSum z;
    std::vector<double> ge(A_.size()), lt(A_.size());
    for (std::size_t k = 0; k < A_.size(); ++k) {
        const int v = static_cast<int>(k % nv);
        const double a = A_[k].value(), s = S_[k].value();
        ge[k] = n_ge(v) > 0 ? n_ge(v) * std::exp(eta_ * (a - s) - mx) : 0.0;
        lt[k] = na - n_ge(v) > 0 ? (na - n_ge(v)) * std::exp(eta_ * (a + s) - mx) : 0.0;
        z.add(ge[k]);
        z.add(lt[k]);
    }
    const double Z = z.value();
    // W_v: total weight on active coordinates at v; U_v: the same weights signed by sign(a - v).
    std::vector<double> W(nv, 0.0), U(nv, 0.0);
    for (std::size_t f = 0; f < nf; ++f)
        for (int v = 0; v < nv; ++v) {
            const std::size_t k = idx(f, bits_[f], v);
            W[v] += (ge[k] + lt[k]) / Z;
            U[v] += (ge[k] - lt[k]) / Z;
        }
    round_.L0.assign(na, 0.0);
    round_.L1.assign(na, 0.0);
    for (int p = 0; p < na; ++p) {
        double l0 = 0.0, l1 = 0.0;
        for (int v = 0; v < nv; ++v) {
            const double s = static_cast<long>(p) * mprime_ >= static_cast<long>(v) * grid_.m() ? 1.0 : -1.0;
            const double c = W[v] * s - U[v];
            const double vv = static_cast<double>(v) / mprime_;
            l0 += vv * c;
            l1 += (vv - 1.0) * c;
        }
        round_.L0[p] = l0;
        round_.L1[p] = l1;
    }
    round_.strategy = solve_minmax(round_.L0, round_.L1);
    worst_value_ = std::max(worst_value_, round_.strategy.value);
    round_.theta_index = rng.categorical(round_.strategy.probs);
    pending_x_ = x.x;
    awaiting_ = true;
    return grid_.value(round_.theta_index);
}

void VForecaster::update(const Example& x, double y) {
    if (!awaiting_) throw ProtocolError("update called before forecast");
    if (x.x != pending_x_) throw ProtocolError("update features differ from the forecast round");
    if (y != 0.0 && y != 1.0) throw Error("mean-track outcome must be 0 or 1");
    const int p = round_.theta_index;
    for (std::size_t f = 0; f < cls_.predictors.size(); ++f)
        for (int v = 0; v <= mprime_; ++v) {
            const std::size_t k = idx(f, bits_[f], v);
            const double s = static_cast<long>(p) * mprime_ >= static_cast<long>(v) * grid_.m() ? 1.0 : -1.0;
            const double r = static_cast<double>(v) / mprime_ - y;
            A_[k].add(r * s);
            S_[k].add(r);
        }
    awaiting_ = false;
    ++rounds_;
}

}  // namespace omnical
