#include "omnical/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>

namespace omnical {

namespace {

std::string format_vector(const Eigen::VectorXd& v) {
    std::ostringstream os;
    os << '[';
    for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? ";" : "") << format_double(v(i));
    os << ']';
    return os.str();
}

double eval_action(const Predictor& f, const Example& x, std::size_t round) {
    double v;
    try {
        v = f.fn(x);
    } catch (const std::exception& e) {
        throw Error("predictor " + f.name + " failed at round " + std::to_string(round) + ": " + e.what());
    }
    if (!(v >= 0.0 && v <= 1.0))
        throw Error("predictor " + f.name + " gives action " + format_double(v) + " outside [0,1] at round " +
                    std::to_string(round));
    return v;
}

int label(const TranscriptEntry& e, std::size_t round) {
    if (e.outcome == 0.0) return 0;
    if (e.outcome == 1.0) return 1;
    throw Error("omniprediction needs binary outcomes; round " + std::to_string(round) + " has " +
                format_double(e.outcome));
}

std::vector<std::vector<std::size_t>> bucket_rounds(const Transcript& t) {
    std::vector<std::vector<std::size_t>> b(t.grid.size());
    for (std::size_t k = 0; k < t.entries.size(); ++k) b[t.grid.index_of(t.entries[k].forecast)].push_back(k);
    return b;
}

}  // namespace

double bucket_K(const BucketStats& s, int p, std::size_t f) {
    const std::size_t n = s.n(p);
    return n == 0 ? 0.0 : s.residual_sum(p, f) / static_cast<double>(n);
}

double bucket_K(const Transcript& t, int p, const Predictor& f, ResidualRule rule) {
    FiniteClass c{{f}, INFINITY};
    return bucket_K(bucket_stats(t, c, rule), p, 0);
}

CalibrationReport calibration_report(const Transcript& t, const FunctionClass& cls, ResidualRule rule) {
    const BucketStats s = bucket_stats(t, cls, rule);
    const int np = t.grid.size();
    const double T = static_cast<double>(t.size());
    CalibrationReport r;
    r.n.resize(np);
    r.bucket_sup.assign(np, 0.0);
    r.bucket_witness.assign(np, "");
    for (int p = 0; p < np; ++p) r.n[p] = s.n(p);
    if (t.empty()) return r;

    if (const auto* fc = std::get_if<FiniteClass>(&cls)) {
        const std::size_t nf = fc->predictors.size();
        CompensatedSum sk1, sk2;
        for (int p = 0; p < np; ++p) {
            if (s.n(p) == 0) continue;
            std::size_t best = 0;
            for (std::size_t f = 0; f < nf; ++f)
                if (std::fabs(bucket_K(s, p, f)) > std::fabs(bucket_K(s, p, best))) best = f;
            const double k = std::fabs(bucket_K(s, p, best));
            const double w = s.n(p) / T;
            r.bucket_sup[p] = k;
            r.bucket_witness[p] = fc->predictors[best].name;
            sk1.add(w * k);
            sk2.add(w * k * k);
            r.sKinf = std::max(r.sKinf, w * k);
        }
        r.sK1 = sk1.value();
        r.sK2 = sk2.value();
        for (std::size_t f = 0; f < nf; ++f) {
            CompensatedSum k1, k2;
            double kinf = 0.0;
            for (int p = 0; p < np; ++p) {
                if (s.n(p) == 0) continue;
                const double w = s.n(p) / T, k = bucket_K(s, p, f);
                k1.add(w * std::fabs(k));
                k2.add(w * k * k);
                kinf = std::max(kinf, w * std::fabs(k));
            }
            const std::string& name = fc->predictors[f].name;
            if (f == 0 || k1.value() > r.K1) r.K1 = k1.value(), r.K1_witness = name;
            if (f == 0 || k2.value() > r.K2) r.K2 = k2.value(), r.K2_witness = name;
            if (f == 0 || kinf > r.Kinf) r.Kinf = kinf, r.Kinf_witness = name;
        }
        return r;
    }

    const auto& lb = std::get<LinearBall>(cls);
    const double rootB = std::sqrt(lb.B);
    const auto dim = static_cast<Eigen::Index>(s.vector_dim());
    std::vector<Eigen::VectorXd> w;  // (n_p/T) v_p for nonempty buckets
    std::vector<int> wp;
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(dim, dim);
    CompensatedSum sk1, sk2;
    int kinf_bucket = -1;
    for (int p = 0; p < np; ++p) {
        if (s.n(p) == 0) continue;
        const auto rv = s.residual_vector(p);
        const double n = static_cast<double>(s.n(p));
        Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(rv.data(), dim) / n;
        const double norm = v.norm();
        const double wt = n / T;
        r.bucket_sup[p] = rootB * norm;
        r.bucket_witness[p] = format_vector(norm > 0 ? Eigen::VectorXd(rootB * v / norm) : Eigen::VectorXd(v * 0.0));
        sk1.add(wt * rootB * norm);
        sk2.add(wt * lb.B * norm * norm);
        if (wt * rootB * norm > r.sKinf || kinf_bucket < 0) r.sKinf = wt * rootB * norm, kinf_bucket = p;
        M += wt * v * v.transpose();
        w.push_back(wt * v);
        wp.push_back(p);
    }
    r.sK1 = sk1.value();
    r.sK2 = sk2.value();
    r.Kinf = r.sKinf;
    r.Kinf_witness = r.bucket_witness[kinf_bucket];

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
    const Eigen::VectorXd top = es.eigenvectors().col(dim - 1);
    r.K2 = lb.B * std::max(0.0, es.eigenvalues()(dim - 1));
    r.K2_witness = format_vector(rootB * top);

    // K1(theta) = sum_p |theta . w_p| is convex, so its max over the ball is sqrt(B) max_sigma ||sum sigma_p w_p||.
    const std::size_t k = w.size();
    Eigen::VectorXd best_u = Eigen::VectorXd::Zero(dim);
    double best = -1.0;
    if (k <= 16) {
        for (std::size_t mask = 0; mask < (std::size_t{1} << (k - 1)); ++mask) {
            Eigen::VectorXd u = w[0];
            for (std::size_t i = 1; i < k; ++i) u += ((mask >> (i - 1)) & 1) ? Eigen::VectorXd(-w[i]) : w[i];
            const double nu = u.norm();
            if (nu > best) best = nu, best_u = u;
        }
    } else {
        r.K1_exact = false;
        std::vector<Eigen::VectorXd> starts{top, -top};
        std::size_t longest = 0;
        for (std::size_t i = 1; i < k; ++i)
            if (w[i].norm() > w[longest].norm()) longest = i;
        starts.push_back(w[longest]);
        RandomSource rng(0x6b31, 0);
        while (starts.size() < 8) {
            Eigen::VectorXd g(dim);
            for (Eigen::Index i = 0; i < dim; ++i) g(i) = rng.normal();
            starts.push_back(g);
        }
        for (const auto& s0 : starts) {
            Eigen::VectorXd th = s0;
            double val = -1.0;
            // Sign fixed-point ascent: projected gradient with an unbounded step; monotone in the objective.
            for (int it = 0; it < 1000; ++it) {
                Eigen::VectorXd u = Eigen::VectorXd::Zero(dim);
                for (const auto& wi : w) u += (th.dot(wi) >= 0.0 ? 1.0 : -1.0) * wi;
                const double nu = u.norm();
                if (nu <= val * (1.0 + 1e-8) + 1e-300) break;
                val = nu;
                th = u;
            }
            if (val > best) best = val, best_u = th;
        }
    }
    r.K1 = rootB * best;
    const double nu = best_u.norm();
    r.K1_witness = format_vector(nu > 0 ? Eigen::VectorXd(rootB * best_u / nu) : best_u);
    return r;
}

double quantile_multivalidity(const Transcript& t, double q, int p, const Predictor& f) {
    return bucket_K(t, p, f, ResidualRule{Track::Quantile, q});
}

double swap_quantile_error_L2(const Transcript& t, const FunctionClass& cls, double q) {
    return calibration_report(t, cls, ResidualRule{Track::Quantile, q}).sK2;
}

OmniReport omni_regret(const Transcript& t, const std::vector<LossSpec>& losses, const FiniteClass& cls) {
    const int np = t.grid.size();
    OmniReport r;
    r.swap_loss.assign(np, "");
    r.swap_predictor.assign(np, "");
    if (t.empty() || losses.empty()) return r;
    const std::size_t nf = cls.predictors.size();
    const std::size_t T = t.size();
    std::vector<double> fx(T * nf);
    std::vector<int> ys(T);
    for (std::size_t k = 0; k < T; ++k) {
        ys[k] = label(t.entries[k], k);
        for (std::size_t f = 0; f < nf; ++f) fx[k * nf + f] = eval_action(cls.predictors[f], t.entries[k].x, k);
    }
    const auto rounds = bucket_rounds(t);
    // diff[l][f][p] = sum_{S(p)} l(y, k_l(p)) - l(y, f(x)).
    std::vector<double> swap_best(np, -INFINITY);
    double omni_best = -INFINITY;
    for (const auto& loss : losses) {
        std::vector<double> total(nf, 0.0);
        for (int p = 0; p < np; ++p) {
            if (rounds[p].empty()) continue;
            const double kp = post_process(loss, t.grid.value(p));
            CompensatedSum own;
            for (std::size_t k : rounds[p]) own.add(loss(ys[k], kp));
            for (std::size_t f = 0; f < nf; ++f) {
                CompensatedSum cmp;
                for (std::size_t k : rounds[p]) cmp.add(loss(ys[k], fx[k * nf + f]));
                const double d = own.value() - cmp.value();
                total[f] += d;
                if (d > swap_best[p]) {
                    swap_best[p] = d;
                    r.swap_loss[p] = loss.name;
                    r.swap_predictor[p] = cls.predictors[f].name;
                }
            }
        }
        for (std::size_t f = 0; f < nf; ++f)
            if (total[f] > omni_best) {
                omni_best = total[f];
                r.omni_loss = loss.name;
                r.omni_predictor = cls.predictors[f].name;
            }
    }
    CompensatedSum so;
    for (int p = 0; p < np; ++p)
        if (!rounds[p].empty()) so.add(swap_best[p]);
    r.omni = omni_best / static_cast<double>(T);
    r.swap_omni = so.value() / static_cast<double>(T);
    return r;
}

double swap_omni_explicit(const Transcript& t, const std::vector<LossSpec>& losses,
                          const std::vector<Predictor>& comparators) {
    const int np = t.grid.size();
    if (losses.size() != static_cast<std::size_t>(np) || comparators.size() != static_cast<std::size_t>(np))
        throw Error("explicit swap omniprediction needs one loss and one comparator per grid value");
    if (t.empty()) return 0.0;
    const auto rounds = bucket_rounds(t);
    CompensatedSum s;
    for (int p = 0; p < np; ++p) {
        if (rounds[p].empty()) continue;
        const double kp = post_process(losses[p], t.grid.value(p));
        for (std::size_t k : rounds[p]) {
            const int y = label(t.entries[k], k);
            s.add(losses[p](y, kp));
            s.add(-losses[p](y, eval_action(comparators[p], t.entries[k].x, k)));
        }
    }
    return s.value() / static_cast<double>(t.size());
}

std::vector<InequalityCheck> check_multical_to_omni(const Transcript& t, const std::vector<LossSpec>& losses,
                                                    const FiniteClass& cls) {
    double C = 0.0, D = 0.0;
    for (const auto& l : losses) {
        if (!l.convex) throw UnsupportedError("multicalibration-to-omniprediction bound needs convex losses: " + l.name);
        const auto c = loss_constants(l);
        C = std::max(C, c.C);
        D = std::max(D, c.D);
    }
    const auto om = omni_regret(t, losses, cls);
    const auto cal = calibration_report(t, cls);
    std::vector<InequalityCheck> out;
    out.push_back({"swap_omni<=(C+4D)sK1", om.swap_omni, (C + 4.0 * D) * cal.sK1, false});
    out.push_back({"omni<=(C+4D)K1", om.omni, (C + 4.0 * D) * cal.K1, false});
    for (auto& c : out) c.holds = c.lhs <= c.rhs + 1e-9;
    return out;
}

InequalityCheck check_lowerbound_inequality(const Transcript& t) {
    InequalityCheck c{"swap_omni_trunc>=2K1(I)-2/T", 0.0, 0.0, true};
    if (t.empty()) return c;
    const int np = t.grid.size();
    const double T = static_cast<double>(t.size());
    const FiniteClass ident{{constant_predictor("I", 1.0)}, 1.0};
    const BucketStats s = bucket_stats(t, ident);
    std::vector<LossSpec> losses;
    std::vector<Predictor> comps;
    CompensatedSum k1;
    // Thresholds are clamped to [0,1]; clamping keeps p strictly on the same side of v and
    // only shrinks |v - p|, so the per-bucket gain 2n(|K| - |v - p|) still covers 2n|K| - 2n/T.
    for (int p = 0; p < np; ++p) {
        const double pv = t.grid.value(p);
        const double K = bucket_K(s, p, 0);
        k1.add(s.n(p) / T * std::fabs(K));
        if (K > 0) {
            losses.push_back(trunc_loss(std::min(1.0, pv + 1.0 / T)));
            comps.push_back(constant_predictor("1", 1.0));
        } else if (K < 0) {
            losses.push_back(trunc_loss(std::max(0.0, pv - 1.0 / T)));
            comps.push_back(constant_predictor("0", 0.0));
        } else {
            losses.push_back(trunc_loss(pv));
            comps.push_back(constant_predictor("1", 1.0));
        }
    }
    c.lhs = swap_omni_explicit(t, losses, comps);
    c.rhs = 2.0 * k1.value() - 2.0 / T;
    c.holds = c.lhs >= c.rhs - 1e-9;
    return c;
}

std::vector<InequalityCheck> check_conditional_mean(const Transcript& t, const FiniteClass& cls) {
    if (cls.B > 1.0) throw UnsupportedError("conditional-mean bound needs predictors bounded by 1 in magnitude");
    const BucketStats s = bucket_stats(t, cls);
    const auto cal = calibration_report(t, cls);
    const int np = t.grid.size();
    const std::size_t nf = cls.predictors.size();
    const double T = static_cast<double>(std::max<std::size_t>(t.size(), 1));
    std::vector<InequalityCheck> out;
    for (int y = 0; y < 2; ++y) {
        CompensatedSum swap;
        std::vector<CompensatedSum> per_f(nf);
        for (int p = 0; p < np; ++p) {
            const std::size_t ny = s.n(p, y);
            if (ny == 0) continue;
            double mx = 0.0;
            for (std::size_t f = 0; f < nf; ++f) {
                const double term = ny / T * std::fabs(s.sum_f(p, y, f) / ny - s.sum_f(p, f) / s.n(p));
                mx = std::max(mx, term);
                per_f[f].add(term);
            }
            swap.add(mx);
        }
        double ns = 0.0;
        for (const auto& v : per_f) ns = std::max(ns, v.value());
        const std::string tag = "y=" + std::to_string(y);
        out.push_back({"cond_mean_swap[" + tag + "]<=2sK1", swap.value(), 2.0 * cal.sK1, false});
        out.push_back({"cond_mean[" + tag + "]<=2K1", ns, 2.0 * cal.K1, false});
    }
    for (auto& c : out) c.holds = c.lhs <= c.rhs + 1e-9;
    return out;
}

PostProcessCheck check_post_process_optimality(const Transcript& t, const LossSpec& loss) {
    PostProcessCheck r;
    const int np = t.grid.size();
    const double C = loss_constants(loss).C;
    const auto rounds = bucket_rounds(t);
    for (int p = 0; p < np; ++p) {
        if (rounds[p].empty()) continue;
        CompensatedSum ys;
        for (std::size_t k : rounds[p]) ys.add(static_cast<double>(label(t.entries[k], k)));
        const double n = static_cast<double>(rounds[p].size());
        const double ybar = ys.value() / n;
        const double K = ybar - t.grid.value(p);
        const double kp = post_process(loss, t.grid.value(p));
        const double own = loss.expected(ybar, kp);
        double gap = -INFINITY, act = 0.0;
        for (int j = 0; j < np; ++j) {
            const double a = t.grid.value(j);
            const double g = own - loss.expected(ybar, a);
            if (g > gap) gap = g, act = a;
        }
        const double e1 = gap - C * std::fabs(K), e2 = gap - 2.0 * C * std::fabs(K);
        if (e1 > 1e-9) ++r.violations;
        if (e2 > 1e-9) ++r.violations_2C;
        if (e1 > r.worst_excess) r.worst_excess = e1, r.worst_bucket = p, r.worst_action = act;
        r.worst_excess_2C = std::max(r.worst_excess_2C, e2);
    }
    return r;
}

WitnessResult witness_advantage(const Transcript& t, int p, const Predictor& f, double alpha) {
    WitnessResult w;
    w.alpha = alpha;
    const double pv = t.grid.value(p);
    std::vector<std::pair<double, double>> pts;  // (f(x), y)
    for (const auto& e : t.entries)
        if (t.grid.index_of(e.forecast) == p) pts.push_back({f.fn(e.x), e.outcome});
    if (pts.empty()) throw Error("witness construction needs a nonempty bucket");
    CompensatedSum tau;
    for (const auto& [fv, y] : pts) tau.add(fv * fv);
    const double tm = tau.value() / pts.size();
    w.eta = tm > 0.0 ? std::min(1.0, alpha / tm) : 1.0;
    CompensatedSum adv;
    for (const auto& [fv, y] : pts) {
        const double g = pv + w.eta * fv;
        adv.add((pv - y) * (pv - y) - (g - y) * (g - y));
    }
    w.advantage = adv.value() / pts.size();
    return w;
}

double v_regret_vs_constant(const Transcript& t, double v, double beta, bool right_limit) {
    auto sg = [right_limit](double x) { return right_limit ? (x > 0.0 ? 1.0 : -1.0) : (x >= 0.0 ? 1.0 : -1.0); };
    const int np = t.grid.size();
    std::vector<double> n(np, 0.0), ysum(np, 0.0);
    for (const auto& e : t.entries) {
        const int p = t.grid.index_of(e.forecast);
        n[p] += 1.0;
        ysum[p] += e.outcome;
    }
    const double sb = sg(beta - v);
    CompensatedSum s;
    for (int p = 0; p < np; ++p) {
        if (n[p] == 0.0) continue;
        s.add((v * n[p] - ysum[p]) * (sg(t.grid.value(p) - v) - sb));
    }
    return s.value();
}

UForecastCheck check_u_forecast(const Transcript& t, const LossSpec& proper_loss) {
    UForecastCheck c;
    if (t.empty()) return c;
    CompensatedSum ys;
    for (std::size_t k = 0; k < t.size(); ++k) ys.add(label(t.entries[k], k));
    const double beta = ys.value() / static_cast<double>(t.size());
    CompensatedSum lhs;
    for (std::size_t k = 0; k < t.size(); ++k) {
        const int y = label(t.entries[k], k);
        lhs.add(proper_loss(y, t.entries[k].forecast));
        lhs.add(-proper_loss(y, beta));
    }
    c.lhs = lhs.value();
    // Piecewise linear in v between breakpoints {grid values, beta}, left-continuous; the sup is
    // attained at a breakpoint value or a right limit.
    c.grid_v = -INFINITY;
    for (int k = 0; k <= 400; ++k) c.grid_v = std::max(c.grid_v, v_regret_vs_constant(t, k / 400.0, beta));
    c.sup_v = c.grid_v;
    std::vector<double> bps = t.grid.values();
    bps.push_back(beta);
    for (double b : bps) {
        c.sup_v = std::max(c.sup_v, v_regret_vs_constant(t, b, beta));
        if (b < 1.0) c.sup_v = std::max(c.sup_v, v_regret_vs_constant(t, b, beta, true));
    }
    c.holds = c.lhs <= 2.0 * c.sup_v + 1e-6;
    return c;
}

}  // namespace omnical
