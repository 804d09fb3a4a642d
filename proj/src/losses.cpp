#include "omnical/losses.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include "omnical/core.hpp"

namespace omnical {

double eval_v_loss(double v, int y, double p) { return (v - y) * sign_pos(p - v); }

double eval_trunc_loss(double v, int y, double q) { return (v - y) * (2.0 * q - 1.0); }

double pinball(double q, double p, double s) {
    if (s > p) return (s - p) * q;
    return (p - s) * (1.0 - q);
}

namespace {

double parse_param(const std::string& name, const std::string& text) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != text.size() || !std::isfinite(v)) throw ConfigError("bad parameter in loss name '" + name + "'");
    return v;
}

// Shortest round-trip text, so registry names stay readable.
std::string param_text(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace

LossSpec squared_loss() {
    LossSpec l;
    l.name = "squared";
    l.eval = [](int y, double a) { return (y - a) * (y - a); };
    l.C = 1.0;
    l.D = 2.0;
    l.convex = true;
    l.analytic_constants = true;
    l.closed_form_k = [](double p) { return p; };
    return l;
}

LossSpec absolute_loss() {
    LossSpec l;
    l.name = "absolute";
    l.eval = [](int y, double a) { return std::fabs(y - a); };
    l.C = 1.0;
    l.D = 1.0;
    l.convex = true;
    l.analytic_constants = true;
    // Expected loss p + a(1 - 2p); the flat case p = 1/2 ties to a = 0.
    l.closed_form_k = [](double p) { return p > 0.5 ? 1.0 : 0.0; };
    return l;
}

LossSpec pinball_loss(double q) {
    if (!(q > 0.0 && q < 1.0)) throw ConfigError("pinball quantile must lie in (0,1)");
    LossSpec l;
    l.name = "pinball:" + param_text(q);
    l.eval = [q](int y, double a) { return pinball(q, a, static_cast<double>(y)); };
    l.C = std::max(q, 1.0 - q);
    l.D = std::max(q, 1.0 - q);
    l.convex = true;
    l.analytic_constants = true;
    // Expected loss pq + a(1 - p - q); ties go to a = 0.
    l.closed_form_k = [q](double p) { return 1.0 - p - q < 0.0 ? 1.0 : 0.0; };
    return l;
}

LossSpec v_loss(double v) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("vloss threshold must lie in [0,1]");
    LossSpec l;
    l.name = "vloss:" + param_text(v);
    l.eval = [v](int y, double a) { return eval_v_loss(v, y, a); };
    l.C = 1.0;
    l.D = std::numeric_limits<double>::infinity();  // step function in a
    l.convex = false;
    l.analytic_constants = true;
    l.closed_form_k = [](double p) { return p; };  // proper
    return l;
}

LossSpec trunc_loss(double v) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("trunc threshold must lie in [0,1]");
    LossSpec l;
    l.name = "trunc:" + param_text(v);
    l.eval = [v](int y, double q) { return eval_trunc_loss(v, y, q); };
    l.C = 1.0;
    l.D = 2.0 * std::max(v, 1.0 - v);
    l.convex = true;
    l.analytic_constants = true;
    l.closed_form_k = [v](double p) { return p >= v ? 1.0 : 0.0; };
    return l;
}

LossSpec clipped_log_loss() {
    constexpr double d = kLogLossClip;
    LossSpec l;
    l.name = "logloss-clipped";
    // Actions map affinely onto [d, 1-d], which keeps the loss convex with bounded slope.
    l.eval = [](int y, double a) {
        const double c = d + (1.0 - 2.0 * d) * a;
        return y == 1 ? -std::log(c) : -std::log(1.0 - c);
    };
    l.C = std::log((1.0 - d) / d);
    l.D = (1.0 - 2.0 * d) / d;
    l.convex = true;
    l.analytic_constants = true;
    l.closed_form_k = [](double p) { return std::clamp((p - d) / (1.0 - 2.0 * d), 0.0, 1.0); };
    return l;
}

LossSpec custom_loss(std::string name, std::function<double(int, double)> eval, bool convex,
                     std::optional<std::function<double(double)>> k) {
    LossSpec l;
    l.name = std::move(name);
    l.eval = std::move(eval);
    l.convex = convex;
    l.closed_form_k = std::move(k);
    const auto c = loss_constants_grid(l);
    l.C = c.C;
    l.D = c.D;
    return l;
}

LossSpec make_loss(const std::string& name) {
    if (name == "squared") return squared_loss();
    if (name == "absolute") return absolute_loss();
    if (name == "logloss-clipped") return clipped_log_loss();
    const auto colon = name.find(':');
    if (colon != std::string::npos) {
        const std::string head = name.substr(0, colon);
        const std::string arg = name.substr(colon + 1);
        if (head == "pinball") return pinball_loss(parse_param(name, arg));
        if (head == "vloss") return v_loss(parse_param(name, arg));
        if (head == "trunc") return trunc_loss(parse_param(name, arg));
    }
    throw ConfigError("unknown loss '" + name + "'");
}

LossConstants loss_constants_grid(const LossSpec& loss) {
    constexpr int n = 10000;
    constexpr double h = 1e-5;
    LossConstants out;
    auto ev = [&](int y, double a) {
        const double v = loss.eval(y, a);
        if (!std::isfinite(v))
            throw NumericalError("loss '" + loss.name + "' is not finite at a=" + format_double(a));
        return v;
    };
    for (int k = 0; k <= n; ++k) {
        const double a = static_cast<double>(k) / n;
        out.C = std::max(out.C, std::fabs(ev(0, a) - ev(1, a)));
        for (int y = 0; y <= 1; ++y) {
            double slope;
            if (k == 0)
                slope = (ev(y, h) - ev(y, 0.0)) / h;
            else if (k == n)
                slope = (ev(y, 1.0) - ev(y, 1.0 - h)) / h;
            else
                slope = (ev(y, a + h) - ev(y, a - h)) / (2.0 * h);
            out.D = std::max(out.D, std::fabs(slope));
        }
    }
    return out;
}

LossConstants loss_constants(const LossSpec& loss) {
    if (loss.analytic_constants) return {loss.C, loss.D};
    return loss_constants_grid(loss);
}

bool is_bimonotone(const LossSpec& loss) {
    constexpr int n = 1000;
    constexpr double tol = 1e-12;
    double prev1 = loss.eval(1, 0.0);
    double prev0 = loss.eval(0, 0.0);
    for (int k = 1; k <= n; ++k) {
        const double a = static_cast<double>(k) / n;
        const double v1 = loss.eval(1, a);
        const double v0 = loss.eval(0, a);
        if (v1 < prev1 - tol || v0 > prev0 + tol) return false;
        prev1 = v1;
        prev0 = v0;
    }
    return true;
}

double post_process_numeric(const LossSpec& loss, double p) {
    if (!loss.convex) throw UnsupportedError("loss '" + loss.name + "' is not convex; no numeric post-processor");
    auto g = [&](double a) { return loss.expected(p, a); };
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = 0.0, hi = 1.0;
    double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
    double f1 = g(x1), f2 = g(x2);
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
        if (f1 <= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = g(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = g(x2);
        }
    }
    double best = 0.5 * (lo + hi);
    double fbest = g(best);
    for (double cand : {0.0, 1.0}) {
        const double fc = g(cand);
        if (fc < fbest || (fc == fbest && cand < best)) {
            best = cand;
            fbest = fc;
        }
    }
    // Smallest action within tie tolerance; the sublevel set of a convex function is an interval.
    const double tie = 1e-15 * (1.0 + std::fabs(fbest));
    if (g(0.0) <= fbest + tie) return 0.0;
    double a = 0.0, b = best;
    for (int it = 0; it < 200 && b - a > 1e-15; ++it) {
        const double mid = 0.5 * (a + b);
        if (g(mid) <= fbest + tie)
            b = mid;
        else
            a = mid;
    }
    return b;
}

double post_process(const LossSpec& loss, double p) {
    if (loss.closed_form_k) return (*loss.closed_form_k)(p);
    return post_process_numeric(loss, p);
}

std::vector<LossSpec> builtin_convex_losses() {
    return {squared_loss(), absolute_loss(), pinball_loss(0.1), pinball_loss(0.5), pinball_loss(0.9),
            trunc_loss(0.25), trunc_loss(0.5), trunc_loss(0.75), clipped_log_loss()};
}

std::vector<LossSpec> builtin_proper_losses() {
    return {squared_loss(), v_loss(0.25), v_loss(0.5), v_loss(0.75)};
}

}  // namespace omnical
