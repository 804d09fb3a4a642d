#include "omnical/adversaries.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace omnical {

std::vector<double> uniform_ball(RandomSource& rng, std::size_t d) {
    std::vector<double> x(d);
    double n2 = 0.0;
    do {
        n2 = 0.0;
        for (auto& v : x) v = rng.normal(), n2 += v * v;
    } while (n2 == 0.0);
    const double r = std::pow(rng.uniform(), 1.0 / static_cast<double>(d)) / std::sqrt(n2);
    for (auto& v : x) v *= r;
    // Guards the radius against rounding past 1.
    double m2 = 0.0;
    for (double v : x) m2 += v * v;
    if (m2 > 1.0) for (auto& v : x) v /= std::sqrt(m2);
    return x;
}

LinearProb::LinearProb(std::vector<double> theta_star, double noise, RandomSource rng)
    : theta_(std::move(theta_star)), noise_(noise), rng_(rng) {
    if (theta_.size() < 2) throw ConfigError("linear adversary needs d >= 1 (theta* has d+1 entries)");
    if (!(noise >= 0.0)) throw ConfigError("linear adversary noise must be >= 0");
}

std::vector<double> LinearProb::default_theta(std::size_t d) {
    std::vector<double> th(d + 1, 0.7 / std::sqrt(static_cast<double>(d)));
    th[d] = std::sqrt(0.5);
    return th;
}

AdversaryDraw LinearProb::draw(std::size_t t, const std::vector<double>& theta) const {
    RandomSource r = rng_.fork(t);
    AdversaryDraw out;
    out.x.x = uniform_ball(r, dim());
    const auto xt = augment(out.x.x);
    double s = 0.0;
    for (std::size_t k = 0; k < xt.size(); ++k) s += theta[k] * xt[k];
    if (noise_ > 0.0) s += noise_ * (2.0 * r.uniform() - 1.0);
    out.p = std::clamp(s, 0.0, 1.0);
    return out;
}

AdversaryDraw LinearProb::next(const Transcript& history) const { return draw(history.size(), theta_); }

Shifting::Shifting(std::vector<std::vector<double>> thetas, std::size_t phase, double noise, RandomSource rng)
    : thetas_(std::move(thetas)), phase_(phase), base_(thetas_.empty() ? std::vector<double>{} : thetas_[0], noise, rng) {
    if (phase_ == 0) throw ConfigError("shifting adversary phase must be >= 1");
    for (const auto& th : thetas_)
        if (th.size() != thetas_[0].size()) throw ConfigError("shifting adversary thetas must share a dimension");
}

AdversaryDraw Shifting::next(const Transcript& history) const {
    const std::size_t t = history.size();
    return base_.draw(t, thetas_[(t / phase_) % thetas_.size()]);
}

std::string Shifting::name() const { return "shifting:" + std::to_string(dim()) + ":" + std::to_string(phase_); }

BucketAttacker::BucketAttacker(std::size_t d, std::size_t window, RandomSource rng)
    : window_(window), fallback_(LinearProb::default_theta(d), 0.0, rng) {
    if (window_ == 0) throw ConfigError("attacker window must be >= 1");
}

AdversaryDraw BucketAttacker::next(const Transcript& history) const {
    const std::size_t t = history.size();
    if (t == 0) return fallback_.next(history);
    const std::size_t d = dim();
    const std::size_t start = t > window_ ? t - window_ : 0;
    const int np = history.grid.size();
    std::vector<std::vector<double>> R(np, std::vector<double>(d + 1, 0.0));
    for (std::size_t k = start; k < t; ++k) {
        const auto& e = history.entries[k];
        const auto xt = augment(e.x.x);
        auto& r = R[history.grid.index_of(e.forecast)];
        for (std::size_t i = 0; i <= d; ++i) r[i] += xt[i] * (e.outcome - e.forecast);
    }
    int worst = -1;
    double worst_norm = 0.0;
    for (int p = 0; p < np; ++p) {
        double n2 = 0.0;
        for (double v : R[p]) n2 += v * v;
        if (n2 > worst_norm) worst_norm = n2, worst = p;
    }
    AdversaryDraw out = fallback_.next(history);
    if (worst < 0) return out;
    double u2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) u2 += R[worst][i] * R[worst][i];
    if (u2 > 0.0)
        for (std::size_t i = 0; i < d; ++i) out.x.x[i] = R[worst][i] / std::sqrt(u2);
    out.p = R[worst][d] > 0.0 ? 1.0 : 0.0;
    return out;
}

std::string BucketAttacker::name() const { return "attacker:" + std::to_string(dim()) + ":" + std::to_string(window_); }

SmoothScore::SmoothScore(double rho, std::size_t groups, RandomSource rng)
    : rho_(rho), groups_(groups), width_(kSmoothSlope / rho), rng_(rng) {
    if (!(rho >= kSmoothSlope)) throw ConfigError("smoothscore rho must be >= 1.4 so the support fits in [0,1]");
    if (groups == 0) throw ConfigError("smoothscore needs at least one group");
}

double SmoothScore::center(const Example& x) const {
    double s = 5.0 * (x.x[0] - 0.5 * x.x[1]);
    for (std::size_t g = 0; g < groups_; ++g) {
        const double b = (g % 2 == 0 ? 1.0 : -1.0) * (0.5 + 0.5 * static_cast<double>(g) / groups_);
        s += b * x.groups[g];
    }
    s -= 0.5;
    return width_ / 2 + (1.0 - width_) / (1.0 + std::exp(-s));
}

AdversaryDraw SmoothScore::next(const Transcript& history) const {
    RandomSource r = rng_.fork(history.size());
    AdversaryDraw out;
    const auto z = uniform_ball(r, 2);
    out.x.x = {z[0] / 2, z[1] / 2};
    const double gscale = 1.0 / (2.0 * std::sqrt(static_cast<double>(groups_)));
    for (std::size_t g = 0; g < groups_; ++g) {
        const bool bit = r.bernoulli(0.5);
        out.x.groups.push_back(bit);
        out.x.x.push_back(bit ? gscale : 0.0);
    }
    out.cdf = ScoreCDF::smooth(center(out.x), width_);
    return out;
}

std::string SmoothScore::name() const {
    return "smoothscore:" + format_double(rho_) + ":" + std::to_string(groups_);
}

namespace {

std::vector<std::string> split_spec(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, ':')) out.push_back(part);
    return out;
}

std::size_t parse_count(const std::string& spec, const std::string& v) {
    std::size_t pos = 0;
    unsigned long long n = 0;
    try {
        n = std::stoull(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != v.size() || v.empty() || v[0] == '-' || n == 0)
        throw ConfigError("adversary spec '" + spec + "': '" + v + "' is not a positive integer");
    return static_cast<std::size_t>(n);
}

}  // namespace

std::unique_ptr<Adversary> make_adversary(const std::string& spec, RandomSource rng) {
    const auto parts = split_spec(spec);
    if (parts.empty()) throw ConfigError("empty adversary spec");
    if (parts[0] == "linear" && parts.size() == 2)
        return std::make_unique<LinearProb>(LinearProb::default_theta(parse_count(spec, parts[1])), 0.0, rng);
    if (parts[0] == "shifting" && parts.size() == 3) {
        const std::size_t d = parse_count(spec, parts[1]);
        auto a = LinearProb::default_theta(d), b = a;
        for (std::size_t k = 0; k < d; ++k) b[k] = -a[k];
        return std::make_unique<Shifting>(std::vector<std::vector<double>>{a, b}, parse_count(spec, parts[2]), 0.0,
                                          rng);
    }
    if (parts[0] == "attacker" && parts.size() == 3)
        return std::make_unique<BucketAttacker>(parse_count(spec, parts[1]), parse_count(spec, parts[2]), rng);
    if (parts[0] == "smoothscore" && parts.size() == 3) {
        double rho = 0.0;
        std::size_t pos = 0;
        try {
            rho = std::stod(parts[1], &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != parts[1].size()) throw ConfigError("adversary spec '" + spec + "': bad rho");
        return std::make_unique<SmoothScore>(rho, parse_count(spec, parts[2]), rng);
    }
    throw ConfigError("unknown adversary spec '" + spec + "'");
}

EpisodeStreams EpisodeStreams::for_replication(std::uint64_t seed, std::uint64_t rep) {
    return {RandomSource(seed, 4 * rep + 1), RandomSource(seed, 4 * rep + 2), RandomSource(seed, 4 * rep + 3)};
}

Transcript run_episode(const Adversary& adv, int m, std::size_t T, const EpisodeHooks& hooks, RandomSource& fc_rng,
                       RandomSource& outcome_rng) {
    Transcript t;
    t.grid = ForecastGrid(m);
    t.track = adv.track();
    t.entries.reserve(T);
    for (std::size_t r = 0; r < T; ++r) {
        AdversaryDraw a = adv.next(t);
        const ForecastDraw f = hooks.forecast(a.x, fc_rng);
        double outcome;
        if (t.track == Track::Quantile) {
            if (!a.cdf) throw Error("quantile-track adversary emitted no score distribution");
            outcome = a.cdf->sample(outcome_rng);
        } else {
            outcome = outcome_rng.bernoulli(a.p) ? 1.0 : 0.0;
        }
        hooks.update(a.x, outcome);
        t.push(TranscriptEntry{a.x, outcome, f.forecast, f.i, f.j});
        if (hooks.observe) hooks.observe(t, a);
    }
    return t;
}

}  // namespace omnical
