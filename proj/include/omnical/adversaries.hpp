#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "omnical/conformal.hpp"
#include "omnical/core.hpp"

namespace omnical {

// One adversary move: features plus either a mean p in [0,1] or a score CDF.
struct AdversaryDraw {
    Example x;
    double p = 0.0;
    std::optional<ScoreCDF> cdf;
};

// Adversaries see only the realized history psi_{1:t-1}; round t's draw is a pure
// function of (seed, history) through RandomSource(seed, stream).fork(t).
class Adversary {
public:
    virtual ~Adversary() = default;
    virtual AdversaryDraw next(const Transcript& history) const = 0;
    virtual Track track() const { return Track::Mean; }
    virtual std::size_t dim() const = 0;
    virtual std::string name() const = 0;
};

// Uniform point in the unit ball of R^d.
std::vector<double> uniform_ball(RandomSource& rng, std::size_t d);

// p = clamp(theta* . augment(x) + noise * (2u - 1), 0, 1), x uniform in the unit ball.
class LinearProb final : public Adversary {
public:
    LinearProb(std::vector<double> theta_star, double noise, RandomSource rng);
    // theta* with slope norm 0.7 along the all-ones direction and intercept 1/2 after augmentation.
    static std::vector<double> default_theta(std::size_t d);
    AdversaryDraw next(const Transcript& history) const override;
    std::size_t dim() const override { return theta_.size() - 1; }
    std::string name() const override { return "linear:" + std::to_string(dim()); }
    AdversaryDraw draw(std::size_t t, const std::vector<double>& theta) const;

private:
    std::vector<double> theta_;
    double noise_;
    RandomSource rng_;
};

// LinearProb whose theta* cycles through a list, switching every phase rounds.
class Shifting final : public Adversary {
public:
    Shifting(std::vector<std::vector<double>> thetas, std::size_t phase, double noise, RandomSource rng);
    AdversaryDraw next(const Transcript& history) const override;
    std::size_t dim() const override { return base_.dim(); }
    std::string name() const override;

private:
    std::vector<std::vector<double>> thetas_;
    std::size_t phase_;
    LinearProb base_;
};

// Targets the bucket with the largest weighted residual norm over the last window rounds:
// x is the unit feature direction of that residual vector and p pushes its mean residual further.
// Empty history falls back to a LinearProb draw.
class BucketAttacker final : public Adversary {
public:
    BucketAttacker(std::size_t d, std::size_t window, RandomSource rng);
    AdversaryDraw next(const Transcript& history) const override;
    std::size_t dim() const override { return fallback_.dim(); }
    std::string name() const override;

private:
    std::size_t window_;
    LinearProb fallback_;
};

// Conformal stream: x = (z/2, g/(2 sqrt k)) with z uniform in the unit disc and k group bits,
// score CDF smooth(center(x), kSmoothSlope / rho) with a logistic center.
class SmoothScore final : public Adversary {
public:
    SmoothScore(double rho, std::size_t groups, RandomSource rng);
    AdversaryDraw next(const Transcript& history) const override;
    Track track() const override { return Track::Quantile; }
    std::size_t dim() const override { return 2 + groups_; }
    std::string name() const override;
    double width() const { return width_; }
    double center(const Example& x) const;

private:
    double rho_;
    std::size_t groups_;
    double width_;
    RandomSource rng_;
};

// Registry: linear:<d>, shifting:<d>:<phase>, attacker:<d>:<window>, smoothscore:<rho>:<groups>.
std::unique_ptr<Adversary> make_adversary(const std::string& spec, RandomSource rng);

// Stream layout for one replication: adversary, forecaster and outcome sources are independent.
struct EpisodeStreams {
    RandomSource adversary;
    RandomSource forecaster;
    RandomSource outcome;
    static EpisodeStreams for_replication(std::uint64_t seed, std::uint64_t rep);
};

struct EpisodeHooks {
    std::function<ForecastDraw(const Example&, RandomSource&)> forecast;
    std::function<void(const Example&, double)> update;
    // Called after each round with the transcript so far and the adversary's move; optional.
    std::function<void(const Transcript&, const AdversaryDraw&)> observe;
};

// Runs T rounds of the protocol: adversary moves, forecaster commits, the harness realizes
// y ~ Ber(p) or s ~ CDF from the outcome stream, then the forecaster learns the outcome.
Transcript run_episode(const Adversary& adv, int m, std::size_t T, const EpisodeHooks& hooks, RandomSource& fc_rng,
                       RandomSource& outcome_rng);

}  // namespace omnical
