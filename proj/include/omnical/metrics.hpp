#pragma once

#include <string>
#include <vector>

#include "omnical/core.hpp"
#include "omnical/losses.hpp"

namespace omnical {

// K(pi, p, f) from accumulated statistics; 0 for empty buckets.
double bucket_K(const BucketStats& s, int p, std::size_t f);
double bucket_K(const Transcript& t, int p, const Predictor& f, ResidualRule rule = {});

struct CalibrationReport {
    std::vector<std::size_t> n;              // rounds per bucket
    std::vector<double> bucket_sup;          // sup over the class of |K(p, .)| per bucket
    std::vector<std::string> bucket_witness;  // predictor name or parameter vector per bucket
    double K1 = 0.0, K2 = 0.0, Kinf = 0.0;
    double sK1 = 0.0, sK2 = 0.0, sKinf = 0.0;
    std::string K1_witness, K2_witness, Kinf_witness;
    // False when a non-swap linear value comes from a local ascent and is only a lower bound.
    bool K1_exact = true;
};

// Finite classes enumerate predictors. Linear balls use K(p, theta) = theta . v_p:
// swap values are sqrt(B)||v_p|| per bucket, K2 is B * lambda_max(sum_p (n_p/T) v_p v_p^T),
// Kinf equals sKinf, and K1 is an exact sign enumeration for up to 16 buckets, else multi-start ascent.
CalibrationReport calibration_report(const Transcript& t, const FunctionClass& cls, ResidualRule rule = {});

// Q(pi, p, f) = (1/n(p)) sum_{S(p)} f(x)(q - 1[s <= p]).
double quantile_multivalidity(const Transcript& t, double q, int p, const Predictor& f);
double swap_quantile_error_L2(const Transcript& t, const FunctionClass& cls, double q);

struct OmniReport {
    double omni = 0.0;
    double swap_omni = 0.0;
    std::string omni_loss, omni_predictor;
    std::vector<std::string> swap_loss, swap_predictor;  // per bucket; empty when n(p) = 0
};

// Definitional omniprediction regrets with post-processed actions k(p_t).
OmniReport omni_regret(const Transcript& t, const std::vector<LossSpec>& losses, const FiniteClass& cls);
// sO for explicit per-bucket losses and comparators.
double swap_omni_explicit(const Transcript& t, const std::vector<LossSpec>& losses,
                          const std::vector<Predictor>& comparators);

struct InequalityCheck {
    std::string name;
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds = true;
};

// sO <= (C + 4D) sK1 and O <= (C + 4D) K1 over a convex loss family.
std::vector<InequalityCheck> check_multical_to_omni(const Transcript& t, const std::vector<LossSpec>& losses,
                                                    const FiniteClass& cls);
// sO over the per-bucket Trunc_{p +- 1/T} family with constant comparators >= 2 K1(pi, I) - 2/T.
InequalityCheck check_lowerbound_inequality(const Transcript& t);
// sum_p |S(p,y)|/T |fbar(p,y) - fbar(p)| <= 2 sK1 (swap) and <= 2 K1 (non-swap), y in {0,1}.
// Requires |f| <= 1, which the derivation uses through |fbar(p)| <= 1.
std::vector<InequalityCheck> check_conditional_mean(const Transcript& t, const FiniteClass& cls);

struct PostProcessCheck {
    double worst_excess = -INFINITY;  // max over buckets/actions of gap - C|K(I,p)|
    double worst_excess_2C = -INFINITY;  // same against 2C|K(I,p)|
    int worst_bucket = -1;
    double worst_action = 0.0;
    std::size_t violations = 0;     // buckets failing the C bound beyond 1e-9
    std::size_t violations_2C = 0;  // buckets failing the 2C bound beyond 1e-9
};
// Per bucket: mean loss of k(p) against mean loss of every grid-constant action.
PostProcessCheck check_post_process_optimality(const Transcript& t, const LossSpec& loss);

struct WitnessResult {
    double alpha = 0.0;
    double eta = 0.0;
    double advantage = 0.0;  // (1/n) sum_{S(p)} (p - y)^2 - (f'(x) - y)^2
};
// f' = p + eta f, eta = min(1, alpha / mean f^2) on bucket p.
WitnessResult witness_advantage(const Transcript& t, int p, const Predictor& f, double alpha);

struct UForecastCheck {
    double lhs = 0.0;
    double sup_v = 0.0;   // exact supremum over v in [0,1]
    double grid_v = 0.0;  // max over the 401-point grid alone
    bool holds = true;    // lhs <= 2 sup_v + 1e-6
};
// sum l(y, p_t) - l(y, beta) against 2 sup_v sum l_v(y, p_t) - l_v(y, beta), beta the outcome mean.
UForecastCheck check_u_forecast(const Transcript& t, const LossSpec& proper_loss);

// G(v) = sum_p (v n_p - Y_p)(s(p - v) - s(beta - v)); right_limit takes s(0) = -1.
double v_regret_vs_constant(const Transcript& t, double v, double beta, bool right_limit = false);

}  // namespace omnical
