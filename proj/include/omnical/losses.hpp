#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace omnical {

// Binary-outcome loss l(y, a) with y in {0,1}, a in [0,1].
struct LossSpec {
    std::string name;
    std::function<double(int, double)> eval;
    double C = 0.0;  // max_a |l(0,a) - l(1,a)|
    double D = 0.0;  // max_{y,a} |dl/da|
    bool convex = false;
    bool analytic_constants = false;  // C and D are exact rather than grid estimates
    std::optional<std::function<double(double)>> closed_form_k;

    double operator()(int y, double a) const { return eval(y, a); }
    // Expected loss under y ~ Ber(p).
    double expected(double p, double a) const { return (1.0 - p) * eval(0, a) + p * eval(1, a); }
};

inline double sign_pos(double x) { return x >= 0.0 ? 1.0 : -1.0; }

double eval_v_loss(double v, int y, double p);
double eval_trunc_loss(double v, int y, double q);
// PB_q(p, s): pinball loss of threshold p against score s.
double pinball(double q, double p, double s);

inline constexpr double kLogLossClip = 1e-3;

LossSpec squared_loss();
LossSpec absolute_loss();
LossSpec pinball_loss(double q);
LossSpec v_loss(double v);
LossSpec trunc_loss(double v);
LossSpec clipped_log_loss();
// Wraps an arbitrary evaluator; C and D come from loss_constants.
LossSpec custom_loss(std::string name, std::function<double(int, double)> eval, bool convex,
                     std::optional<std::function<double(double)>> k = std::nullopt);

// Registry: squared, absolute, pinball:<q>, vloss:<v>, trunc:<v>, logloss-clipped.
LossSpec make_loss(const std::string& name);

struct LossConstants {
    double C = 0.0;
    double D = 0.0;
};
// Grid estimates on 10001 points; D from central differences with step 1e-5.
LossConstants loss_constants_grid(const LossSpec& loss);
// Analytic constants when the spec carries them, grid estimates otherwise.
LossConstants loss_constants(const LossSpec& loss);

bool is_bimonotone(const LossSpec& loss);

// argmin_a (1-p) l(0,a) + p l(1,a): closed form when present, else golden section.
double post_process(const LossSpec& loss, double p);
// Golden-section path regardless of closed forms (convex losses only).
double post_process_numeric(const LossSpec& loss, double p);

// Built-in convex losses used by property suites.
std::vector<LossSpec> builtin_convex_losses();
// Built-in proper losses bounded in [-1, 1].
std::vector<LossSpec> builtin_proper_losses();

}  // namespace omnical
