#pragma once

#include <optional>
#include <vector>

#include "harrisdiff/schedule.hpp"
#include "harrisdiff/target.hpp"
#include "json.hpp"

namespace harrisdiff {

// One-step Lyapunov pair for E||X||^2 under the backward kernel over reverse
// times [s, t]: E[V(X_t) | X_s = x] <= gamma V(x) + beta_const.
struct DriftPair {
  double gamma = 1.0;
  double beta_const = 0.0;
};

struct MinorizationResult {
  double epsilon = 0.0;
  double log_epsilon = 0.0;  // kept alongside, epsilon can underflow
  bool clamped = false;      // epsilon >= 1 clipped back into (0,1)
};

struct ContractionResult {
  double b_weight = 0.0;
  double alpha_bar = 1.0;
};

struct IntervalConstants {
  double s = 0.0, t = 0.0;
  double gamma = 0.0, beta_const = 0.0;
  double r_c_sq = 0.0, r_sq = 0.0;
  double epsilon = 0.0, log_epsilon = 0.0;
  bool epsilon_clamped = false;
  // epsilon below the smallest positive double: the certified contraction is
  // indistinguishable from 1 at this precision; log_epsilon stays meaningful
  bool epsilon_underflow = false;
  double b_weight = 0.0, alpha_bar = 1.0;
};

struct HarrisConstants {
  std::vector<IntervalConstants> intervals;
  double alpha_star = 1.0;  // max alpha_bar over intervals
  double b_star = 0.0;      // min b_weight over intervals
  double lambda_T = 0.0;
  double cmix = 0.0;
  double bound_value = 0.0;  // assembled with zero local errors
};

struct LocalErrors {
  double c_disc = 0.0;
  double c_net = 0.0;
  double score_err = 0.0;
};

// Forward dissipativity pair (a_t, b_t) at time t from the data pair
// (a0, b0); the offset absorbs the +d Laplacian shift. Requires a0 > alpha/2.
std::pair<double, double> propagate_dissipativity(const Dissipativity& d0,
                                                  const Schedule& schedule, double t,
                                                  int dimension);

// Closed-form (gamma, beta) over reverse interval [s, t] for V = ||x||^2.
DriftPair drift_pair(const Schedule& schedule, const Dissipativity& d0, double s,
                     double t, int dimension);

// Quadrature evaluation of the drift integrals for general even moment order
// ell >= 2; ell = 2 reproduces drift_pair, larger ell is used for moment
// diagnostics only.
DriftPair drift_pair_general(const Schedule& schedule, const Dissipativity& d0,
                             int ell, double s, double t, int dimension);

// critical small-set radius r_c^2 = 2 beta / (1 - gamma)
double small_set_radius(const DriftPair& drift);

// Doeblin constant for the ball of squared radius r_sq over [s, t].
MinorizationResult minorization_epsilon(const Target& target, const Schedule& schedule,
                                        double s, double t, double r_sq);

// Harris contraction pair (b, alpha_bar) given tuning alpha0 in (0, epsilon)
// and eta0 in (gamma + 2 beta / r^2, 1).
ContractionResult contraction(const DriftPair& drift, double epsilon, double r_sq,
                              double alpha0, double eta0);

// Regime factor Lambda(T): initialization-mixing strength of the forward flow.
double mixing_lambda(const Target& target, const Schedule& schedule);

// 1/sqrt(2) + b sqrt(2 (E V^2(X_T) + E V^2(X_inf))) with V = ||x||^2
double cmix(const Target& target, const Schedule& schedule, double b_weight);

// Per-interval constants over the whole grid with the default tunings
// r^2 = 2 r_c^2, alpha0 = eps/2, eta0 midpoint; then the uniform pair and the
// zero-local-error bound.
HarrisConstants compute_harris_constants(const Target& target, const Schedule& schedule,
                                         const Grid& grid,
                                         std::optional<Dissipativity> d0 = std::nullopt,
                                         double r_multiplier = 2.0);

// alpha*^N Lambda Cmix + sum_k alpha*^{N-k} (Delta_k c_disc + sqrt(Delta_k) c_net err)
double assemble_bound(const Grid& grid, double alpha_star, double lambda_T, double cmix,
                      const std::vector<LocalErrors>& locals);

nlohmann::json harris_constants_to_json(const HarrisConstants& hc);

}  // namespace harrisdiff
