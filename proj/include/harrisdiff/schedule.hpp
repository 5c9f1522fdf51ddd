#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace harrisdiff {

enum class ScheduleKind { LinearBeta, KarrasVE };
enum class GridSpacing { UniformTime, UniformSigma };

struct ForwardMoments {
  double m = 1.0;   // scaling m_{0|t}
  double var = 0.0; // sigma^2_{0|t}
};

// Forward noise dynamics dX = -alpha*beta(t) X dt + sqrt(2 beta(t)) dW on [0,T].
//  - LinearBeta: beta affine from beta_min to beta_max, any alpha >= 0.
//  - KarrasVE:   alpha = 0 and beta = sigma * sigma' for the rho-interpolated
//    sigma(t) running from sigma_min at t=0 to sigma_max at t=T. The noise
//    variance is offset by sigma_min^2 so that var(0) = 0 exactly.
// All public time arguments are forward times in [0,T]. Immutable.
class Schedule {
 public:
  static Schedule linear_beta(double beta_min, double beta_max, double horizon,
                              double alpha);
  static Schedule karras_ve(double sigma_min, double sigma_max, double rho,
                            double horizon = 1.0);

  double alpha() const { return alpha_; }
  double horizon() const { return horizon_; }
  ScheduleKind kind() const { return kind_; }
  bool is_ve() const { return alpha_ == 0.0; }

  double beta_at(double t) const;
  // closed-form integral of beta over [a,b]
  double beta_integral(double a, double b) const;
  ForwardMoments forward_moments(double t) const;

  // conditional scaling/variance of X_t given X_s for forward times s <= t
  double cond_m(double s, double t) const;
  double cond_var(double s, double t) const;

  // variance of the reference initialization pi_inf: sigma^2_{0|T} for VE,
  // 1/alpha for VP
  double reference_var() const;

  nlohmann::json to_json() const;
  static Schedule from_json(const nlohmann::json& j);

  // KarrasVE noise level sigma(t) prior to the sigma_min^2 offset
  double karras_sigma(double t) const;

 private:
  Schedule() = default;
  void check_time(double t) const;

  double alpha_ = 0.0;
  double horizon_ = 1.0;
  ScheduleKind kind_ = ScheduleKind::LinearBeta;
  double beta_min_ = 0.0, beta_max_ = 0.0;        // LinearBeta
  double sigma_min_ = 0.0, sigma_max_ = 0.0, rho_ = 0.0;  // KarrasVE
};

// Reverse-time discretization grid: times t_0 = 0 < ... < t_N = T, with
// deltas[k] = integral of beta(T-u) over [t_k, t_{k+1}].
struct Grid {
  std::vector<double> times;
  std::vector<double> deltas;

  std::size_t steps() const { return deltas.size(); }
};

Grid make_grid(const Schedule& schedule, std::size_t n_steps, GridSpacing spacing);

std::string to_string(GridSpacing spacing);
GridSpacing grid_spacing_from_string(const std::string& s);

}  // namespace harrisdiff
