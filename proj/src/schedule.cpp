#include "harrisdiff/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace harrisdiff {

Schedule Schedule::linear_beta(double beta_min, double beta_max, double horizon,
                               double alpha) {
  if (!(horizon > 0.0)) throw std::invalid_argument("schedule: horizon must be > 0");
  if (beta_min < 0.0 || beta_max < beta_min)
    throw std::invalid_argument("schedule: need 0 <= beta_min <= beta_max");
  if (alpha < 0.0) throw std::invalid_argument("schedule: alpha must be >= 0");
  Schedule s;
  s.kind_ = ScheduleKind::LinearBeta;
  s.alpha_ = alpha;
  s.horizon_ = horizon;
  s.beta_min_ = beta_min;
  s.beta_max_ = beta_max;
  return s;
}

Schedule Schedule::karras_ve(double sigma_min, double sigma_max, double rho,
                             double horizon) {
  if (!(horizon > 0.0)) throw std::invalid_argument("schedule: horizon must be > 0");
  if (!(sigma_min > 0.0 && sigma_max > sigma_min))
    throw std::invalid_argument("schedule: need 0 < sigma_min < sigma_max");
  if (!(rho > 0.0)) throw std::invalid_argument("schedule: rho must be > 0");
  Schedule s;
  s.kind_ = ScheduleKind::KarrasVE;
  s.alpha_ = 0.0;
  s.horizon_ = horizon;
  s.sigma_min_ = sigma_min;
  s.sigma_max_ = sigma_max;
  s.rho_ = rho;
  return s;
}

void Schedule::check_time(double t) const {
  if (!(t >= 0.0 && t <= horizon_))
    throw std::invalid_argument("schedule: time outside [0, T]");
}

double Schedule::karras_sigma(double t) const {
  const double lo = std::pow(sigma_min_, 1.0 / rho_);
  const double hi = std::pow(sigma_max_, 1.0 / rho_);
  return std::pow(lo + (t / horizon_) * (hi - lo), rho_);
}

double Schedule::beta_at(double t) const {
  check_time(t);
  if (kind_ == ScheduleKind::LinearBeta)
    return beta_min_ + (t / horizon_) * (beta_max_ - beta_min_);
  // beta = sigma * sigma'
  const double lo = std::pow(sigma_min_, 1.0 / rho_);
  const double hi = std::pow(sigma_max_, 1.0 / rho_);
  const double base = lo + (t / horizon_) * (hi - lo);
  const double sigma = std::pow(base, rho_);
  const double dsigma = rho_ * std::pow(base, rho_ - 1.0) * (hi - lo) / horizon_;
  return sigma * dsigma;
}

double Schedule::beta_integral(double a, double b) const {
  if (a > b) throw std::invalid_argument("schedule: beta_integral needs a <= b");
  check_time(a);
  check_time(b);
  if (kind_ == ScheduleKind::LinearBeta)
    return 0.5 * (b - a) * (beta_at(a) + beta_at(b));  // exact, beta affine
  const double sa = karras_sigma(a), sb = karras_sigma(b);
  return 0.5 * (sb * sb - sa * sa);  // antiderivative of sigma*sigma'
}

ForwardMoments Schedule::forward_moments(double t) const {
  check_time(t);
  ForwardMoments fm;
  const double ib = beta_integral(0.0, t);
  if (alpha_ == 0.0) {
    fm.m = 1.0;
    fm.var = 2.0 * ib;
  } else {
    fm.m = std::exp(-alpha_ * ib);
    fm.var = (1.0 - fm.m * fm.m) / alpha_;
  }
  return fm;
}

double Schedule::cond_m(double s, double t) const {
  if (s > t) throw std::invalid_argument("schedule: cond_m needs s <= t");
  return std::exp(-alpha_ * beta_integral(s, t));
}

double Schedule::cond_var(double s, double t) const {
  if (s > t) throw std::invalid_argument("schedule: cond_var needs s <= t");
  if (alpha_ == 0.0) return 2.0 * beta_integral(s, t);
  const double m = cond_m(s, t);
  return (1.0 - m * m) / alpha_;
}

double Schedule::reference_var() const {
  return alpha_ == 0.0 ? forward_moments(horizon_).var : 1.0 / alpha_;
}

nlohmann::json Schedule::to_json() const {
  nlohmann::json j;
  j["alpha"] = alpha_;
  j["horizon"] = horizon_;
  if (kind_ == ScheduleKind::LinearBeta) {
    j["kind"] = "linear-beta";
    j["beta_min"] = beta_min_;
    j["beta_max"] = beta_max_;
  } else {
    j["kind"] = "karras-ve";
    j["sigma_min"] = sigma_min_;
    j["sigma_max"] = sigma_max_;
    j["rho"] = rho_;
  }
  return j;
}

Schedule Schedule::from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  const double horizon = j.value("horizon", 1.0);
  if (kind == "linear-beta") {
    return linear_beta(j.at("beta_min").get<double>(), j.at("beta_max").get<double>(),
                       horizon, j.value("alpha", 0.0));
  }
  if (kind == "karras-ve") {
    if (j.value("alpha", 0.0) != 0.0)
      throw std::invalid_argument("schedule: karras-ve requires alpha = 0");
    return karras_ve(j.at("sigma_min").get<double>(), j.at("sigma_max").get<double>(),
                     j.at("rho").get<double>(), horizon);
  }
  throw std::invalid_argument("schedule: unknown kind '" + kind + "'");
}

namespace {

// Forward time u at which the noise std reaches `target_sd`; var is strictly
// increasing so bisection suffices.
double time_at_noise_sd(const Schedule& s, double target_sd) {
  double lo = 0.0, hi = s.horizon();
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (std::sqrt(s.forward_moments(mid).var) < target_sd)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

Grid make_grid(const Schedule& schedule, std::size_t n_steps, GridSpacing spacing) {
  if (n_steps == 0) throw std::invalid_argument("make_grid: n_steps must be >= 1");
  const double T = schedule.horizon();
  const std::size_t n = n_steps;
  Grid g;
  g.times.resize(n + 1);

  const bool uniform_time =
      spacing == GridSpacing::UniformTime ||
      // KarrasVE embeds the rho-spacing of noise levels in its time
      // parameterization, so equidistant times already realize it.
      schedule.kind() == ScheduleKind::KarrasVE;

  if (uniform_time) {
    for (std::size_t k = 0; k <= n; ++k)
      g.times[k] = T * static_cast<double>(k) / static_cast<double>(n);
  } else {
    // reverse time t_k corresponds to forward time T - t_k; space the noise
    // std linearly from its max (reverse start) down to 0
    const double sd_max = std::sqrt(schedule.forward_moments(T).var);
    g.times[0] = 0.0;
    g.times[n] = T;
    for (std::size_t k = 1; k < n; ++k) {
      const double sd = sd_max * (1.0 - static_cast<double>(k) / static_cast<double>(n));
      g.times[k] = T - time_at_noise_sd(schedule, sd);
    }
  }

  g.deltas.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    // Delta_k = int_{t_k}^{t_{k+1}} beta(T-u) du = int over forward times
    g.deltas[k] = schedule.beta_integral(T - g.times[k + 1], T - g.times[k]);
    if (!(g.times[k + 1] > g.times[k]) || !(g.deltas[k] > 0.0))
      throw std::invalid_argument("make_grid: degenerate interval");
  }
  return g;
}

std::string to_string(GridSpacing spacing) {
  return spacing == GridSpacing::UniformTime ? "uniform-in-t" : "uniform-in-sigma";
}

GridSpacing grid_spacing_from_string(const std::string& s) {
  if (s == "uniform-in-t") return GridSpacing::UniformTime;
  if (s == "uniform-in-sigma") return GridSpacing::UniformSigma;
  throw std::invalid_argument("unknown grid spacing '" + s + "'");
}

}  // namespace harrisdiff
