#include "harrisdiff/harris.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "harrisdiff/quadrature.hpp"
#include "harrisdiff/rng.hpp"

namespace harrisdiff {

namespace {

constexpr double kLogPi = 1.1447298858494001741;

void require_admissible(const Dissipativity& d0, double alpha) {
  if (!(d0.a0 > 0.5 * alpha))
    throw std::invalid_argument("dissipativity: a0 must exceed alpha/2");
  if (d0.b0 < 0.0) throw std::invalid_argument("dissipativity: b0 must be >= 0");
}

}  // namespace

std::pair<double, double> propagate_dissipativity(const Dissipativity& d0,
                                                  const Schedule& schedule, double t,
                                                  int dimension) {
  require_admissible(d0, schedule.alpha());
  const auto fm = schedule.forward_moments(t);
  const double shifted = d0.b0 + static_cast<double>(dimension);
  if (schedule.is_ve()) {
    const double den = 1.0 + 2.0 * d0.a0 * fm.var;
    return {d0.a0 / den, shifted / den};
  }
  const double alpha = schedule.alpha();
  const double m2 = fm.m * fm.m;
  const double den = alpha * m2 + 2.0 * d0.a0 * (1.0 - m2);
  return {d0.a0 * alpha / den, shifted * m2 * alpha / den};
}

DriftPair drift_pair(const Schedule& schedule, const Dissipativity& d0, double s,
                     double t, int dimension) {
  if (!(s < t)) throw std::invalid_argument("drift_pair: need s < t");
  require_admissible(d0, schedule.alpha());
  const double T = schedule.horizon();
  const double a = T - t, b = T - s;  // forward endpoints, a < b
  const double dd = static_cast<double>(dimension);
  const double a0 = d0.a0, b0 = d0.b0;

  DriftPair out;
  if (schedule.is_ve()) {
    const double va = schedule.forward_moments(a).var;
    const double vb = schedule.forward_moments(b).var;
    const double na = 1.0 + 2.0 * a0 * va;
    const double nb = 1.0 + 2.0 * a0 * vb;
    out.gamma = na / nb;
    out.beta_const = 2.0 * (b0 + dd) * (vb - va) / nb +
                     dd * na / (2.0 * a0) * std::log(nb / na);
    return out;
  }
  const double alpha = schedule.alpha();
  const auto fa = schedule.forward_moments(a);
  const auto fb = schedule.forward_moments(b);
  const double ya = fa.m * fa.m, yb = fb.m * fb.m;  // ya >= yb
  const double na = ya + 2.0 * a0 * fa.var;
  const double nb = yb + 2.0 * a0 * fb.var;
  out.gamma = na / nb;
  out.beta_const = 2.0 * (b0 + dd) / alpha * (ya - yb) / nb +
                   dd / (2.0 * a0) * na * std::log(ya * nb / (yb * na));
  return out;
}

DriftPair drift_pair_general(const Schedule& schedule, const Dissipativity& d0,
                             int ell, double s, double t, int dimension) {
  if (ell < 2 || ell % 2 != 0)
    throw std::invalid_argument("drift_pair_general: ell must be even and >= 2");
  if (!(s < t)) throw std::invalid_argument("drift_pair_general: need s < t");
  require_admissible(d0, schedule.alpha());
  const double T = schedule.horizon();
  const double alpha = schedule.alpha();
  const double dd = static_cast<double>(dimension);
  const double l = static_cast<double>(ell);

  // phi(v), psi(v): contraction and offset rates entering Gronwall, from the
  // generator bound A_t V_l <= -a_v V_l + b_v ||x||^{l-2}
  auto coeffs = [&](double v) -> std::pair<double, double> {
    const auto at = propagate_dissipativity(d0, schedule, T - v, dimension);
    const double beta_rev = schedule.beta_at(T - v);
    const double a_v = l * beta_rev * (2.0 * at.first - alpha);
    const double b_v = l * beta_rev * (2.0 * at.second + l - 2.0 + dd);
    if (ell == 2) return {a_v, b_v};
    // Young split ||x||^{l-2} <= ((l-2)/l) eta ||x||^l + (2/l) eta^{-(l-2)/2},
    // with eta eating half of the available a_v/2 margin
    const double eta = a_v * l / (4.0 * (l - 2.0) * b_v);
    return {0.5 * a_v, b_v * (2.0 / l) * std::pow(eta, -(l - 2.0) / 2.0)};
  };

  auto phi = [&](double v) { return coeffs(v).first; };
  DriftPair out;
  out.gamma = std::exp(-integrate_refined(phi, s, t, 1e-11));
  auto inner = [&](double u) {
    const double decay = std::exp(-integrate_refined(phi, u, t, 1e-11));
    return decay * coeffs(u).second;
  };
  out.beta_const = integrate_refined(inner, s, t, 1e-10);
  return out;
}

double small_set_radius(const DriftPair& drift) {
  if (!(drift.gamma < 1.0))
    throw std::invalid_argument("small_set_radius: degenerate interval (gamma = 1)");
  return 2.0 * drift.beta_const / (1.0 - drift.gamma);
}

MinorizationResult minorization_epsilon(const Target& target, const Schedule& schedule,
                                        double s, double t, double r_sq) {
  if (!(s < t)) throw std::invalid_argument("minorization_epsilon: need s < t");
  if (!(r_sq > 0.0)) throw std::invalid_argument("minorization_epsilon: r_sq must be > 0");
  const double T = schedule.horizon();
  const double a = T - t, b = T - s;  // forward endpoints
  const int d = dim(target);

  const auto fa = schedule.forward_moments(a);
  const auto fb = schedule.forward_moments(b);
  const double m_ab = schedule.cond_m(a, b);
  const double v_ab = schedule.cond_var(a, b);

  const double log_sup = std::log(density_sup_norm(target));
  // max{(2 pi v_b)^{d/2} m_{0|b}^{-d} ||p||_inf, 1} in log space
  const double log_max =
      std::max(0.5 * d * std::log(2.0 * std::numbers::pi * fb.var) -
                   d * std::log(fb.m) + log_sup,
               0.0);

  const double c = (v_ab + 2.0 * fa.var * m_ab * m_ab) / (2.0 * fa.m * fa.m * m_ab * m_ab);

  MinorizationResult out;
  out.log_epsilon = 0.5 * d * (kLogPi + std::log(fb.var)) -
                    d * (std::log(m_ab) + std::log(fa.m)) - log_max - r_sq / v_ab +
                    gaussian_window_log_mean(target, c);
  out.epsilon = std::exp(out.log_epsilon);
  if (out.epsilon >= 1.0) {
    out.clamped = true;
    out.epsilon = 1.0 - 1e-12;
    out.log_epsilon = std::log(out.epsilon);
  }
  return out;
}

ContractionResult contraction(const DriftPair& drift, double epsilon, double r_sq,
                              double alpha0, double eta0) {
  const double r_c_sq = small_set_radius(drift);
  if (!(r_sq > r_c_sq))
    throw std::invalid_argument("contraction: r_sq must exceed the critical radius");
  if (!(alpha0 > 0.0 && alpha0 < epsilon))
    throw std::invalid_argument("contraction: alpha0 must lie in (0, epsilon)");
  const double eta_lo = drift.gamma + 2.0 * drift.beta_const / r_sq;
  if (!(eta0 > eta_lo && eta0 < 1.0))
    throw std::invalid_argument("contraction: eta0 outside its admissible interval");
  ContractionResult out;
  out.b_weight = alpha0 / drift.beta_const;
  const double branch1 = 1.0 - (epsilon - alpha0);
  const double branch2 =
      (2.0 + r_sq * out.b_weight * eta0) / (2.0 + r_sq * out.b_weight);
  out.alpha_bar = std::min(branch1, branch2);
  return out;
}

double mixing_lambda(const Target& target, const Schedule& schedule) {
  const double ib = schedule.beta_integral(0.0, schedule.horizon());
  if (schedule.is_ve()) {
    const double second = moment(target, schedule, 0.0, 2);
    return 0.5 * std::sqrt(second) / std::sqrt(ib);
  }
  const double kl = std::max(0.0, kl_to_isotropic_upper(target, 1.0 / schedule.alpha()));
  return std::sqrt(kl) * std::exp(-schedule.alpha() * ib);
}

double cmix(const Target& target, const Schedule& schedule, double b_weight) {
  const int d = dim(target);
  const double m4_T = moment(target, schedule, schedule.horizon(), 4);
  const double v = schedule.reference_var();
  const double m4_inf = v * v * d * (d + 2.0);
  return 1.0 / std::sqrt(2.0) + b_weight * std::sqrt(2.0 * (m4_T + m4_inf));
}

HarrisConstants compute_harris_constants(const Target& target, const Schedule& schedule,
                                         const Grid& grid,
                                         std::optional<Dissipativity> d0_opt,
                                         double r_multiplier) {
  if (!(r_multiplier > 1.0))
    throw std::invalid_argument("harris constants: r multiplier must exceed 1");
  const int d = dim(target);
  const Dissipativity d0 =
      d0_opt ? *d0_opt
             : dissipativity_check(target, 4096, 8.0 * std::sqrt(moment(target, schedule, 0.0, 2)),
                                   RngStream::root(0).split(rng_salt::kProbe));
  require_admissible(d0, schedule.alpha());

  HarrisConstants hc;
  hc.intervals.reserve(grid.steps());
  double alpha_star = 0.0;
  double b_star = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    IntervalConstants ic;
    ic.s = grid.times[k];
    ic.t = grid.times[k + 1];
    const DriftPair dp = drift_pair(schedule, d0, ic.s, ic.t, d);
    ic.gamma = dp.gamma;
    ic.beta_const = dp.beta_const;
    ic.r_c_sq = small_set_radius(dp);
    ic.r_sq = r_multiplier * ic.r_c_sq;
    const auto minor = minorization_epsilon(target, schedule, ic.s, ic.t, ic.r_sq);
    ic.epsilon = minor.epsilon;
    ic.log_epsilon = minor.log_epsilon;
    ic.epsilon_clamped = minor.clamped;
    if (ic.epsilon > 0.0) {
      const double alpha0 = 0.5 * ic.epsilon;
      const double eta_lo = ic.gamma + 2.0 * ic.beta_const / ic.r_sq;
      const double eta0 = 0.5 * (eta_lo + 1.0);
      const auto con = contraction(dp, ic.epsilon, ic.r_sq, alpha0, eta0);
      ic.b_weight = con.b_weight;
      ic.alpha_bar = con.alpha_bar;
    } else {
      // Certificate degenerates (typical for VP intervals deep in the
      // stationary regime, where the propagated drift rate reaches alpha/2):
      // the true factor 1 - eps/2 rounds to 1 and the weight to 0.
      ic.epsilon_underflow = true;
      ic.b_weight = 0.0;
      ic.alpha_bar = 1.0;
    }
    alpha_star = std::max(alpha_star, ic.alpha_bar);
    b_star = std::min(b_star, ic.b_weight);
    hc.intervals.push_back(ic);
  }
  hc.alpha_star = alpha_star;
  hc.b_star = b_star;
  hc.lambda_T = mixing_lambda(target, schedule);
  hc.cmix = cmix(target, schedule, hc.b_star);
  hc.bound_value = assemble_bound(grid, hc.alpha_star, hc.lambda_T, hc.cmix,
                                  std::vector<LocalErrors>(grid.steps()));
  return hc;
}

double assemble_bound(const Grid& grid, double alpha_star, double lambda_T, double cmix,
                      const std::vector<LocalErrors>& locals) {
  const std::size_t n = grid.steps();
  if (locals.size() != n)
    throw std::invalid_argument("assemble_bound: local error list length must equal N");
  double value = std::pow(alpha_star, static_cast<double>(n)) * lambda_T * cmix;
  for (std::size_t k = 1; k <= n; ++k) {
    const double delta = grid.deltas[k - 1];
    const auto& le = locals[k - 1];
    value += std::pow(alpha_star, static_cast<double>(n - k)) *
             (delta * le.c_disc + std::sqrt(delta) * le.c_net * le.score_err);
  }
  return value;
}

nlohmann::json harris_constants_to_json(const HarrisConstants& hc) {
  nlohmann::json j;
  nlohmann::json intervals = nlohmann::json::array();
  for (const auto& ic : hc.intervals) {
    nlohmann::json r;
    r["s"] = ic.s;
    r["t"] = ic.t;
    r["gamma"] = ic.gamma;
    r["beta"] = ic.beta_const;
    r["r_c_sq"] = ic.r_c_sq;
    r["r_sq"] = ic.r_sq;
    r["epsilon"] = ic.epsilon;
    r["log_epsilon"] = ic.log_epsilon;
    r["epsilon_clamped"] = ic.epsilon_clamped;
    r["epsilon_underflow"] = ic.epsilon_underflow;
    r["b_weight"] = ic.b_weight;
    r["alpha_bar"] = ic.alpha_bar;
    intervals.push_back(std::move(r));
  }
  j["intervals"] = std::move(intervals);
  std::size_t degenerate = 0;
  for (const auto& ic : hc.intervals)
    if (ic.epsilon_underflow) ++degenerate;
  j["degenerate_intervals"] = degenerate;
  j["alpha_star"] = hc.alpha_star;
  j["b_star"] = hc.b_star;
  j["LambdaT"] = hc.lambda_T;
  j["Cmix"] = hc.cmix;
  j["bound_value"] = hc.bound_value;
  return j;
}

}  // namespace harrisdiff
