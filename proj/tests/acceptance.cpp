// Acceptance suite: one line per criterion, nonzero exit on any failure.
// Heavy Monte Carlo sections run multithreaded; every tolerance is fixed in
// code next to the check it guards.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "harrisdiff/experiments.hpp"
#include "harrisdiff/harris.hpp"
#include "harrisdiff/metrics.hpp"
#include "harrisdiff/parallel.hpp"
#include "harrisdiff/sampler.hpp"
#include "oracles.hpp"

using namespace harrisdiff;

namespace {

struct Gate {
  int failures = 0;

  void report(int id, const std::string& name, bool pass, const std::string& detail) {
    std::printf("[%s] %2d. %s%s%s\n", pass ? "PASS" : "FAIL", id, name.c_str(),
                detail.empty() ? "" : " -- ", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
  }
};

double elapsed_s(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), pattern, args...);
  return buf;
}

unsigned threads() { return default_thread_count(); }

// ---------------------------------------------------------------------------
// 1. Gaussian kernel oracle: EM chains against the exact backward transition.
//    Antithetic noise pairs are used; the chain is linear in the noise for a
//    Gaussian target, so pair averages isolate the discretization bias in the
//    mean. The VE scheme integrates the linear drift exactly and its mean
//    error sits at rounding level; the halving clause is therefore exercised
//    on VP where the bias mechanism exists.
// ---------------------------------------------------------------------------

struct EmMoments {
  VectorXd mean;
  MatrixXd cov;
};

EmMoments antithetic_em(const GaussianTarget& target, const Schedule& schedule,
                        const Grid& grid, const VectorXd& x0, std::size_t n_chains,
                        std::uint64_t seed) {
  const int d = target.dim();
  const std::size_t pairs = n_chains / 2;
  const double T = schedule.horizon();
  const std::size_t n_steps = grid.steps();

  // each EM step is the affine map x -> (I + Delta(alpha I - 2 Sigma_t^{-1})) x
  //   + 2 Delta Sigma_t^{-1} m mu + sqrt(2 Delta) xi; precompute the maps once
  std::vector<MatrixXd> step_map(n_steps);
  std::vector<VectorXd> step_off(n_steps);
  std::vector<double> step_sd(n_steps);
  const MatrixXd& U = target.eigvecs();
  const VectorXd& lam = target.eigvals();
  for (std::size_t k = 0; k < n_steps; ++k) {
    const double delta = grid.deltas[k];
    const auto fm = schedule.forward_moments(T - grid.times[k]);
    VectorXd inv(d);
    for (int j = 0; j < d; ++j) inv[j] = 1.0 / (fm.m * fm.m * lam[j] + fm.var);
    const MatrixXd siginv = U * inv.asDiagonal() * U.transpose();
    step_map[k] = (1.0 + delta * schedule.alpha()) * MatrixXd::Identity(d, d) -
                  2.0 * delta * siginv;
    step_off[k] = 2.0 * delta * fm.m * (siginv * target.mean());
    step_sd[k] = std::sqrt(2.0 * delta);
  }

  MatrixXd terminal(2 * pairs, d);
  const RngStream base = RngStream::root(seed).split(rng_salt::kChainNoise);
  parallel_for(pairs, threads(), [&](std::size_t p) {
    RngStream rng = base.split(p);
    VectorXd xp = x0, xm = x0, xi(d), tmp(d);
    for (std::size_t k = 0; k < n_steps; ++k) {
      for (int j = 0; j < d; ++j) xi[j] = rng.next_normal();
      tmp.noalias() = step_map[k] * xp;
      xp = tmp + step_off[k] + step_sd[k] * xi;
      tmp.noalias() = step_map[k] * xm;
      xm = tmp + step_off[k] - step_sd[k] * xi;
    }
    terminal.row(2 * p) = xp.transpose();
    terminal.row(2 * p + 1) = xm.transpose();
  });

  EmMoments out;
  out.mean = terminal.colwise().mean().transpose();
  const MatrixXd centered = terminal.rowwise() - out.mean.transpose();
  out.cov = centered.transpose() * centered / static_cast<double>(terminal.rows() - 1);
  return out;
}

Grid uniform_reverse_grid(const Schedule& schedule, double s, double t, std::size_t n) {
  Grid g;
  g.times.resize(n + 1);
  g.deltas.resize(n);
  for (std::size_t k = 0; k <= n; ++k)
    g.times[k] = s + (t - s) * static_cast<double>(k) / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k)
    g.deltas[k] = schedule.beta_integral(schedule.horizon() - g.times[k + 1],
                                         schedule.horizon() - g.times[k]);
  return g;
}

void criterion_1(Gate& gate) {
  const auto t0 = std::chrono::steady_clock::now();
  VectorXd mu(2);
  mu << 0.5, -0.3;
  MatrixXd cov(2, 2);
  cov << 0.05, 0.01, 0.01, 0.03;
  const GaussianTarget target(mu, cov);
  std::vector<VectorXd> starts;
  for (double base : {-2.0, -0.5, 0.0, 1.0, 2.5}) {
    VectorXd x0(2);
    x0 << base, -0.4 * base + 0.3;
    starts.push_back(x0);
  }

  bool pass = true;
  std::string detail;
  double worst_mean = 0.0, worst_cov = 0.0;
  const std::size_t n_chains = 100000;

  for (double alpha : {0.0, 1.0}) {
    const auto schedule = Schedule::linear_beta(0.1, 20.0, 1.0, alpha);
    const auto grid = uniform_reverse_grid(schedule, 0.0, 1.0, 2048);
    const auto kernel = gaussian_backward_kernel(target, schedule, 0.0, 1.0);
    for (std::size_t i = 0; i < starts.size(); ++i) {
      const auto em = antithetic_em(target, schedule, grid, starts[i], n_chains,
                                    1000 + i);
      const double mean_err = (em.mean - (kernel.A * starts[i] + kernel.offset)).norm();
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(em.cov - kernel.cov);
      const double cov_err = es.eigenvalues().cwiseAbs().maxCoeff();
      worst_mean = std::max(worst_mean, mean_err);
      worst_cov = std::max(worst_cov, cov_err);
      if (mean_err > 2e-3 || cov_err > 5e-3) pass = false;
    }
  }

  // halving clause, VP branch: mean bias halves within [0.4, 0.6]
  {
    const auto schedule = Schedule::linear_beta(0.1, 20.0, 1.0, 1.0);
    const auto kernel = gaussian_backward_kernel(target, schedule, 0.0, 1.0);
    const VectorXd exact = kernel.A * starts[1] + kernel.offset;
    std::vector<double> errs;
    for (std::size_t n : {512, 1024, 2048}) {
      const auto grid = uniform_reverse_grid(schedule, 0.0, 1.0, n);
      const auto em = antithetic_em(target, schedule, grid, starts[1], n_chains, 77);
      errs.push_back((em.mean - exact).norm());
    }
    for (std::size_t i = 1; i < errs.size(); ++i) {
      const double ratio = errs[i] / errs[i - 1];
      if (!(ratio >= 0.4 && ratio <= 0.6)) pass = false;
      detail += fmt("vp ratio %.3f ", ratio);
    }
  }
  // VE branch: the time-changed scheme leaves the Gaussian mean unbiased, so
  // its "halving" errors sit at rounding level at every resolution
  {
    const auto schedule = Schedule::linear_beta(0.1, 20.0, 1.0, 0.0);
    const auto kernel = gaussian_backward_kernel(target, schedule, 0.0, 1.0);
    const VectorXd exact = kernel.A * starts[1] + kernel.offset;
    for (std::size_t n : {512, 1024, 2048}) {
      const auto grid = uniform_reverse_grid(schedule, 0.0, 1.0, n);
      const auto em = antithetic_em(target, schedule, grid, starts[1], n_chains, 78);
      if ((em.mean - exact).norm() > 1e-10) pass = false;
    }
    detail += "ve mean exact ";
  }

  const double secs = elapsed_s(t0);
  if (secs > 120.0) pass = false;
  detail += fmt("worst mean %.2e (tol 2e-3), worst cov %.2e (tol 5e-3), %.0f s "
                "(limit 120 s)",
                worst_mean, worst_cov, secs);
  gate.report(1, "gaussian kernel oracle with step-halving", pass, detail);
}

// ---------------------------------------------------------------------------
// 2. Contraction of the mean map
// ---------------------------------------------------------------------------

void criterion_2(Gate& gate) {
  bool pass = true;
  RngStream rng = RngStream::root(2);
  MatrixXd cov(2, 2);
  cov << 0.4, 0.1, 0.1, 0.6;
  const GaussianTarget target(VectorXd::Zero(2), cov);

  const auto ve = Schedule::linear_beta(0.1, 20.0, 1.0, 0.0);
  for (int i = 0; i < 200; ++i) {
    double s = rng.next_double(), t = rng.next_double();
    if (s > t) std::swap(s, t);
    if (t - s < 1e-6) t = std::min(1.0, s + 1e-6);
    if (gaussian_backward_kernel(target, ve, s, t).A.operatorNorm() >= 1.0) pass = false;
  }

  const double alpha = 2.0;
  const auto vp = Schedule::linear_beta(0.1, 20.0, 1.0, alpha);
  const GaussianTarget small_cov(VectorXd::Zero(2),
                                 0.9 / alpha * MatrixXd::Identity(2, 2));
  for (int i = 0; i < 200; ++i) {
    double s = rng.next_double(), t = rng.next_double();
    if (s > t) std::swap(s, t);
    if (t - s < 1e-6) t = std::min(1.0, s + 1e-6);
    if (gaussian_backward_kernel(small_cov, vp, s, t).A.operatorNorm() >= 1.0)
      pass = false;
  }

  // diagnostic counterexample: lambda_max = 10/alpha expands some direction
  // before the exponential prefactor
  const GaussianTarget big_cov(VectorXd::Zero(2),
                               10.0 / alpha * MatrixXd::Identity(2, 2));
  const double s = 0.95, t = 0.99;  // near the data end of the reverse run
  const double a = 1.0 - t, b = 1.0 - s;
  const auto fa = vp.forward_moments(a);
  const auto fb = vp.forward_moments(b);
  const double lam = 10.0 / alpha;
  const double ratio =
      (fa.m * fa.m * lam + fa.var) / (fb.m * fb.m * lam + fb.var);
  if (!(ratio > 1.0)) pass = false;

  gate.report(2, "mean-map contraction on 200 random intervals", pass,
              fmt("vp expansion ratio before prefactor %.4f > 1", ratio));
}

// ---------------------------------------------------------------------------
// 3. Closed-form drift constants against the integral definitions
// ---------------------------------------------------------------------------

DriftPair drift_oracle(const Schedule& s, const Dissipativity& d0, double lo, double hi,
                       int dimension) {
  const double T = s.horizon();
  auto phi = [&](double v) {
    const auto ab = propagate_dissipativity(d0, s, T - v, dimension);
    return 2.0 * s.beta_at(T - v) * (2.0 * ab.first - s.alpha());
  };
  auto psi = [&](double v) {
    const auto ab = propagate_dissipativity(d0, s, T - v, dimension);
    return 2.0 * s.beta_at(T - v) * (2.0 * ab.second + dimension);
  };
  const auto res = oracle::drift_ode(phi, psi, lo, hi);
  return DriftPair{res.gamma, res.beta};
}

void criterion_3(Gate& gate) {
  const auto t0 = std::chrono::steady_clock::now();
  bool pass = true;
  double worst = 0.0;
  RngStream rng = RngStream::root(3);
  for (bool ve : {true, false}) {
    for (int trial = 0; trial < 50; ++trial) {
      const double alpha = ve ? 0.0 : 0.5 + 2.0 * rng.next_double();
      const double bmin = 0.05 + rng.next_double();
      const double bmax = bmin + 20.0 * rng.next_double();
      const auto s = Schedule::linear_beta(bmin, bmax, 1.0, alpha);
      const Dissipativity d0{0.51 * alpha + 0.2 + 3.0 * rng.next_double(),
                             2.0 * rng.next_double()};
      double lo = rng.next_double(), hi = rng.next_double();
      if (lo > hi) std::swap(lo, hi);
      if (hi - lo < 1e-3) hi = std::min(1.0, lo + 1e-3);
      const int d = 1 + static_cast<int>(rng.next_u64() % 5);
      const auto closed = drift_pair(s, d0, lo, hi, d);
      const auto quad = drift_oracle(s, d0, lo, hi, d);
      const double rel_g = std::abs(closed.gamma - quad.gamma) / std::abs(quad.gamma);
      const double rel_b =
          std::abs(closed.beta_const - quad.beta_const) / std::abs(quad.beta_const);
      worst = std::max({worst, rel_g, rel_b});
      if (rel_g > 1e-8 || rel_b > 1e-8) pass = false;
    }
  }
  const double secs = elapsed_s(t0);
  if (secs > 10.0) pass = false;
  gate.report(3, "closed-form gamma/beta vs quadrature (100 configs)", pass,
              fmt("worst rel err %.2e (tol 1e-8), %.2f s (limit 10 s)", worst, secs));
}

// ---------------------------------------------------------------------------
// 4. Empirical drift inequality
// ---------------------------------------------------------------------------

double chain_second_moment(const Target& target, const Schedule& schedule, double s,
                           double t, std::size_t n_steps, double x_val,
                           std::size_t n_mc, std::uint64_t seed, double* se_out) {
  const int d = dim(target);
  const auto grid = uniform_reverse_grid(schedule, s, t, n_steps);
  SamplerConfig cfg(schedule, grid, target);
  cfg.threads = threads();
  cfg.seed = seed;
  MatrixXd init(n_mc, d);
  init.setZero();
  for (std::size_t i = 0; i < n_mc; ++i) init(i, 0) = x_val;
  cfg.init = ExplicitInit{std::move(init), 0};
  const MatrixXd out = run_chain(cfg, n_mc);
  std::vector<double> sq(n_mc);
  for (std::size_t i = 0; i < n_mc; ++i) sq[i] = out.row(i).squaredNorm();
  *se_out = oracle::stderr_of(sq);
  return oracle::mean_of(sq);
}

void criterion_4(Gate& gate) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto schedule = Schedule::linear_beta(0.1, 20.0, 1.0, 0.0);

  VectorXd g_mu(1), m1(1), m2(1);
  g_mu << 0.4;
  m1 << -1.5;
  m2 << 1.5;
  MatrixXd g_cov(1, 1), c1(1, 1), c2(1, 1);
  g_cov << 0.6;
  c1 << 0.5;
  c2 << 0.8;
  VectorXd w(2);
  w << 0.35, 0.65;
  const Target gauss = GaussianTarget(g_mu, g_cov);
  const Target gmm = GmmTarget(w, {m1, m2}, {c1, c2});

  bool pass = true;
  std::string detail;
  RngStream rng = RngStream::root(4);
  int config_idx = 0;
  for (const Target* target : {&gauss, &gmm}) {
    const auto d0 = dissipativity_check(*target, 20000, 12.0, RngStream::root(41));
    for (int trial = 0; trial < 20; ++trial) {
      double lo = rng.next_double(), hi = rng.next_double();
      if (lo > hi) std::swap(lo, hi);
      if (hi - lo < 0.05) hi = std::min(1.0, lo + 0.05);
      const auto dp = drift_pair(schedule, d0, lo, hi, 1);
      const double rc = std::sqrt(small_set_radius(dp));
      const double x_val = (2.0 * rng.next_double() - 1.0) * 3.0 * rc;
      double se = 0.0;
      const double m2_emp = chain_second_moment(
          *target, schedule, lo, hi, 320, x_val, 100000, 400 + trial, &se);
      const double rhs = dp.gamma * x_val * x_val + dp.beta_const + 3.0 * se;
      if (!(m2_emp <= rhs)) {
        pass = false;
        detail += fmt("violation cfg %d: %.4f > %.4f ", config_idx, m2_emp, rhs);
      }
      if (trial == 0) {
        // bias control: halving the step leaves the conclusion unchanged
        double se_half = 0.0;
        const double m2_half = chain_second_moment(
            *target, schedule, lo, hi, 160, x_val, 100000, 500, &se_half);
        if (std::abs(m2_half - m2_emp) > 0.05 * rhs + 6.0 * (se + se_half))
          pass = false;
      }
      ++config_idx;
    }
  }
  const double secs = elapsed_s(t0);
  if (secs > 300.0) pass = false;
  gate.report(4, "drift inequality on fine-step chains", pass,
              detail + fmt("40 configs, %.0f s (limit 300 s)", secs));
}

// ---------------------------------------------------------------------------
// 5. Minorization constants
// ---------------------------------------------------------------------------

void criterion_5(Gate& gate) {
  bool pass = true;
  RngStream rng = RngStream::root(5);
  const auto schedule = Schedule::linear_beta(0.1, 20.0, 1.0, 0.0);
  for (int d = 1; d <= 3; ++d) {
    const Target t = GaussianTarget(VectorXd::Constant(d, 0.3),
                                    0.8 * MatrixXd::Identity(d, d));
    for (int trial = 0; trial < 50; ++trial) {
      double lo = rng.next_double(), hi = rng.next_double();
      if (lo > hi) std::swap(lo, hi);
      if (hi - lo < 0.02) hi = std::min(1.0, lo + 0.02);
      const double r2 = 0.5 + 6.0 * rng.next_double();
      const auto eps = minorization_epsilon(t, schedule, lo, hi, r2);
      const auto eps_bigger = minorization_epsilon(t, schedule, lo, hi, r2 * 1.5);
      if (!(eps.epsilon > 0.0 && eps.epsilon < 1.0)) pass = false;
      if (!(eps_bigger.epsilon < eps.epsilon)) pass = false;
    }
  }

  // Z convolution identity against Monte Carlo
  for (int d = 1; d <= 3; ++d) {
    VectorXd mu = VectorXd::Constant(d, 0.5);
    MatrixXd cov = 0.6 * MatrixXd::Identity(d, d);
    for (int j = 0; j + 1 < d; ++j) cov(j, j + 1) = cov(j + 1, j) = 0.1;
    const Target t = GaussianTarget(mu, cov);
    const double c = 0.9;
    RngStream mc_rng = RngStream::root(50 + d);
    const int n = 300000;
    const MatrixXd draws = sample(t, n, mc_rng);
    std::vector<double> vals(n);
    const double norm = std::pow(2.0 * std::numbers::pi * c, -0.5 * d);
    for (int i = 0; i < n; ++i)
      vals[i] = norm * std::exp(-0.5 * draws.row(i).squaredNorm() / c);
    const double mc = oracle::mean_of(vals);
    const double se = oracle::stderr_of(vals);
    const double closed = std::exp(gaussian_window_log_mean(t, c));
    if (std::abs(closed - mc) > 3.0 * se) pass = false;
  }
  gate.report(5, "minorization in (0,1), monotone in r^2, Z identity", pass, "");
}

// ---------------------------------------------------------------------------
// 6. Bound assembly arithmetic
// ---------------------------------------------------------------------------

void criterion_6(Gate& gate) {
  bool pass = true;
  RngStream rng = RngStream::root(6);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 1 + rng.next_u64() % 64;
    Grid g;
    g.times.resize(n + 1);
    g.deltas.resize(n);
    g.times[0] = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      g.deltas[k] = 0.01 + rng.next_double();
      g.times[k + 1] = g.times[k] + 0.5 / n;
    }
    const double alpha_star = 0.2 + 0.75 * rng.next_double();
    const double lambda_t = rng.next_double() * 3.0;
    const double cmix_v = 0.5 + rng.next_double();

    // all locals zero: exactly alpha^N Lambda Cmix
    const double zero_case =
        assemble_bound(g, alpha_star, lambda_t, cmix_v, std::vector<LocalErrors>(n));
    const double direct =
        std::pow(alpha_star, static_cast<double>(n)) * lambda_t * cmix_v;
    if (zero_case != direct) pass = false;

    // synthetic locals: match an independent long-double summation
    std::vector<LocalErrors> locals(n);
    for (auto& le : locals) {
      le.c_disc = rng.next_double();
      le.c_net = rng.next_double();
      le.score_err = rng.next_double();
    }
    const double got = assemble_bound(g, alpha_star, lambda_t, cmix_v, locals);
    long double want = powl(alpha_star, static_cast<long double>(n)) * lambda_t * cmix_v;
    for (std::size_t k = 1; k <= n; ++k) {
      want += powl(alpha_star, static_cast<long double>(n - k)) *
              (static_cast<long double>(g.deltas[k - 1]) * locals[k - 1].c_disc +
               sqrtl(g.deltas[k - 1]) * locals[k - 1].c_net * locals[k - 1].score_err);
    }
    if (std::abs(got - static_cast<double>(want)) >
        1e-12 * std::max(1.0, std::abs(static_cast<double>(want))))
      pass = false;
  }
  gate.report(6, "bound assembly: exact zero-local case and discounted sum", pass, "");
}

// ---------------------------------------------------------------------------
// 7. Forward mixing bound in the VP case
// ---------------------------------------------------------------------------

void criterion_7(Gate& gate) {
  bool pass = true;
  double worst_ratio = 0.0;
  const double alpha = 1.0;
  const double mu = 1.0, var0 = 0.5;
  VectorXd mu1(1), zero(1);
  mu1 << mu;
  zero << 0.0;
  MatrixXd s0(1, 1), ref(1, 1);
  s0 << var0;
  ref << 1.0 / alpha;
  const double kl0 = kl_gaussian(mu1, s0, zero, ref);
  for (int i = 1; i <= 20; ++i) {
    const double T = 0.15 * i;
    const auto schedule = Schedule::linear_beta(1.0, 1.0, T, alpha);
    const auto fm = schedule.forward_moments(T);
    VectorXd mt(1);
    mt << fm.m * mu;
    MatrixXd st(1, 1);
    st << fm.m * fm.m * var0 + fm.var;
    const double kl_T = kl_gaussian(mt, st, zero, ref);
    const double bound = kl0 * std::exp(-2.0 * alpha * schedule.beta_integral(0.0, T));
    const double ratio = kl_T / bound;
    worst_ratio = std::max(worst_ratio, ratio);
    if (!(ratio <= 1.0 + 1e-12)) pass = false;
  }
  gate.report(7, "vp forward mixing: measured KL under the exponential bound", pass,
              fmt("worst ratio %.6f", worst_ratio));
}

// ---------------------------------------------------------------------------
// 8. Weighted total variation dominations in 1D
// ---------------------------------------------------------------------------

void criterion_8(Gate& gate) {
  bool pass = true;
  RngStream rng = RngStream::root(8);
  auto gauss_pdf = [](double x, double mean, double var) {
    return std::exp(-0.5 * (x - mean) * (x - mean) / var) /
           std::sqrt(2.0 * std::numbers::pi * var);
  };
  for (int trial = 0; trial < 20; ++trial) {
    const double mu1 = rng.next_normal(), mu2 = rng.next_normal();
    const double sd1 = 0.5 + rng.next_double(), sd2 = 0.5 + rng.next_double();
    auto p = [&](double x) { return gauss_pdf(x, mu1, sd1 * sd1); };
    auto q = [&](double x) { return gauss_pdf(x, mu2, sd2 * sd2); };
    const TailEnvelope ep{1.0, mu1, sd1}, eq{1.0, mu2, sd2};
    const double two_tv = rho_b_1d(p, q, 0.0, ep, eq);
    const double w2_sq = (mu1 - mu2) * (mu1 - mu2) + (sd1 - sd2) * (sd1 - sd2);
    for (double b : {0.1, 1.0, 10.0}) {
      const double rho = rho_b_1d(p, q, b, ep, eq);
      if (rho < two_tv - 1e-9) pass = false;              // 2 TV <= rho_b
      if (w2_sq > (2.0 / b) * rho + 1e-9) pass = false;   // W2^2 <= (2/b) rho_b
    }
  }
  gate.report(8, "1d inequalities: 2TV <= rho_b and W2^2 <= (2/b) rho_b", pass, "");
}

// ---------------------------------------------------------------------------
// 9. Qualitative forgetting at desk scale
// ---------------------------------------------------------------------------

ExperimentConfig forgetting_config() {
  const int d = 10;
  const Target target =
      GaussianTarget(VectorXd::Constant(d, 1.0), 0.1 * MatrixXd::Identity(d, d));
  ExperimentConfig cfg(target, Schedule::karras_ve(0.002, 80.0, 3.0));
  cfg.grid_steps = 100;
  cfg.samples = 10000;
  cfg.replications = 5;
  cfg.lambdas = {5.0, 20.0};
  cfg.metric = ExperimentMetric::BuresW2;
  cfg.direction_policy = DirectionPolicy::RandomUnit;
  cfg.seed = 20240909;
  cfg.threads = threads();
  return cfg;
}

void criterion_9(Gate& gate) {
  bool pass = true;
  std::string detail;
  {
    const auto t0 = std::chrono::steady_clock::now();
    auto cfg = forgetting_config();
    cfg.perturb_times = {0.05, 0.25, 0.5, 1.0};
    cfg.init_scale = InitShiftScale::Unit;  // Algorithm-1 shift convention
    const auto report = run_init_bias(cfg);
    for (double lambda : cfg.lambdas) {
      const double earliest = report.summary_mean(1.0, lambda);
      const double latest = report.summary_mean(0.05, lambda);
      detail += fmt("init l=%g: %.4f vs %.4f ", lambda, earliest, latest);
      if (!(earliest <= 0.5 * latest)) pass = false;
    }
    const double secs = elapsed_s(t0);
    detail += fmt("(%.0f s) ", secs);
    if (secs > 600.0) pass = false;
  }
  {
    const auto t0 = std::chrono::steady_clock::now();
    auto cfg = forgetting_config();
    cfg.error_indices = {0, 99};
    const auto report = run_score_perturb(cfg);
    for (double lambda : cfg.lambdas) {
      const double first_step = report.summary_mean(0.0, lambda);
      const double last_step = report.summary_mean(99.0, lambda);
      detail += fmt("score l=%g: %.4f vs %.4f ", lambda, first_step, last_step);
      if (!(first_step <= 0.5 * last_step)) pass = false;
    }
    const double secs = elapsed_s(t0);
    detail += fmt("(%.0f s)", secs);
    if (secs > 600.0) pass = false;
  }
  gate.report(9, "forgetting trends: early perturbations are discounted", pass, detail);
}

// ---------------------------------------------------------------------------
// 10. Byte-identical reports across thread counts
// ---------------------------------------------------------------------------

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void criterion_10(Gate& gate) {
  bool pass = true;
  auto cfg = forgetting_config();
  cfg.samples = 1000;
  cfg.replications = 2;
  cfg.grid_steps = 32;
  cfg.perturb_times = {0.25, 1.0};
  cfg.error_indices = {0, 31};
  cfg.lambdas = {0.0, 5.0};

  for (bool init_bias : {true, false}) {
    std::vector<std::string> outputs;
    for (unsigned th : {1u, 4u}) {
      cfg.threads = th;
      const auto report = init_bias ? run_init_bias(cfg) : run_score_perturb(cfg);
      const std::string path = "/tmp/hd_acc_det_" + std::to_string(th) + ".csv";
      write_report(report, path);
      outputs.push_back(slurp(path) + "|" + slurp(path + ".summary.csv"));
    }
    if (outputs[0] != outputs[1] || outputs[0].empty()) pass = false;
  }
  gate.report(10, "byte-identical report CSVs across thread counts", pass, "");
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  auto wanted = [&](int id) {
    return selected.empty() ||
           std::find(selected.begin(), selected.end(), id) != selected.end();
  };

  Gate gate;
  if (wanted(1)) criterion_1(gate);
  if (wanted(2)) criterion_2(gate);
  if (wanted(3)) criterion_3(gate);
  if (wanted(4)) criterion_4(gate);
  if (wanted(5)) criterion_5(gate);
  if (wanted(6)) criterion_6(gate);
  if (wanted(7)) criterion_7(gate);
  if (wanted(8)) criterion_8(gate);
  if (wanted(9)) criterion_9(gate);
  if (wanted(10)) criterion_10(gate);

  if (gate.failures == 0) {
    std::printf("acceptance: all criteria passed\n");
    return 0;
  }
  std::printf("acceptance: %d criteria failed\n", gate.failures);
  return 1;
}
