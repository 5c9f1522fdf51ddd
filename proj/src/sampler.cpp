#include "harrisdiff/sampler.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "harrisdiff/parallel.hpp"
#include "harrisdiff/quadrature.hpp"
#include "harrisdiff/rng.hpp"

namespace harrisdiff {

void PerturbationSpec::validate(int d) const {
  if (direction.size() != d)
    throw std::invalid_argument("perturbation: direction dimension mismatch");
  if (std::abs(direction.norm() - 1.0) > 1e-12)
    throw std::invalid_argument("perturbation: direction must be a unit vector");
  if (magnitude < 0.0) throw std::invalid_argument("perturbation: magnitude must be >= 0");
}

namespace {

VectorXd perturbed_score(const SamplerConfig& cfg, std::size_t k, double forward_t,
                         const VectorXd& x) {
  VectorXd s = score_at(cfg.target, cfg.schedule, forward_t, x);
  const auto& p = cfg.perturbation;
  if (p && p->mode == PerturbationMode::ScoreStep && p->n_err == k &&
      p->magnitude != 0.0) {
    const double var = cfg.schedule.forward_moments(forward_t).var;
    s += (p->magnitude / var) * p->direction;
  }
  return s;
}

}  // namespace

VectorXd em_step(const VectorXd& x, std::size_t k, const SamplerConfig& cfg,
                 RngStream& rng) {
  if (k >= cfg.grid.steps()) throw std::invalid_argument("em_step: step index out of range");
  const double T = cfg.schedule.horizon();
  const double delta = cfg.grid.deltas[k];
  const double forward_t = T - cfg.grid.times[k];
  const VectorXd s = perturbed_score(cfg, k, forward_t, x);
  VectorXd next = x + delta * (cfg.schedule.alpha() * x + 2.0 * s);
  const double noise_sd = std::sqrt(2.0 * delta);
  for (Eigen::Index i = 0; i < next.size(); ++i) next[i] += noise_sd * rng.next_normal();
  if (!next.allFinite()) throw SamplerFault(k);
  return next;
}

MatrixXd run_chain_with_streams(const SamplerConfig& cfg, std::size_t n_samples,
                                RngStream noise_base, RngStream init_base) {
  if (n_samples == 0) throw std::invalid_argument("run_chain: n_samples must be >= 1");
  const int d = dim(cfg.target);
  if (cfg.perturbation) cfg.perturbation->validate(d);

  std::size_t start_index = 0;
  const ExplicitInit* explicit_init = std::get_if<ExplicitInit>(&cfg.init);
  if (explicit_init) {
    start_index = explicit_init->start_index;
    if (start_index > cfg.grid.steps())
      throw std::invalid_argument("run_chain: start index beyond grid");
    if (explicit_init->samples.cols() != d)
      throw std::invalid_argument("run_chain: init sample dimension mismatch");
    if (static_cast<std::size_t>(explicit_init->samples.rows()) != n_samples)
      throw std::invalid_argument("run_chain: init sample count mismatch");
  }

  VectorXd shift = VectorXd::Zero(d);
  if (cfg.perturbation && cfg.perturbation->mode == PerturbationMode::InitBias &&
      cfg.perturbation->magnitude != 0.0) {
    const auto& p = *cfg.perturbation;
    const double scale = p.init_scale == InitShiftScale::VarianceScaled
                             ? cfg.schedule.forward_moments(p.t_bias).var
                             : 1.0;
    shift = scale * p.magnitude * p.direction;
  }

  const double ref_sd = std::sqrt(cfg.schedule.reference_var());
  const std::size_t n_steps = cfg.grid.steps();
  MatrixXd out(n_samples, d);

  parallel_for(n_samples, cfg.threads, [&](std::size_t i) {
    VectorXd x(d);
    if (explicit_init) {
      x = explicit_init->samples.row(i).transpose();
    } else {
      RngStream init_rng = init_base.split(i);
      for (int j = 0; j < d; ++j) x[j] = ref_sd * init_rng.next_normal();
    }
    x += shift;
    RngStream rng = noise_base.split(i);
    for (std::size_t k = start_index; k < n_steps; ++k) x = em_step(x, k, cfg, rng);
    out.row(i) = x.transpose();
  });
  return out;
}

MatrixXd run_chain(const SamplerConfig& cfg, std::size_t n_samples) {
  const RngStream root = RngStream::root(cfg.seed);
  return run_chain_with_streams(cfg, n_samples, root.split(rng_salt::kChainNoise),
                                root.split(rng_salt::kInit));
}

GaussianBackwardKernel gaussian_backward_kernel(const GaussianTarget& target,
                                                const Schedule& schedule, double s,
                                                double t) {
  if (!(s < t)) throw std::invalid_argument("gaussian_backward_kernel: need s < t");
  const double T = schedule.horizon();
  if (s < 0.0 || t > T) throw std::invalid_argument("gaussian_backward_kernel: times outside grid");
  const double a = T - t, b = T - s;  // forward endpoints, a < b
  const int d = target.dim();
  const double alpha = schedule.alpha();

  const auto fa = schedule.forward_moments(a);
  const auto fb = schedule.forward_moments(b);
  const double pref = std::exp(-alpha * schedule.beta_integral(a, b));

  const MatrixXd& U = target.eigvecs();
  const VectorXd& lam = target.eigvals();
  VectorXd ea(d), eb(d);
  for (int i = 0; i < d; ++i) {
    ea[i] = fa.m * fa.m * lam[i] + fa.var;
    eb[i] = fb.m * fb.m * lam[i] + fb.var;
  }

  GaussianBackwardKernel k;
  VectorXd adiag(d), cdiag(d);
  for (int i = 0; i < d; ++i) {
    adiag[i] = pref * ea[i] / eb[i];
    cdiag[i] = ea[i] - pref * pref * ea[i] * ea[i] / eb[i];
  }
  k.A = U * adiag.asDiagonal() * U.transpose();
  k.cov = U * cdiag.asDiagonal() * U.transpose();
  k.cov = 0.5 * (k.cov + k.cov.transpose());

  // mu-shift: 2 e^{-alpha I} Sigma_{T-t} int_s^t beta_bar e^{alpha int} m Sigma_{T-r}^{-2} dr mu,
  // evaluated per eigendirection in forward time
  VectorXd odiag = VectorXd::Zero(d);
  const VectorXd zmu = U.transpose() * target.mean();
  for (int i = 0; i < d; ++i) {
    if (zmu[i] == 0.0) continue;
    auto integrand = [&](double w) {
      const auto fw = schedule.forward_moments(w);
      const double ew = fw.m * fw.m * lam[i] + fw.var;
      return schedule.beta_at(w) * std::exp(alpha * schedule.beta_integral(w, b)) * fw.m /
             (ew * ew);
    };
    odiag[i] = 2.0 * pref * ea[i] * integrate_refined(integrand, a, b, 1e-10);
  }
  k.offset = U * (odiag.asDiagonal() * zmu);
  return k;
}

VectorXd kernel_fixed_point(const GaussianBackwardKernel& kernel) {
  const int d = static_cast<int>(kernel.offset.size());
  return (MatrixXd::Identity(d, d) - kernel.A).colPivHouseholderQr().solve(kernel.offset);
}

KernelComparison kernel_vs_em(const GaussianTarget& target, const Schedule& schedule,
                              double s, double t, std::size_t n_steps,
                              const VectorXd& x0, std::size_t n_mc, std::uint64_t seed,
                              unsigned threads) {
  if (!(s < t)) throw std::invalid_argument("kernel_vs_em: need s < t");
  const double T = schedule.horizon();
  const int d = target.dim();

  // sub-grid on [s, t], uniform in reverse time
  Grid grid;
  grid.times.resize(n_steps + 1);
  grid.deltas.resize(n_steps);
  for (std::size_t k = 0; k <= n_steps; ++k)
    grid.times[k] = s + (t - s) * static_cast<double>(k) / static_cast<double>(n_steps);
  for (std::size_t k = 0; k < n_steps; ++k)
    grid.deltas[k] = schedule.beta_integral(T - grid.times[k + 1], T - grid.times[k]);

  SamplerConfig cfg(schedule, grid, Target(target));
  cfg.threads = threads;
  cfg.seed = seed;

  MatrixXd init(n_mc, d);
  for (std::size_t i = 0; i < n_mc; ++i) init.row(i) = x0.transpose();
  cfg.init = ExplicitInit{std::move(init), 0};

  const MatrixXd terminal = run_chain(cfg, n_mc);
  const VectorXd emp_mean = terminal.colwise().mean().transpose();
  const MatrixXd centered = terminal.rowwise() - emp_mean.transpose();
  const MatrixXd emp_cov =
      centered.transpose() * centered / static_cast<double>(n_mc - 1);

  const auto kernel = gaussian_backward_kernel(target, schedule, s, t);
  const VectorXd exact_mean = kernel.A * x0 + kernel.offset;

  KernelComparison cmp;
  cmp.mean_error = (emp_mean - exact_mean).norm();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(emp_cov - kernel.cov);
  cmp.cov_error = es.eigenvalues().cwiseAbs().maxCoeff();
  return cmp;
}

void write_samples_csv(const MatrixXd& samples, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  char buf[32];
  for (Eigen::Index r = 0; r < samples.rows(); ++r) {
    for (Eigen::Index c = 0; c < samples.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", samples(r, c));
      if (c) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

void write_samples_f64(const MatrixXd& samples, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  const std::uint32_t d = static_cast<std::uint32_t>(samples.cols());
  const std::uint32_t n = static_cast<std::uint32_t>(samples.rows());
  out.write(reinterpret_cast<const char*>(&d), 4);
  out.write(reinterpret_cast<const char*>(&n), 4);
  for (Eigen::Index r = 0; r < samples.rows(); ++r)
    for (Eigen::Index c = 0; c < samples.cols(); ++c) {
      const double v = samples(r, c);
      out.write(reinterpret_cast<const char*>(&v), 8);
    }
}

MatrixXd read_samples_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows[0].size())
      throw std::runtime_error("csv: ragged rows in '" + path + "'");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("csv: no data in '" + path + "'");
  MatrixXd m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[0].size(); ++c) m(r, c) = rows[r][c];
  return m;
}

}  // namespace harrisdiff
