#include "harrisdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "harrisdiff/parallel.hpp"
#include "harrisdiff/quadrature.hpp"

namespace harrisdiff {

EmpiricalCloud::EmpiricalCloud(MatrixXd samples) : samples_(std::move(samples)) {
  if (samples_.rows() < 2) throw std::invalid_argument("cloud: need at least 2 samples");
  mean_ = samples_.colwise().mean().transpose();
  const MatrixXd centered = samples_.rowwise() - mean_.transpose();
  cov_ = centered.transpose() * centered / static_cast<double>(samples_.rows() - 1);
  cov_ = 0.5 * (cov_ + cov_.transpose());
}

namespace {

void require_psd(const MatrixXd& c, const char* what) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(c);
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  if (es.eigenvalues().minCoeff() < -1e-10 * scale)
    throw std::invalid_argument(std::string(what) + ": covariance not PSD");
}

MatrixXd psd_sqrt(const MatrixXd& c) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (c + c.transpose()));
  VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double bures_w2_ordered(const VectorXd& m1, const MatrixXd& c1, const VectorXd& m2,
                        const MatrixXd& c2) {
  const MatrixXd root2 = psd_sqrt(c2);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(root2 * c1 * root2);
  const double cross = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double tr = c1.trace() + c2.trace() - 2.0 * cross;
  return std::sqrt(std::max(0.0, (m1 - m2).squaredNorm() + tr));
}

// lexicographic order on (mean, cov) entries; ties mean identical inputs
bool gaussian_less(const VectorXd& m1, const MatrixXd& c1, const VectorXd& m2,
                   const MatrixXd& c2) {
  for (Eigen::Index i = 0; i < m1.size(); ++i)
    if (m1[i] != m2[i]) return m1[i] < m2[i];
  for (Eigen::Index i = 0; i < c1.size(); ++i)
    if (c1.data()[i] != c2.data()[i]) return c1.data()[i] < c2.data()[i];
  return false;
}

}  // namespace

double bures_w2(const VectorXd& m1, const MatrixXd& c1, const VectorXd& m2,
                const MatrixXd& c2) {
  if (m1.size() != m2.size()) throw std::invalid_argument("bures_w2: dimension mismatch");
  require_psd(c1, "bures_w2");
  require_psd(c2, "bures_w2");
  // canonical argument order makes the distance exactly symmetric
  if (gaussian_less(m2, c2, m1, c1)) return bures_w2_ordered(m2, c2, m1, c1);
  return bures_w2_ordered(m1, c1, m2, c2);
}

namespace {

std::vector<double> subsample_sorted(const std::vector<double>& v, std::size_t m,
                                     RngStream rng) {
  // reservoir selection of m indices, then restore order
  std::vector<std::size_t> idx(m);
  for (std::size_t i = 0; i < m; ++i) idx[i] = i;
  for (std::size_t i = m; i < v.size(); ++i) {
    const std::size_t j = rng.next_u64() % (i + 1);
    if (j < m) idx[j] = i;
  }
  std::sort(idx.begin(), idx.end());
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) out[i] = v[idx[i]];
  return out;
}

}  // namespace

Sw1dResult sw_1d(const std::vector<double>& a_sorted, const std::vector<double>& b_sorted,
                 std::uint64_t seed) {
  if (a_sorted.empty() || b_sorted.empty())
    throw std::invalid_argument("sw_1d: empty sample list");
  if (!std::is_sorted(a_sorted.begin(), a_sorted.end()) ||
      !std::is_sorted(b_sorted.begin(), b_sorted.end()))
    throw std::invalid_argument("sw_1d: inputs must be sorted");

  Sw1dResult res;
  const std::vector<double>* a = &a_sorted;
  const std::vector<double>* b = &b_sorted;
  std::vector<double> tmp;
  if (a_sorted.size() != b_sorted.size()) {
    res.subsampled = true;
    const std::size_t m = std::min(a_sorted.size(), b_sorted.size());
    RngStream rng = RngStream::root(seed).split(rng_salt::kSubsample);
    if (a_sorted.size() > m) {
      tmp = subsample_sorted(a_sorted, m, rng);
      a = &tmp;
    } else {
      tmp = subsample_sorted(b_sorted, m, rng);
      b = &tmp;
    }
  }
  double acc = 0.0;
  const std::size_t n = a->size();
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = (*a)[i] - (*b)[i];
    acc += diff * diff;
  }
  res.value = std::sqrt(acc / static_cast<double>(n));
  return res;
}

double sliced_w2(const EmpiricalCloud& x, const EmpiricalCloud& y, const VectorXd& u,
                 std::uint64_t seed) {
  std::vector<double> px(x.size()), py(y.size());
  const VectorXd ax = x.samples() * u;
  const VectorXd ay = y.samples() * u;
  for (std::size_t i = 0; i < x.size(); ++i) px[i] = ax[static_cast<Eigen::Index>(i)];
  for (std::size_t i = 0; i < y.size(); ++i) py[i] = ay[static_cast<Eigen::Index>(i)];
  std::sort(px.begin(), px.end());
  std::sort(py.begin(), py.end());
  return sw_1d(px, py, seed).value;
}

namespace {

struct SliceWork {
  std::vector<std::size_t> ord_x, ord_y;
  std::vector<double> px, py;
};

// squared sliced distance and its gradient in u, with the order statistics
// matched pairwise
double slice_objective(const MatrixXd& xs, const MatrixXd& ys, const VectorXd& u,
                       SliceWork& w, VectorXd* grad) {
  const std::size_t n = static_cast<std::size_t>(xs.rows());
  const VectorXd ax = xs * u;
  const VectorXd ay = ys * u;
  for (std::size_t i = 0; i < n; ++i) w.ord_x[i] = w.ord_y[i] = i;
  std::sort(w.ord_x.begin(), w.ord_x.end(),
            [&](std::size_t a, std::size_t b) { return ax[a] < ax[b]; });
  std::sort(w.ord_y.begin(), w.ord_y.end(),
            [&](std::size_t a, std::size_t b) { return ay[a] < ay[b]; });
  double acc = 0.0;
  const Eigen::Index d = xs.cols();
  if (grad) grad->setZero();
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = ax[w.ord_x[i]] - ay[w.ord_y[i]];
    acc += diff * diff;
    if (grad) {
      const double scale = 2.0 * diff / static_cast<double>(n);
      double* g = grad->data();
      for (Eigen::Index j = 0; j < d; ++j)
        g[j] += scale * (xs(w.ord_x[i], j) - ys(w.ord_y[i], j));
    }
  }
  return acc / static_cast<double>(n);
}

}  // namespace

DirectionResult max_sw(const EmpiricalCloud& x, const EmpiricalCloud& y,
                       const MaxSwOptions& opt) {
  if (x.dim() != y.dim()) throw std::invalid_argument("max_sw: dimension mismatch");
  if (x.dim() == 0) throw std::invalid_argument("max_sw: zero-dimensional input");
  const int d = x.dim();

  // unequal clouds subsampled once so every restart sees the same pair
  const MatrixXd* xs = &x.samples();
  const MatrixXd* ys = &y.samples();
  MatrixXd xs_cut, ys_cut;
  const std::size_t n = std::min(x.size(), y.size());
  if (x.size() != y.size()) {
    RngStream rng = RngStream::root(opt.seed).split(rng_salt::kSubsample);
    std::vector<std::size_t> idx(std::max(x.size(), y.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = idx.size() - 1; i > 0; --i)
      std::swap(idx[i], idx[rng.next_u64() % (i + 1)]);
    if (x.size() > n) {
      xs_cut.resize(n, d);
      for (std::size_t i = 0; i < n; ++i) xs_cut.row(i) = x.samples().row(idx[i]);
      xs = &xs_cut;
    } else {
      ys_cut.resize(n, d);
      for (std::size_t i = 0; i < n; ++i) ys_cut.row(i) = y.samples().row(idx[i]);
      ys = &ys_cut;
    }
  }

  // informed starts for the first restarts: the mean gap and the loudest
  // pooled-covariance direction; remaining restarts start at random
  VectorXd mean_gap = VectorXd::Zero(d);
  VectorXd loudest = VectorXd::Zero(d);
  {
    const VectorXd mx = xs->colwise().mean().transpose();
    const VectorXd my = ys->colwise().mean().transpose();
    mean_gap = mx - my;
    const MatrixXd cx = (xs->rowwise() - mx.transpose()).transpose() *
                        (xs->rowwise() - mx.transpose());
    const MatrixXd cy = (ys->rowwise() - my.transpose()).transpose() *
                        (ys->rowwise() - my.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(cx + cy);
    loudest = es.eigenvectors().col(d - 1);
  }

  std::vector<DirectionResult> results(opt.restarts);
  const RngStream base = RngStream::root(opt.seed).split(rng_salt::kRestart);
  parallel_for(opt.restarts, opt.threads, [&](std::size_t r) {
    RngStream rng = base.split(r);
    VectorXd u(d);
    if (r == 0 && mean_gap.norm() > 1e-12) {
      u = mean_gap;
    } else if (r == 1) {
      u = loudest;
    } else {
      for (int i = 0; i < d; ++i) u[i] = rng.next_normal();
    }
    u /= u.norm();

    SliceWork work;
    work.ord_x.resize(n);
    work.ord_y.resize(n);
    VectorXd grad(d);
    // Adam ascent on the sphere (lr = opt.step); stops when the projected
    // update falls below opt.tol or the iteration cap is reached. The
    // landscape between finite clouds is rough, so the best iterate seen
    // along the trajectory is kept, not the final one.
    VectorXd m1 = VectorXd::Zero(d), m2 = VectorXd::Zero(d);
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;
    DirectionResult res;
    res.converged = false;
    VectorXd best_u = u;
    double best_obj = -1.0;
    std::size_t it = 0;
    for (; it < opt.max_iter; ++it) {
      const double obj = slice_objective(*xs, *ys, u, work, &grad);
      if (obj > best_obj) {
        best_obj = obj;
        best_u = u;
      }
      m1 = kBeta1 * m1 + (1.0 - kBeta1) * grad;
      m2 = kBeta2 * m2 + (1.0 - kBeta2) * grad.cwiseProduct(grad);
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(it + 1));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(it + 1));
      const VectorXd update =
          opt.step * (m1 / c1).cwiseQuotient(((m2 / c2).cwiseSqrt().array() + kAdamEps).matrix());
      VectorXd next = u + update;
      const double nn = next.norm();
      if (nn == 0.0) break;
      next /= nn;
      const double move = (next - u).norm();
      u = next;
      if (move < opt.tol) {
        res.converged = true;
        ++it;
        break;
      }
    }
    const double final_obj = slice_objective(*xs, *ys, u, work, nullptr);
    if (final_obj > best_obj) {
      best_obj = final_obj;
      best_u = u;
    }
    res.u = best_u;
    res.value = std::sqrt(best_obj);
    res.iterations = it;
    results[r] = std::move(res);
  });

  std::size_t best = 0;
  for (std::size_t r = 1; r < opt.restarts; ++r)
    if (results[r].value > results[best].value) best = r;
  return results[best];
}

namespace {

// (1 + b x^2)-weighted mass of amp*N(mean, sd^2) outside [-R, R]
double envelope_tail(const TailEnvelope& e, double b, double R) {
  auto upper = [&](double lo, double m) {
    const double z = (lo - m) / e.sd;
    const double q = 0.5 * std::erfc(z / std::numbers::sqrt2);
    const double phi = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    const double second = (m * m + e.sd * e.sd) * q + e.sd * (m + lo) * phi;
    return q + b * second;
  };
  // right tail plus mirrored left tail
  return e.amp * (upper(R, e.mean) + upper(R, -e.mean));
}

}  // namespace

double rho_b_1d(const std::function<double(double)>& p,
                const std::function<double(double)>& q, double b,
                const TailEnvelope& env_p, const TailEnvelope& env_q) {
  if (b < 0.0) throw std::invalid_argument("rho_b_1d: weight must be >= 0");
  constexpr double kTailTol = 1e-10;
  double R = 4.0;
  while (envelope_tail(env_p, b, R) + envelope_tail(env_q, b, R) > 0.5 * kTailTol) {
    R *= 1.5;
    if (R > 1e6)
      throw std::invalid_argument("rho_b_1d: envelope tails do not reach tolerance");
  }
  auto f = [&](double xv) { return (1.0 + b * xv * xv) * std::abs(p(xv) - q(xv)); };
  const double coarse = adaptive_simpson(f, -R, R, 1e-10);
  const double fine = adaptive_simpson(f, -R, R, 2.5e-11);
  if (std::abs(coarse - fine) > 1e-8 * std::max(1.0, std::abs(fine)))
    throw QuadratureAccuracyError("rho_b_1d: quadrature did not converge", fine);
  return fine;
}

}  // namespace harrisdiff
