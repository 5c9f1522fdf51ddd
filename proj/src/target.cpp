#include "harrisdiff/target.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace harrisdiff {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // ln(2*pi)

void require_spd(const MatrixXd& cov, const char* what) {
  if (cov.rows() != cov.cols()) throw std::invalid_argument(std::string(what) + ": cov not square");
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw std::invalid_argument(std::string(what) + ": cov not symmetric");
}

Eigen::SelfAdjointEigenSolver<MatrixXd> decompose(const MatrixXd& cov, const char* what) {
  require_spd(cov, what);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (cov + cov.transpose()));
  if (es.info() != Eigen::Success)
    throw std::runtime_error(std::string(what) + ": eigendecomposition failed");
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw std::invalid_argument(std::string(what) + ": cov not positive definite");
  return es;
}

// One mixture component pushed to time t: N(m*mu, m^2 Sigma + v I). All
// time-t quantities reuse the eigenbasis of Sigma.
struct ComponentView {
  const VectorXd* mu;
  const MatrixXd* U;
  const VectorXd* lambda;
  double log_weight;
};

std::vector<ComponentView> components_of(const Target& target) {
  std::vector<ComponentView> out;
  if (const auto* g = std::get_if<GaussianTarget>(&target)) {
    out.push_back({&g->mean(), &g->eigvecs(), &g->eigvals(), 0.0});
  } else {
    const auto& gmm = std::get<GmmTarget>(target);
    out.reserve(gmm.components());
    for (int i = 0; i < gmm.components(); ++i)
      out.push_back({&gmm.mean(i), &gmm.eigvecs(i), &gmm.eigvals(i),
                     std::log(gmm.weights()[i])});
  }
  return out;
}

double component_log_density(const ComponentView& c, double m, double v,
                             const VectorXd& x) {
  const int d = static_cast<int>(x.size());
  const VectorXd z = c.U->transpose() * (x - m * (*c.mu));
  double quad = 0.0, logdet = 0.0;
  for (int i = 0; i < d; ++i) {
    const double ev = m * m * (*c.lambda)[i] + v;
    quad += z[i] * z[i] / ev;
    logdet += std::log(ev);
  }
  return -0.5 * (d * kLog2Pi + logdet + quad);
}

}  // namespace

GaussianTarget::GaussianTarget(VectorXd mean, MatrixXd cov)
    : mean_(std::move(mean)), cov_(std::move(cov)) {
  if (mean_.size() != cov_.rows())
    throw std::invalid_argument("gaussian target: mean/cov dimension mismatch");
  auto es = decompose(cov_, "gaussian target");
  eigvecs_ = es.eigenvectors();
  eigvals_ = es.eigenvalues();
}

GmmTarget::GmmTarget(VectorXd weights, std::vector<VectorXd> means,
                     std::vector<MatrixXd> covs)
    : weights_(std::move(weights)), means_(std::move(means)), covs_(std::move(covs)) {
  const auto k = static_cast<std::size_t>(weights_.size());
  if (k == 0 || means_.size() != k || covs_.size() != k)
    throw std::invalid_argument("gmm target: component count mismatch");
  if (std::abs(weights_.sum() - 1.0) > 1e-12)
    throw std::invalid_argument("gmm target: weights must sum to 1");
  if (weights_.minCoeff() <= 0.0)
    throw std::invalid_argument("gmm target: weights must be positive");
  eigvecs_.reserve(k);
  eigvals_.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (means_[i].size() != means_[0].size() || covs_[i].rows() != means_[0].size())
      throw std::invalid_argument("gmm target: inconsistent dimensions");
    auto es = decompose(covs_[i], "gmm target");
    eigvecs_.push_back(es.eigenvectors());
    eigvals_.push_back(es.eigenvalues());
  }
}

int dim(const Target& target) {
  return std::visit([](const auto& t) { return t.dim(); }, target);
}

MatrixXd sample(const Target& target, std::size_t n, RngStream& rng) {
  if (n == 0) throw std::invalid_argument("sample: n must be >= 1");
  const int d = dim(target);
  MatrixXd out(n, d);
  const auto comps = components_of(target);
  const GmmTarget* gmm = std::get_if<GmmTarget>(&target);
  if (gmm && gmm->components() == 1) gmm = nullptr;  // no categorical draw needed
  VectorXd z(d);
  for (std::size_t row = 0; row < n; ++row) {
    int pick = 0;
    if (gmm) {
      double u = rng.next_double(), acc = 0.0;
      for (int i = 0; i < gmm->components(); ++i) {
        acc += gmm->weights()[i];
        if (u <= acc || i == gmm->components() - 1) {
          pick = i;
          break;
        }
      }
    }
    const auto& c = comps[pick];
    for (int i = 0; i < d; ++i) z[i] = rng.next_normal() * std::sqrt((*c.lambda)[i]);
    out.row(row) = (*c.mu + (*c.U) * z).transpose();
  }
  return out;
}

VectorXd score_at(const GaussianTarget& target, const Schedule& schedule, double t,
                  const VectorXd& x) {
  if (!x.allFinite()) throw std::invalid_argument("score_at: non-finite input");
  const auto fm = schedule.forward_moments(t);
  const int d = target.dim();
  VectorXd z = target.eigvecs().transpose() * (x - fm.m * target.mean());
  for (int i = 0; i < d; ++i) z[i] /= fm.m * fm.m * target.eigvals()[i] + fm.var;
  return -(target.eigvecs() * z);
}

VectorXd score_at(const GmmTarget& target, const Schedule& schedule, double t,
                  const VectorXd& x) {
  if (!x.allFinite()) throw std::invalid_argument("score_at: non-finite input");
  const auto fm = schedule.forward_moments(t);
  const int d = target.dim();
  const int k = target.components();

  if (k == 1) {
    VectorXd z = target.eigvecs(0).transpose() * (x - fm.m * target.mean(0));
    for (int i = 0; i < d; ++i) z[i] /= fm.m * fm.m * target.eigvals(0)[i] + fm.var;
    return -(target.eigvecs(0) * z);
  }

  // responsibilities via log-sum-exp; negligible components flushed to zero
  std::vector<double> logits(k);
  double top = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < k; ++i) {
    const ComponentView c{&target.mean(i), &target.eigvecs(i), &target.eigvals(i),
                          std::log(target.weights()[i])};
    logits[i] = c.log_weight + component_log_density(c, fm.m, fm.var, x);
    top = std::max(top, logits[i]);
  }
  double norm = 0.0;
  std::vector<double> resp(k, 0.0);
  for (int i = 0; i < k; ++i) {
    const double rel = logits[i] - top;
    if (rel > -700.0) {
      resp[i] = std::exp(rel);
      norm += resp[i];
    }
  }
  VectorXd score = VectorXd::Zero(d);
  VectorXd z(d);
  for (int i = 0; i < k; ++i) {
    if (resp[i] == 0.0) continue;
    z.noalias() = target.eigvecs(i).transpose() * (x - fm.m * target.mean(i));
    for (int j = 0; j < d; ++j) z[j] /= fm.m * fm.m * target.eigvals(i)[j] + fm.var;
    score.noalias() -= (resp[i] / norm) * (target.eigvecs(i) * z);
  }
  return score;
}

VectorXd score_at(const Target& target, const Schedule& schedule, double t,
                  const VectorXd& x) {
  return std::visit(
      [&](const auto& concrete) { return score_at(concrete, schedule, t, x); }, target);
}

double log_density_at(const Target& target, const Schedule& schedule, double t,
                      const VectorXd& x) {
  const auto fm = schedule.forward_moments(t);
  const auto comps = components_of(target);
  double top = -std::numeric_limits<double>::infinity();
  std::vector<double> logits(comps.size());
  for (std::size_t i = 0; i < comps.size(); ++i) {
    logits[i] = comps[i].log_weight + component_log_density(comps[i], fm.m, fm.var, x);
    top = std::max(top, logits[i]);
  }
  double acc = 0.0;
  for (double l : logits) acc += std::exp(l - top);
  return top + std::log(acc);
}

double density_sup_norm(const Target& target) {
  const auto comps = components_of(target);
  const int d = dim(target);
  double total = 0.0;
  for (const auto& c : comps) {
    double logdet = 0.0;
    for (int i = 0; i < d; ++i) logdet += std::log((*c.lambda)[i]);
    total += std::exp(c.log_weight - 0.5 * (d * kLog2Pi + logdet));
  }
  return total;
}

double moment(const Target& target, const Schedule& schedule, double t, int order) {
  if (order != 2 && order != 4)
    throw std::invalid_argument("moment: order must be 2 or 4");
  const auto fm = schedule.forward_moments(t);
  const auto comps = components_of(target);
  const int d = dim(target);
  double acc = 0.0;
  for (const auto& c : comps) {
    const double w = std::exp(c.log_weight);
    const VectorXd mu = fm.m * (*c.mu);
    double tr = 0.0, tr2 = 0.0, mu_c_mu = 0.0;
    const VectorXd z = c.U->transpose() * mu;
    for (int i = 0; i < d; ++i) {
      const double ev = fm.m * fm.m * (*c.lambda)[i] + fm.var;
      tr += ev;
      tr2 += ev * ev;
      mu_c_mu += ev * z[i] * z[i];
    }
    const double m2 = mu.squaredNorm() + tr;
    if (order == 2) {
      acc += w * m2;
    } else {
      acc += w * (2.0 * tr2 + 4.0 * mu_c_mu + m2 * m2);
    }
  }
  return acc;
}

GmmTarget time_marginal(const Target& target, const Schedule& schedule, double t) {
  const auto fm = schedule.forward_moments(t);
  const int d = dim(target);
  const auto comps = components_of(target);
  VectorXd weights(comps.size());
  std::vector<VectorXd> means;
  std::vector<MatrixXd> covs;
  means.reserve(comps.size());
  covs.reserve(comps.size());
  for (std::size_t i = 0; i < comps.size(); ++i) {
    weights[i] = std::exp(comps[i].log_weight);
    means.push_back(fm.m * (*comps[i].mu));
    MatrixXd cov = fm.m * fm.m *
                   ((*comps[i].U) * comps[i].lambda->asDiagonal() * comps[i].U->transpose());
    cov += fm.var * MatrixXd::Identity(d, d);
    covs.push_back(0.5 * (cov + cov.transpose()));
  }
  weights /= weights.sum();
  return GmmTarget(weights, std::move(means), std::move(covs));
}

std::pair<VectorXd, MatrixXd> mixture_moments(const Target& target) {
  const auto comps = components_of(target);
  const int d = dim(target);
  VectorXd mean = VectorXd::Zero(d);
  for (const auto& c : comps) mean += std::exp(c.log_weight) * (*c.mu);
  MatrixXd cov = MatrixXd::Zero(d, d);
  for (const auto& c : comps) {
    const double w = std::exp(c.log_weight);
    const VectorXd delta = *c.mu - mean;
    cov += w * ((*c.U) * c.lambda->asDiagonal() * c.U->transpose());
    cov += w * delta * delta.transpose();
  }
  return {mean, 0.5 * (cov + cov.transpose())};
}

namespace {

// Exact pair for one Gaussian component N(mu, Sigma) at level a0 < 1/lmax:
// sup_x <s(x),x> + a0||x||^2 = (1/4) mu^T S^-1 (S^-1 - a0 I)^-1 S^-1 mu.
double gaussian_offset_at(const VectorXd& mu, const MatrixXd& U, const VectorXd& lambda,
                          double a0) {
  const VectorXd z = U.transpose() * mu;
  double acc = 0.0;
  for (int i = 0; i < z.size(); ++i) {
    const double inv = 1.0 / lambda[i];
    acc += z[i] * z[i] * inv * inv / (inv - a0);
  }
  return 0.25 * acc;
}

}  // namespace

Dissipativity dissipativity_check(const Target& target, std::size_t n_probe,
                                  double radius, RngStream rng) {
  if (n_probe == 0) throw std::invalid_argument("dissipativity_check: n_probe >= 1");
  const int d = dim(target);
  Dissipativity out;

  if (const auto* g = std::get_if<GaussianTarget>(&target)) {
    const double lmax = g->eigvals().maxCoeff();
    if (g->mean().norm() == 0.0) {
      out.a0 = 1.0 / lmax;
      out.b0 = 0.0;
    } else {
      out.a0 = 0.5 / lmax;
      out.b0 = gaussian_offset_at(g->mean(), g->eigvecs(), g->eigvals(), out.a0);
    }
    return out;
  }

  const auto& gmm = std::get<GmmTarget>(target);
  double lmax = 0.0;
  for (int i = 0; i < gmm.components(); ++i)
    lmax = std::max(lmax, gmm.eigvals(i).maxCoeff());
  out.a0 = 0.5 / lmax;
  out.b0 = 0.0;
  for (int i = 0; i < gmm.components(); ++i)
    out.b0 = std::max(out.b0,
                      gaussian_offset_at(gmm.mean(i), gmm.eigvecs(i), gmm.eigvals(i), out.a0));

  // re-verify on probe points spread over spheres of radius up to `radius`
  Schedule trivial = Schedule::linear_beta(0.0, 0.0, 1.0, 0.0);
  VectorXd x(d);
  for (std::size_t p = 0; p < n_probe; ++p) {
    for (int i = 0; i < d; ++i) x[i] = rng.next_normal();
    x *= radius * rng.next_double() / std::max(x.norm(), 1e-300);
    const double g0 = score_at(target, trivial, 0.0, x).dot(x);
    const double slack = -out.a0 * x.squaredNorm() + out.b0 - g0;
    if (slack < -1e-9 * (1.0 + std::abs(out.b0)))
      out.b0 = g0 + out.a0 * x.squaredNorm();
  }
  return out;
}

double gaussian_window_log_mean(const Target& target, double c) {
  if (!(c > 0.0)) throw std::invalid_argument("gaussian_window_log_mean: c must be > 0");
  const auto comps = components_of(target);
  const int d = dim(target);
  double top = -std::numeric_limits<double>::infinity();
  std::vector<double> logits(comps.size());
  for (std::size_t i = 0; i < comps.size(); ++i) {
    const auto& comp = comps[i];
    // E_{X~N(mu,S)}[N(0,cI)(X)] = N(0, S + cI)(mu)
    const VectorXd z = comp.U->transpose() * (*comp.mu);
    double quad = 0.0, logdet = 0.0;
    for (int j = 0; j < d; ++j) {
      const double ev = (*comp.lambda)[j] + c;
      quad += z[j] * z[j] / ev;
      logdet += std::log(ev);
    }
    logits[i] = comp.log_weight - 0.5 * (d * kLog2Pi + logdet + quad);
    top = std::max(top, logits[i]);
  }
  double acc = 0.0;
  for (double l : logits) acc += std::exp(l - top);
  return top + std::log(acc);
}

double kl_gaussian(const VectorXd& mu1, const MatrixXd& S1, const VectorXd& mu2,
                   const MatrixXd& S2) {
  const int d = static_cast<int>(mu1.size());
  const Eigen::LLT<MatrixXd> llt2(S2);
  if (llt2.info() != Eigen::Success) throw std::invalid_argument("kl_gaussian: S2 not SPD");
  const MatrixXd sol = llt2.solve(S1);
  const VectorXd delta = mu2 - mu1;
  const double quad = delta.dot(llt2.solve(delta));
  double logdet1 = 0.0, logdet2 = 0.0;
  const Eigen::LLT<MatrixXd> llt1(S1);
  if (llt1.info() != Eigen::Success) throw std::invalid_argument("kl_gaussian: S1 not SPD");
  for (int i = 0; i < d; ++i) {
    logdet1 += 2.0 * std::log(llt1.matrixL()(i, i));
    logdet2 += 2.0 * std::log(llt2.matrixL()(i, i));
  }
  return 0.5 * (sol.trace() + quad - d + logdet2 - logdet1);
}

double kl_to_isotropic_upper(const Target& target, double v) {
  const int d = dim(target);
  const VectorXd zero = VectorXd::Zero(d);
  const MatrixXd ref = v * MatrixXd::Identity(d, d);
  if (const auto* g = std::get_if<GaussianTarget>(&target))
    return kl_gaussian(g->mean(), g->cov(), zero, ref);
  const auto& gmm = std::get<GmmTarget>(target);
  double acc = 0.0;  // convexity in the first argument
  for (int i = 0; i < gmm.components(); ++i)
    acc += gmm.weights()[i] * kl_gaussian(gmm.mean(i), gmm.cov(i), zero, ref);
  return acc;
}

std::string to_string(GmmDiagRule rule) {
  switch (rule) {
    case GmmDiagRule::RepeatSequence: return "repeat-sequence";
    case GmmDiagRule::RepeatEachEntry: return "repeat-each-entry";
    case GmmDiagRule::HarmonicToDim: return "harmonic-to-dim";
  }
  return "repeat-sequence";
}

GmmDiagRule gmm_diag_rule_from_string(const std::string& s) {
  if (s == "repeat-sequence") return GmmDiagRule::RepeatSequence;
  if (s == "repeat-each-entry") return GmmDiagRule::RepeatEachEntry;
  if (s == "harmonic-to-dim") return GmmDiagRule::HarmonicToDim;
  throw std::invalid_argument("unknown gmm diag rule '" + s + "'");
}

GmmTarget build_reference_gmm(std::uint64_t seed, GmmDiagRule rule) {
  constexpr int d = 50;
  constexpr int grid_side = 5;
  constexpr int k = grid_side * grid_side;
  RngStream rng = RngStream::root(seed).split(0x67 /* 'g' */);

  std::vector<VectorXd> means;
  means.reserve(k);
  for (int i = 0; i < grid_side; ++i) {
    for (int j = 0; j < grid_side; ++j) {
      VectorXd mu = VectorXd::Zero(d);
      mu[0] = -10.0 + 5.0 * i;
      mu[1] = -10.0 + 5.0 * j;
      means.push_back(mu);
    }
  }

  VectorXd weights(k);
  RngStream wrng = rng.split(1);
  for (int i = 0; i < k; ++i) {
    double chi2 = 0.0;  // chi^2 with 3 degrees of freedom
    for (int j = 0; j < 3; ++j) {
      const double z = wrng.next_normal();
      chi2 += z * z;
    }
    weights[i] = chi2;
  }
  weights /= weights.sum();

  VectorXd diag(d);
  for (int i = 0; i < d; ++i) {
    switch (rule) {
      case GmmDiagRule::RepeatSequence: diag[i] = 1.0 / (1 + i % 25); break;
      case GmmDiagRule::RepeatEachEntry: diag[i] = 1.0 / (1 + i / 2); break;
      case GmmDiagRule::HarmonicToDim: diag[i] = 1.0 / (1 + i); break;
    }
  }

  std::vector<MatrixXd> covs;
  covs.reserve(k);
  RngStream crng = rng.split(2);
  for (int i = 0; i < k; ++i) {
    MatrixXd raw(d, d);
    for (int r = 0; r < d; ++r)
      for (int ccol = 0; ccol < d; ++ccol) raw(r, ccol) = crng.next_normal();
    Eigen::JacobiSVD<MatrixXd> svd(raw, Eigen::ComputeFullU);
    const MatrixXd& u = svd.matrixU();
    MatrixXd cov = u.transpose() * diag.asDiagonal() * u;
    covs.push_back(0.5 * (cov + cov.transpose()));
  }

  return GmmTarget(weights, std::move(means), std::move(covs));
}

namespace {

nlohmann::json matrix_to_json(const MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.size();
  if (rows == 0) throw std::invalid_argument("matrix: empty");
  const auto cols = j[0].size();
  MatrixXd m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (j[r].size() != cols) throw std::invalid_argument("matrix: ragged rows");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

VectorXd vector_from_json(const nlohmann::json& j) {
  VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

}  // namespace

nlohmann::json target_to_json(const Target& target) {
  nlohmann::json j;
  if (const auto* g = std::get_if<GaussianTarget>(&target)) {
    j["type"] = "gaussian";
    j["mean"] = std::vector<double>(g->mean().data(), g->mean().data() + g->mean().size());
    j["cov"] = matrix_to_json(g->cov());
    return j;
  }
  const auto& gmm = std::get<GmmTarget>(target);
  j["type"] = "gmm";
  j["weights"] =
      std::vector<double>(gmm.weights().data(), gmm.weights().data() + gmm.weights().size());
  nlohmann::json means = nlohmann::json::array();
  nlohmann::json covs = nlohmann::json::array();
  for (int i = 0; i < gmm.components(); ++i) {
    means.push_back(
        std::vector<double>(gmm.mean(i).data(), gmm.mean(i).data() + gmm.mean(i).size()));
    covs.push_back(matrix_to_json(gmm.cov(i)));
  }
  j["means"] = std::move(means);
  j["covs"] = std::move(covs);
  return j;
}

Target target_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "gaussian")
    return GaussianTarget(vector_from_json(j.at("mean")), matrix_from_json(j.at("cov")));
  if (type == "gmm") {
    const auto& jm = j.at("means");
    const auto& jc = j.at("covs");
    std::vector<VectorXd> means;
    std::vector<MatrixXd> covs;
    for (std::size_t i = 0; i < jm.size(); ++i) means.push_back(vector_from_json(jm[i]));
    for (std::size_t i = 0; i < jc.size(); ++i) covs.push_back(matrix_from_json(jc[i]));
    return GmmTarget(vector_from_json(j.at("weights")), std::move(means), std::move(covs));
  }
  if (type == "reference-gmm") {
    const auto rule = gmm_diag_rule_from_string(j.value("diag_rule", "repeat-sequence"));
    return build_reference_gmm(j.value("seed", std::uint64_t{0}), rule);
  }
  throw std::invalid_argument("target: unknown type '" + type + "'");
}

}  // namespace harrisdiff
