#pragma once

#include <Eigen/Dense>
#include <string>
#include <variant>
#include <vector>

#include "harrisdiff/rng.hpp"
#include "harrisdiff/schedule.hpp"
#include "json.hpp"

namespace harrisdiff {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Gaussian N(mean, cov); cov symmetric positive definite. The eigendecomposition
// is cached because every time-t quantity (m^2 Sigma + v I) shares eigenvectors
// with Sigma.
class GaussianTarget {
 public:
  GaussianTarget(VectorXd mean, MatrixXd cov);

  const VectorXd& mean() const { return mean_; }
  const MatrixXd& cov() const { return cov_; }
  const MatrixXd& eigvecs() const { return eigvecs_; }
  const VectorXd& eigvals() const { return eigvals_; }
  int dim() const { return static_cast<int>(mean_.size()); }

 private:
  VectorXd mean_;
  MatrixXd cov_;
  MatrixXd eigvecs_;
  VectorXd eigvals_;
};

class GmmTarget {
 public:
  GmmTarget(VectorXd weights, std::vector<VectorXd> means, std::vector<MatrixXd> covs);

  const VectorXd& weights() const { return weights_; }
  int components() const { return static_cast<int>(weights_.size()); }
  const VectorXd& mean(int i) const { return means_[i]; }
  const MatrixXd& cov(int i) const { return covs_[i]; }
  const MatrixXd& eigvecs(int i) const { return eigvecs_[i]; }
  const VectorXd& eigvals(int i) const { return eigvals_[i]; }
  int dim() const { return static_cast<int>(means_[0].size()); }

 private:
  VectorXd weights_;
  std::vector<VectorXd> means_;
  std::vector<MatrixXd> covs_;
  std::vector<MatrixXd> eigvecs_;
  std::vector<VectorXd> eigvals_;
};

using Target = std::variant<GaussianTarget, GmmTarget>;

int dim(const Target& target);

// i.i.d. draws, one sample per row
MatrixXd sample(const Target& target, std::size_t n, RngStream& rng);

// score of the time-t forward marginal; t = 0 gives the data score
VectorXd score_at(const GaussianTarget& target, const Schedule& schedule, double t,
                  const VectorXd& x);
VectorXd score_at(const GmmTarget& target, const Schedule& schedule, double t,
                  const VectorXd& x);
VectorXd score_at(const Target& target, const Schedule& schedule, double t,
                  const VectorXd& x);

double log_density_at(const Target& target, const Schedule& schedule, double t,
                      const VectorXd& x);

// sup-norm of the data density; exact for Gaussian, an upper bound for
// mixtures (sum of component peaks)
double density_sup_norm(const Target& target);

// E ||X_t||^order for order in {2, 4}
double moment(const Target& target, const Schedule& schedule, double t, int order);

// the target pushed through the forward dynamics to time t
GmmTarget time_marginal(const Target& target, const Schedule& schedule, double t);

// mean and covariance of the data distribution
std::pair<VectorXd, MatrixXd> mixture_moments(const Target& target);

struct Dissipativity {
  double a0 = 0.0;
  double b0 = 0.0;
};

// A pair (a0, b0) with <s_0(x), x> <= -a0 ||x||^2 + b0 for all x. Gaussian
// case is the exact analytic pair. For mixtures the responsibility identity
// s = sum_i r_i s_i turns per-component certificates into a global one; the
// probe points re-verify the inequality numerically.
Dissipativity dissipativity_check(const Target& target, std::size_t n_probe,
                                  double radius, RngStream rng);

// ln E[N(0, c I_d)(X_0)]; closed form through Gaussian convolution
double gaussian_window_log_mean(const Target& target, double c);

// KL(N(mu1,S1) || N(mu2,S2))
double kl_gaussian(const VectorXd& mu1, const MatrixXd& S1, const VectorXd& mu2,
                   const MatrixXd& S2);

// KL(target || N(0, v I)); exact for Gaussian, convexity upper bound for GMM
double kl_to_isotropic_upper(const Target& target, double v);

enum class GmmDiagRule { RepeatSequence, RepeatEachEntry, HarmonicToDim };

std::string to_string(GmmDiagRule rule);
GmmDiagRule gmm_diag_rule_from_string(const std::string& s);

// d = 50 mixture with 25 component means on a 5x5 grid in the first two
// coordinates (corners (-10,-10) and (10,10)), chi^2(3) weights, and rotated
// diagonal covariances. `rule` resolves how the 25-entry diagonal pattern
// fills 50 dimensions.
GmmTarget build_reference_gmm(std::uint64_t seed, GmmDiagRule rule = GmmDiagRule::RepeatSequence);

nlohmann::json target_to_json(const Target& target);
Target target_from_json(const nlohmann::json& j);

}  // namespace harrisdiff
