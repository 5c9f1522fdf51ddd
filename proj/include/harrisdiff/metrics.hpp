#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "harrisdiff/rng.hpp"
#include "harrisdiff/target.hpp"

namespace harrisdiff {

// Sample matrix (one row per point) with cached first two moments; the
// covariance uses the unbiased estimator and is symmetrized.
class EmpiricalCloud {
 public:
  explicit EmpiricalCloud(MatrixXd samples);

  const MatrixXd& samples() const { return samples_; }
  const VectorXd& mean() const { return mean_; }
  const MatrixXd& cov() const { return cov_; }
  std::size_t size() const { return static_cast<std::size_t>(samples_.rows()); }
  int dim() const { return static_cast<int>(samples_.cols()); }

 private:
  MatrixXd samples_;
  VectorXd mean_;
  MatrixXd cov_;
};

// 2-Wasserstein distance between Gaussians N(m1,C1), N(m2,C2); closed form via
// matrix square roots. Symmetric by construction.
double bures_w2(const VectorXd& m1, const MatrixXd& c1, const VectorXd& m2,
                const MatrixXd& c2);

struct Sw1dResult {
  double value = 0.0;
  bool subsampled = false;  // unequal inputs were reduced to the shorter length
};

// W2 between 1D empirical measures via order statistics; inputs must be
// sorted ascending. Unequal lengths subsample the longer side (seeded).
Sw1dResult sw_1d(const std::vector<double>& a_sorted, const std::vector<double>& b_sorted,
                 std::uint64_t seed = 0);

// slice both clouds along `u` and take the 1D distance
double sliced_w2(const EmpiricalCloud& x, const EmpiricalCloud& y, const VectorXd& u,
                 std::uint64_t seed = 0);

struct MaxSwOptions {
  double step = 1e-3;
  double tol = 1e-7;
  std::size_t max_iter = 100000;
  std::size_t restarts = 8;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct DirectionResult {
  VectorXd u;
  double value = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

// Maximum sliced W2: Adam ascent on the unit sphere with multiple restarts;
// best direction kept.
DirectionResult max_sw(const EmpiricalCloud& x, const EmpiricalCloud& y,
                       const MaxSwOptions& opt = {});

// Gaussian envelope amp * N(mean, sd^2) dominating a 1D density in the tails;
// used to pick a finite quadrature window.
struct TailEnvelope {
  double amp = 1.0;
  double mean = 0.0;
  double sd = 1.0;
};

struct QuadratureAccuracyError : std::runtime_error {
  QuadratureAccuracyError(const std::string& what, double est)
      : std::runtime_error(what), estimate(est) {}
  double estimate;
};

// integral of (1 + b x^2) |p - q| with the window chosen so the envelope tail
// mass is below 1e-10
double rho_b_1d(const std::function<double(double)>& p,
                const std::function<double(double)>& q, double b,
                const TailEnvelope& env_p, const TailEnvelope& env_q);

}  // namespace harrisdiff
