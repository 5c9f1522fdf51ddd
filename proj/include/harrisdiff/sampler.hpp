#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>

#include "harrisdiff/schedule.hpp"
#include "harrisdiff/target.hpp"

namespace harrisdiff {

enum class PerturbationMode { InitBias, ScoreStep };
enum class InitShiftScale { VarianceScaled, Unit };  // sigma^2_{0|t_bias}*lambda vs lambda

struct PerturbationSpec {
  PerturbationMode mode = PerturbationMode::InitBias;
  VectorXd direction;       // unit vector
  double magnitude = 0.0;   // lambda >= 0
  double t_bias = 0.0;      // forward time, InitBias
  std::size_t n_err = 0;    // step index, ScoreStep
  InitShiftScale init_scale = InitShiftScale::VarianceScaled;

  void validate(int d) const;
};

// Initialization of the reverse chain: either the reference pi_inf at the
// first grid point, or an explicit sample set entering at `start_index`.
struct ReferenceInit {};
struct ExplicitInit {
  MatrixXd samples;          // one sample per row
  std::size_t start_index = 0;
};
using ChainInit = std::variant<ReferenceInit, ExplicitInit>;

struct SamplerConfig {
  Schedule schedule;
  Grid grid;
  Target target;
  ChainInit init = ReferenceInit{};
  std::optional<PerturbationSpec> perturbation;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  SamplerConfig(Schedule s, Grid g, Target t)
      : schedule(std::move(s)), grid(std::move(g)), target(std::move(t)) {}
};

struct SamplerFault : std::runtime_error {
  explicit SamplerFault(std::size_t step_index)
      : std::runtime_error("sampler produced a non-finite state at step " +
                           std::to_string(step_index)),
        step(step_index) {}
  std::size_t step;
};

// One Euler-Maruyama update x -> x + Delta_k (alpha x + 2 s(x)) + sqrt(2 Delta_k) xi.
// Applies the score-step perturbation when cfg carries one at index k.
VectorXd em_step(const VectorXd& x, std::size_t k, const SamplerConfig& cfg,
                 RngStream& rng);

// Runs the reverse chain to the final grid time and returns terminal samples
// (one per row). Parallel over samples; sample i draws from an independent
// stream derived from (seed, i), so results do not depend on thread count.
MatrixXd run_chain(const SamplerConfig& cfg, std::size_t n_samples);

// Same, but noise/init streams derive from caller-supplied bases instead of
// cfg.seed; lets experiment cells share draws.
MatrixXd run_chain_with_streams(const SamplerConfig& cfg, std::size_t n_samples,
                                RngStream noise_base, RngStream init_base);

// Exact backward transition for a Gaussian target over reverse times [s, t]:
// law of X_t given X_s = x is N(A x + offset, cov).
struct GaussianBackwardKernel {
  MatrixXd A;
  VectorXd offset;
  MatrixXd cov;
};

GaussianBackwardKernel gaussian_backward_kernel(const GaussianTarget& target,
                                                const Schedule& schedule, double s,
                                                double t);

// x with A x + offset = x
VectorXd kernel_fixed_point(const GaussianBackwardKernel& kernel);

// Monte Carlo EM over [s, t] from x0 against the exact kernel; returns
// operator-norm discrepancies of the empirical mean and covariance.
struct KernelComparison {
  double mean_error = 0.0;
  double cov_error = 0.0;
};

KernelComparison kernel_vs_em(const GaussianTarget& target, const Schedule& schedule,
                              double s, double t, std::size_t n_steps,
                              const VectorXd& x0, std::size_t n_mc, std::uint64_t seed,
                              unsigned threads = 1);

// sample export: CSV (one row per sample) and little-endian f64 with an
// 8-byte header (u32 d, u32 n)
void write_samples_csv(const MatrixXd& samples, const std::string& path);
void write_samples_f64(const MatrixXd& samples, const std::string& path);
MatrixXd read_samples_csv(const std::string& path);

}  // namespace harrisdiff
