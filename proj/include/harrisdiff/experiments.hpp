#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "harrisdiff/metrics.hpp"
#include "harrisdiff/sampler.hpp"
#include "harrisdiff/schedule.hpp"
#include "harrisdiff/target.hpp"
#include "json.hpp"

namespace harrisdiff {

enum class ExperimentMetric { BuresW2, MaxSw };
enum class DirectionPolicy { RandomUnit, MaxSwWorstCase };

struct ExperimentConfig {
  Target target;
  Schedule schedule;
  std::size_t grid_steps = 100;
  GridSpacing spacing = GridSpacing::UniformTime;

  std::vector<double> perturb_times;       // forward times, init-bias
  std::vector<std::size_t> error_indices;  // step indices, score-perturb
  std::vector<double> lambdas;
  std::size_t replications = 5;
  std::size_t samples = 10000;  // M, also the fresh reference size

  ExperimentMetric metric = ExperimentMetric::BuresW2;
  DirectionPolicy direction_policy = DirectionPolicy::RandomUnit;
  InitShiftScale init_scale = InitShiftScale::VarianceScaled;
  std::size_t direction_batch = 20000;  // m_each for the worst-case direction
  std::size_t maxsw_restarts = 8;
  std::size_t maxsw_max_iter = 100000;

  std::uint64_t seed = 0;
  unsigned threads = 1;
  bool record_timing = false;  // keep report CSVs byte-stable by default

  ExperimentConfig(Target t, Schedule s) : target(std::move(t)), schedule(std::move(s)) {}

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  void validate(bool init_bias) const;
};

struct ReportRow {
  std::size_t replicate = 0;
  double t_or_index = 0.0;
  double lambda = 0.0;
  std::string metric;
  double value = 0.0;
  std::size_t n_samples = 0;
  double seconds = 0.0;
};

struct SummaryRow {
  double t_or_index = 0.0;
  double lambda = 0.0;
  std::string metric;
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t replications = 0;
};

struct ExperimentReport {
  std::vector<ReportRow> rows;
  std::vector<SummaryRow> summary;
  nlohmann::json provenance;

  double summary_mean(double t_or_index, double lambda) const;
};

// direction maximizing the sliced distance between two fresh target batches
VectorXd worst_case_direction(const Target& target, std::size_t m_each,
                              std::uint64_t seed, std::size_t restarts = 8,
                              unsigned threads = 1, std::size_t max_iter = 100000);

// Perturbation protocols: bias the time-t forward marginal and complete the
// reverse run, or perturb the score at one step of the full-horizon run.
ExperimentReport run_init_bias(const ExperimentConfig& cfg);
ExperimentReport run_score_perturb(const ExperimentConfig& cfg);

// rows CSV plus <path>.summary.csv and <path>.provenance.json
void write_report(const ExperimentReport& report, const std::string& path);

nlohmann::json default_experiment_config(bool init_bias);

}  // namespace harrisdiff
