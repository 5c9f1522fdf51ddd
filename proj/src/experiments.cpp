#include "harrisdiff/experiments.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "harrisdiff/parallel.hpp"

namespace harrisdiff {

namespace {

constexpr const char* kVersion = "harrisdiff 0.1.0";

std::string metric_name(ExperimentMetric m) {
  return m == ExperimentMetric::BuresW2 ? "bures_w2" : "max_sw";
}

std::string format_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["target"] = target_to_json(target);
  j["schedule"] = schedule.to_json();
  j["grid"] = {{"steps", grid_steps}, {"spacing", to_string(spacing)}};
  j["perturb_times"] = perturb_times;
  j["error_indices"] = error_indices;
  j["lambdas"] = lambdas;
  j["replications"] = replications;
  j["samples"] = samples;
  j["metric"] = metric_name(metric);
  j["direction_policy"] =
      direction_policy == DirectionPolicy::RandomUnit ? "random-unit" : "max_sw-worst-case";
  j["init_scale"] =
      init_scale == InitShiftScale::VarianceScaled ? "variance-scaled" : "unit";
  j["direction_batch"] = direction_batch;
  j["maxsw_restarts"] = maxsw_restarts;
  j["maxsw_max_iter"] = maxsw_max_iter;
  j["seed"] = seed;
  j["record_timing"] = record_timing;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig cfg(target_from_json(j.at("target")), Schedule::from_json(j.at("schedule")));
  if (j.contains("grid")) {
    cfg.grid_steps = j["grid"].value("steps", std::size_t{100});
    cfg.spacing = grid_spacing_from_string(j["grid"].value("spacing", "uniform-in-t"));
  }
  cfg.perturb_times = j.value("perturb_times", std::vector<double>{});
  cfg.error_indices = j.value("error_indices", std::vector<std::size_t>{});
  cfg.lambdas = j.value("lambdas", std::vector<double>{});
  cfg.replications = j.value("replications", std::size_t{5});
  cfg.samples = j.value("samples", std::size_t{10000});
  const std::string metric = j.value("metric", "bures_w2");
  if (metric == "bures_w2")
    cfg.metric = ExperimentMetric::BuresW2;
  else if (metric == "max_sw")
    cfg.metric = ExperimentMetric::MaxSw;
  else
    throw std::invalid_argument("experiment: unknown metric '" + metric + "'");
  const std::string policy = j.value("direction_policy", "random-unit");
  if (policy == "random-unit")
    cfg.direction_policy = DirectionPolicy::RandomUnit;
  else if (policy == "max_sw-worst-case")
    cfg.direction_policy = DirectionPolicy::MaxSwWorstCase;
  else
    throw std::invalid_argument("experiment: unknown direction policy '" + policy + "'");
  const std::string scale = j.value("init_scale", "variance-scaled");
  if (scale == "variance-scaled")
    cfg.init_scale = InitShiftScale::VarianceScaled;
  else if (scale == "unit")
    cfg.init_scale = InitShiftScale::Unit;
  else
    throw std::invalid_argument("experiment: unknown init scale '" + scale + "'");
  cfg.direction_batch = j.value("direction_batch", std::size_t{20000});
  cfg.maxsw_restarts = j.value("maxsw_restarts", std::size_t{8});
  cfg.maxsw_max_iter = j.value("maxsw_max_iter", std::size_t{100000});
  cfg.seed = j.value("seed", std::uint64_t{0});
  cfg.record_timing = j.value("record_timing", false);
  return cfg;
}

void ExperimentConfig::validate(bool init_bias) const {
  if (replications == 0) throw std::invalid_argument("experiment: replications must be >= 1");
  if (samples < 2) throw std::invalid_argument("experiment: samples must be >= 2");
  if (lambdas.empty()) throw std::invalid_argument("experiment: lambdas must be non-empty");
  for (double l : lambdas)
    if (l < 0.0) throw std::invalid_argument("experiment: lambdas must be >= 0");
  if (init_bias) {
    if (perturb_times.empty())
      throw std::invalid_argument("experiment: perturb_times must be non-empty");
    for (double t : perturb_times)
      if (!(t > 0.0 && t <= schedule.horizon()))
        throw std::invalid_argument("experiment: perturbation times must lie in (0, T]");
  } else {
    if (error_indices.empty())
      throw std::invalid_argument("experiment: error_indices must be non-empty");
    for (std::size_t idx : error_indices)
      if (idx >= grid_steps)
        throw std::invalid_argument("experiment: error index beyond grid");
  }
}

double ExperimentReport::summary_mean(double t_or_index, double lambda) const {
  for (const auto& row : summary)
    if (row.t_or_index == t_or_index && row.lambda == lambda) return row.mean;
  throw std::invalid_argument("report: no summary row for requested cell");
}

VectorXd worst_case_direction(const Target& target, std::size_t m_each,
                              std::uint64_t seed, std::size_t restarts,
                              unsigned threads, std::size_t max_iter) {
  if (m_each < 2) throw std::invalid_argument("worst_case_direction: m_each must be >= 2");
  RngStream root = RngStream::root(seed);
  RngStream ra = root.split(1), rb = root.split(2);
  EmpiricalCloud a(sample(target, m_each, ra));
  EmpiricalCloud b(sample(target, m_each, rb));
  MaxSwOptions opt;
  opt.seed = root.split(3).key();
  opt.restarts = restarts;
  opt.threads = threads;
  opt.max_iter = max_iter;
  return max_sw(a, b, opt).u;
}

namespace {

struct Cell {
  std::size_t replicate;
  std::size_t time_idx;
  std::size_t lambda_idx;
};

// per-replicate state shared across (t, lambda) cells: one direction, one set
// of base streams (common random numbers)
struct ReplicateContext {
  VectorXd direction;
  RngStream rep_root;
};

std::vector<ReplicateContext> make_replicates(const ExperimentConfig& cfg) {
  const int d = dim(cfg.target);
  std::vector<ReplicateContext> out;
  out.reserve(cfg.replications);
  const RngStream root = RngStream::root(cfg.seed);
  for (std::size_t r = 0; r < cfg.replications; ++r) {
    ReplicateContext ctx;
    ctx.rep_root = root.split(rng_salt::kReplicate, r);
    if (cfg.direction_policy == DirectionPolicy::RandomUnit) {
      RngStream dr = ctx.rep_root.split(rng_salt::kDirection);
      ctx.direction.resize(d);
      for (int i = 0; i < d; ++i) ctx.direction[i] = dr.next_normal();
      ctx.direction /= ctx.direction.norm();
    } else {
      ctx.direction = worst_case_direction(
          cfg.target, cfg.direction_batch, ctx.rep_root.split(rng_salt::kDirection).key(),
          cfg.maxsw_restarts, 1, cfg.maxsw_max_iter);
    }
    out.push_back(std::move(ctx));
  }
  return out;
}

double distance_to_target(const ExperimentConfig& cfg, const ReplicateContext& ctx,
                          const MatrixXd& output) {
  if (cfg.metric == ExperimentMetric::BuresW2) {
    EmpiricalCloud cloud(output);
    const auto [mu, sigma] = mixture_moments(cfg.target);
    return bures_w2(cloud.mean(), cloud.cov(), mu, sigma);
  }
  RngStream ref_rng = ctx.rep_root.split(rng_salt::kReference);
  EmpiricalCloud ref(sample(cfg.target, cfg.samples, ref_rng));
  EmpiricalCloud cloud(output);
  MaxSwOptions opt;
  opt.seed = ctx.rep_root.split(rng_salt::kMetric).key();
  opt.restarts = cfg.maxsw_restarts;
  opt.max_iter = cfg.maxsw_max_iter;
  return max_sw(cloud, ref, opt).value;
}

void summarize(ExperimentReport& report, std::size_t rep) {
  std::map<std::pair<double, double>, std::vector<double>> cells;
  for (const auto& row : report.rows)
    cells[{row.t_or_index, row.lambda}].push_back(row.value);
  for (const auto& [key, values] : cells) {
    SummaryRow s;
    s.t_or_index = key.first;
    s.lambda = key.second;
    s.metric = report.rows.front().metric;
    s.replications = rep;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    s.mean = mean;
    s.stddev = values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1)) : 0.0;
    report.summary.push_back(s);
  }
}

nlohmann::json provenance_block(const ExperimentConfig& cfg, const char* protocol,
                                const Grid& grid) {
  nlohmann::json p;
  p["version"] = kVersion;
  p["protocol"] = protocol;
  p["config"] = cfg.to_json();
  p["seed"] = cfg.seed;
  p["grid_times"] = grid.times;
  p["metric_estimator"] = cfg.metric == ExperimentMetric::BuresW2
                              ? "moment-matched bures-w2 vs exact target moments"
                              : "max sliced W2 vs fresh target samples, adam "
                                "(lr 1e-3, tol 1e-7)";
  p["comparison_sample_size"] = cfg.samples;
  p["init_shift_scale"] =
      cfg.init_scale == InitShiftScale::VarianceScaled ? "variance-scaled" : "unit";
  return p;
}

}  // namespace

ExperimentReport run_init_bias(const ExperimentConfig& cfg) {
  cfg.validate(true);
  const Grid grid = make_grid(cfg.schedule, cfg.grid_steps, cfg.spacing);
  const double T = cfg.schedule.horizon();
  const int d = dim(cfg.target);
  const auto replicates = make_replicates(cfg);

  // snap each perturbation time onto the grid (reverse start index)
  std::vector<std::size_t> start_index(cfg.perturb_times.size());
  std::vector<double> snapped(cfg.perturb_times.size());
  for (std::size_t i = 0; i < cfg.perturb_times.size(); ++i) {
    const double reverse_start = T - cfg.perturb_times[i];
    std::size_t best = 0;
    for (std::size_t k = 1; k < grid.times.size(); ++k)
      if (std::abs(grid.times[k] - reverse_start) <
          std::abs(grid.times[best] - reverse_start))
        best = k;
    if (best == grid.times.size() - 1) best -= 1;  // keep at least one step
    start_index[i] = best;
    snapped[i] = T - grid.times[best];
  }

  const std::size_t n_cells =
      cfg.replications * cfg.perturb_times.size() * cfg.lambdas.size();
  ExperimentReport report;
  report.rows.resize(n_cells);

  parallel_for(n_cells, cfg.threads, [&](std::size_t cell) {
    const std::size_t r = cell / (cfg.perturb_times.size() * cfg.lambdas.size());
    const std::size_t rest = cell % (cfg.perturb_times.size() * cfg.lambdas.size());
    const std::size_t ti = rest / cfg.lambdas.size();
    const std::size_t li = rest % cfg.lambdas.size();
    const auto& ctx = replicates[r];
    const double t_bias = snapped[ti];  // actual grid time used for the run
    const double lambda = cfg.lambdas[li];

    const auto t0 = std::chrono::steady_clock::now();

    // forward marginal at t_bias: m x0 + sd G, streams shared across cells
    const auto fm = cfg.schedule.forward_moments(t_bias);
    RngStream data_rng = ctx.rep_root.split(rng_salt::kDataDraw);
    MatrixXd init = sample(cfg.target, cfg.samples, data_rng);
    const double sd = std::sqrt(fm.var);
    RngStream fwd_base = ctx.rep_root.split(rng_salt::kForwardNoise);
    for (std::size_t i = 0; i < cfg.samples; ++i) {
      RngStream g = fwd_base.split(i);
      for (int j = 0; j < d; ++j)
        init(i, j) = fm.m * init(i, j) + sd * g.next_normal();
    }

    SamplerConfig scfg(cfg.schedule, grid, cfg.target);
    scfg.threads = 1;  // cells already run in parallel
    scfg.init = ExplicitInit{std::move(init), start_index[ti]};
    PerturbationSpec spec;
    spec.mode = PerturbationMode::InitBias;
    spec.direction = ctx.direction;
    spec.magnitude = lambda;
    spec.t_bias = t_bias;
    spec.init_scale = cfg.init_scale;
    scfg.perturbation = spec;

    const MatrixXd output = run_chain_with_streams(
        scfg, cfg.samples, ctx.rep_root.split(rng_salt::kChainNoise),
        ctx.rep_root.split(rng_salt::kInit));
    const double value = distance_to_target(cfg, ctx, output);

    const auto t1 = std::chrono::steady_clock::now();
    ReportRow row;
    row.replicate = r;
    row.t_or_index = cfg.perturb_times[ti];  // as configured; grid snap in provenance
    row.lambda = lambda;
    row.metric = metric_name(cfg.metric);
    row.value = value;
    row.n_samples = cfg.samples;
    row.seconds = cfg.record_timing
                      ? std::chrono::duration<double>(t1 - t0).count()
                      : 0.0;
    report.rows[cell] = std::move(row);
  });

  summarize(report, cfg.replications);
  report.provenance = provenance_block(cfg, "init-bias", grid);
  report.provenance["snapped_times"] = snapped;
  return report;
}

ExperimentReport run_score_perturb(const ExperimentConfig& cfg) {
  cfg.validate(false);
  const Grid grid = make_grid(cfg.schedule, cfg.grid_steps, cfg.spacing);
  const auto replicates = make_replicates(cfg);

  const std::size_t n_cells =
      cfg.replications * cfg.error_indices.size() * cfg.lambdas.size();
  ExperimentReport report;
  report.rows.resize(n_cells);

  parallel_for(n_cells, cfg.threads, [&](std::size_t cell) {
    const std::size_t r = cell / (cfg.error_indices.size() * cfg.lambdas.size());
    const std::size_t rest = cell % (cfg.error_indices.size() * cfg.lambdas.size());
    const std::size_t ei = rest / cfg.lambdas.size();
    const std::size_t li = rest % cfg.lambdas.size();
    const auto& ctx = replicates[r];
    const double lambda = cfg.lambdas[li];

    const auto t0 = std::chrono::steady_clock::now();

    SamplerConfig scfg(cfg.schedule, grid, cfg.target);
    scfg.threads = 1;
    scfg.init = ReferenceInit{};
    PerturbationSpec spec;
    spec.mode = PerturbationMode::ScoreStep;
    spec.direction = ctx.direction;
    spec.magnitude = lambda;
    spec.n_err = cfg.error_indices[ei];
    scfg.perturbation = spec;

    const MatrixXd output = run_chain_with_streams(
        scfg, cfg.samples, ctx.rep_root.split(rng_salt::kChainNoise),
        ctx.rep_root.split(rng_salt::kInit));
    const double value = distance_to_target(cfg, ctx, output);

    const auto t1 = std::chrono::steady_clock::now();
    ReportRow row;
    row.replicate = r;
    row.t_or_index = static_cast<double>(cfg.error_indices[ei]);
    row.lambda = lambda;
    row.metric = metric_name(cfg.metric);
    row.value = value;
    row.n_samples = cfg.samples;
    row.seconds = cfg.record_timing
                      ? std::chrono::duration<double>(t1 - t0).count()
                      : 0.0;
    report.rows[cell] = std::move(row);
  });

  summarize(report, cfg.replications);
  report.provenance = provenance_block(cfg, "score-perturb", grid);
  return report;
}

void write_report(const ExperimentReport& report, const std::string& path) {
  {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << "replicate,t,lambda,metric,value,n_samples,seconds\n";
    for (const auto& row : report.rows) {
      out << row.replicate << ',' << format_g17(row.t_or_index) << ','
          << format_g17(row.lambda) << ',' << row.metric << ',' << format_g17(row.value)
          << ',' << row.n_samples << ',' << format_g17(row.seconds) << '\n';
    }
  }
  {
    std::ofstream out(path + ".summary.csv");
    if (!out) throw std::runtime_error("cannot open summary for writing");
    out << "t,lambda,metric,mean,std,rep\n";
    for (const auto& s : report.summary) {
      out << format_g17(s.t_or_index) << ',' << format_g17(s.lambda) << ',' << s.metric
          << ',' << format_g17(s.mean) << ',' << format_g17(s.stddev) << ','
          << s.replications << '\n';
    }
  }
  {
    std::ofstream out(path + ".provenance.json");
    if (!out) throw std::runtime_error("cannot open provenance for writing");
    out << report.provenance.dump(2) << '\n';
  }
}

nlohmann::json default_experiment_config(bool init_bias) {
  nlohmann::json j;
  j["target"] = {{"type", "gaussian"},
                 {"mean", std::vector<double>(10, 1.0)},
                 {"cov", nlohmann::json::array()}};
  nlohmann::json cov = nlohmann::json::array();
  for (int r = 0; r < 10; ++r) {
    std::vector<double> row(10, 0.0);
    row[r] = 0.1;
    cov.push_back(row);
  }
  j["target"]["cov"] = cov;
  j["schedule"] = {{"kind", "karras-ve"}, {"alpha", 0.0},      {"horizon", 1.0},
                   {"sigma_min", 0.002},  {"sigma_max", 80.0}, {"rho", 3.0}};
  j["grid"] = {{"steps", 100}, {"spacing", "uniform-in-t"}};
  if (init_bias) {
    j["perturb_times"] = {0.05, 0.25, 0.5, 1.0};
    j["error_indices"] = nlohmann::json::array();
  } else {
    j["perturb_times"] = nlohmann::json::array();
    j["error_indices"] = {0, 25, 50, 75, 99};
  }
  j["lambdas"] = {0.0, 5.0, 20.0};
  j["replications"] = 5;
  j["samples"] = 10000;
  j["metric"] = "bures_w2";
  j["direction_policy"] = "random-unit";
  j["init_scale"] = init_bias ? "unit" : "variance-scaled";
  j["direction_batch"] = 20000;
  j["maxsw_restarts"] = 8;
  j["maxsw_max_iter"] = 100000;
  j["seed"] = 0;
  j["record_timing"] = false;
  return j;
}

}  // namespace harrisdiff
