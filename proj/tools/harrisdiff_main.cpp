#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "harrisdiff/experiments.hpp"
#include "harrisdiff/harris.hpp"
#include "harrisdiff/metrics.hpp"
#include "harrisdiff/parallel.hpp"
#include "harrisdiff/sampler.hpp"
#include "json.hpp"

namespace hd = harrisdiff;
using nlohmann::json;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  bool emit_default = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool needs_config) {
  auto* c = cmd->add_option("--config", opts.config_path, "JSON configuration file");
  cmd->add_option("--out", opts.out_path, "output path");
  cmd->add_option("--seed", opts.seed, "override the config seed");
  cmd->add_option("--threads", opts.threads,
                  "worker threads (default: HARRISDIFF_THREADS or hardware)");
  cmd->add_flag("--emit-default-config", opts.emit_default,
                "print a default config for this subcommand and exit");
  (void)needs_config;
  (void)c;
}

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("malformed JSON in '" + path + "' at byte " +
                             std::to_string(e.byte) + ": " + e.what());
  }
}

void emit(const json& j, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot open '" + out_path + "' for writing");
  out << j.dump(2) << '\n';
}

unsigned resolve_threads(const CommonOpts& opts) {
  return opts.threads ? *opts.threads : hd::default_thread_count();
}

hd::Grid grid_from_config(const hd::Schedule& schedule, const json& cfg) {
  const auto& g = cfg.at("grid");
  return hd::make_grid(schedule, g.value("steps", std::size_t{100}),
                       hd::grid_spacing_from_string(g.value("spacing", "uniform-in-t")));
}

json default_sample_config() {
  json j;
  j["schedule"] = {{"kind", "linear-beta"}, {"alpha", 1.0},  {"horizon", 1.0},
                   {"beta_min", 0.1},       {"beta_max", 20.0}};
  j["target"] = {{"type", "gaussian"}, {"mean", {1.0, -1.0}},
                 {"cov", {{0.5, 0.1}, {0.1, 0.5}}}};
  j["grid"] = {{"steps", 100}, {"spacing", "uniform-in-t"}};
  j["n_samples"] = 1000;
  j["seed"] = 0;
  j["format"] = "csv";
  return j;
}

int run_sample(const CommonOpts& opts) {
  if (opts.emit_default) {
    emit(default_sample_config(), opts.out_path);
    return 0;
  }
  json cfg = load_config(opts.config_path);
  const auto schedule = hd::Schedule::from_json(cfg.at("schedule"));
  const auto target = hd::target_from_json(cfg.at("target"));
  const std::size_t n = cfg.value("n_samples", std::size_t{1000});
  const std::uint64_t seed = opts.seed ? *opts.seed : cfg.value("seed", std::uint64_t{0});
  const std::string format = cfg.value("format", "csv");
  const std::size_t steps = cfg.at("grid").value("steps", std::size_t{100});

  hd::MatrixXd samples;
  if (steps == 0) {
    // no reverse steps: echo the initialization
    if (cfg.contains("init") && cfg["init"].value("type", "reference") == "explicit") {
      samples = hd::read_samples_csv(cfg["init"].at("path").get<std::string>());
    } else {
      const int d = hd::dim(target);
      const double sd = std::sqrt(schedule.reference_var());
      hd::RngStream rng = hd::RngStream::root(seed).split(hd::rng_salt::kInit);
      samples.resize(n, d);
      for (std::size_t i = 0; i < n; ++i) {
        hd::RngStream s = rng.split(i);
        for (int j = 0; j < d; ++j) samples(i, j) = sd * s.next_normal();
      }
    }
  } else {
    hd::SamplerConfig scfg(schedule, grid_from_config(schedule, cfg), target);
    scfg.seed = seed;
    scfg.threads = resolve_threads(opts);
    if (cfg.contains("init") && cfg["init"].value("type", "reference") == "explicit") {
      hd::ExplicitInit init;
      init.samples = hd::read_samples_csv(cfg["init"].at("path").get<std::string>());
      init.start_index = cfg["init"].value("start_index", std::size_t{0});
      scfg.init = std::move(init);
    }
    if (cfg.contains("perturbation")) {
      const auto& p = cfg["perturbation"];
      hd::PerturbationSpec spec;
      const std::string mode = p.at("mode").get<std::string>();
      spec.mode = mode == "init-bias" ? hd::PerturbationMode::InitBias
                                      : hd::PerturbationMode::ScoreStep;
      const auto dir = p.at("direction").get<std::vector<double>>();
      spec.direction = Eigen::Map<const hd::VectorXd>(dir.data(), dir.size());
      spec.magnitude = p.value("magnitude", 0.0);
      spec.t_bias = p.value("t_bias", 0.0);
      spec.n_err = p.value("n_err", std::size_t{0});
      spec.init_scale = p.value("init_scale", "variance-scaled") == std::string("unit")
                            ? hd::InitShiftScale::Unit
                            : hd::InitShiftScale::VarianceScaled;
      scfg.perturbation = spec;
    }
    samples = hd::run_chain(scfg, n);
  }

  const std::string out = opts.out_path.empty() ? "samples.csv" : opts.out_path;
  if (format == "f64")
    hd::write_samples_f64(samples, out);
  else
    hd::write_samples_csv(samples, out);
  return 0;
}

json default_constants_config() {
  json j;
  j["schedule"] = {{"kind", "linear-beta"}, {"alpha", 0.0},  {"horizon", 1.0},
                   {"beta_min", 0.1},       {"beta_max", 20.0}};
  j["target"] = {{"type", "gaussian"}, {"mean", {0.0}}, {"cov", {{1.0}}}};
  j["grid"] = {{"steps", 8}, {"spacing", "uniform-in-t"}};
  j["r_multiplier"] = 2.0;
  return j;
}

hd::HarrisConstants constants_from_config(const json& cfg) {
  const auto schedule = hd::Schedule::from_json(cfg.at("schedule"));
  const auto target = hd::target_from_json(cfg.at("target"));
  const auto grid = grid_from_config(schedule, cfg);
  std::optional<hd::Dissipativity> d0;
  if (cfg.contains("dissipativity")) {
    hd::Dissipativity d;
    d.a0 = cfg["dissipativity"].at("a0").get<double>();
    d.b0 = cfg["dissipativity"].at("b0").get<double>();
    d0 = d;
  }
  return hd::compute_harris_constants(target, schedule, grid, d0,
                                      cfg.value("r_multiplier", 2.0));
}

int run_constants(const CommonOpts& opts) {
  if (opts.emit_default) {
    emit(default_constants_config(), opts.out_path);
    return 0;
  }
  const json cfg = load_config(opts.config_path);
  emit(hd::harris_constants_to_json(constants_from_config(cfg)), opts.out_path);
  return 0;
}

int run_bound(const CommonOpts& opts) {
  if (opts.emit_default) {
    json j = default_constants_config();
    json locals = json::array();
    for (std::size_t k = 0; k < j["grid"]["steps"].get<std::size_t>(); ++k)
      locals.push_back({0.1, 0.05, 0.0});
    j["local_errors"] = std::move(locals);
    emit(j, opts.out_path);
    return 0;
  }
  const json cfg = load_config(opts.config_path);
  const auto schedule = hd::Schedule::from_json(cfg.at("schedule"));
  const auto grid = grid_from_config(schedule, cfg);
  const auto hc = constants_from_config(cfg);
  std::vector<hd::LocalErrors> locals(grid.steps());
  if (cfg.contains("local_errors")) {
    const auto& le = cfg["local_errors"];
    if (le.size() != grid.steps())
      throw std::invalid_argument("bound: local_errors length must equal the step count");
    for (std::size_t k = 0; k < locals.size(); ++k) {
      locals[k].c_disc = le[k].at(0).get<double>();
      locals[k].c_net = le[k].at(1).get<double>();
      locals[k].score_err = le[k].at(2).get<double>();
    }
  }
  json out = hd::harris_constants_to_json(hc);
  out["bound_value"] =
      hd::assemble_bound(grid, hc.alpha_star, hc.lambda_T, hc.cmix, locals);
  emit(out, opts.out_path);
  return 0;
}

int run_metrics(const CommonOpts& opts, const std::string& file_x,
                const std::string& file_y) {
  const hd::EmpiricalCloud x(hd::read_samples_csv(file_x));
  const hd::EmpiricalCloud y(hd::read_samples_csv(file_y));
  hd::MaxSwOptions mopt;
  mopt.seed = opts.seed ? *opts.seed : 0;
  mopt.threads = resolve_threads(opts);
  const auto res = hd::max_sw(x, y, mopt);
  json out;
  out["w2_bures"] = hd::bures_w2(x.mean(), x.cov(), y.mean(), y.cov());
  out["max_sw"] = res.value;
  out["direction"] = std::vector<double>(res.u.data(), res.u.data() + res.u.size());
  out["converged"] = res.converged;
  out["n_samples"] = {{"x", x.size()}, {"y", y.size()}};
  emit(out, opts.out_path);
  return 0;
}

int run_experiment(const CommonOpts& opts, bool init_bias) {
  if (opts.emit_default) {
    emit(hd::default_experiment_config(init_bias), opts.out_path);
    return 0;
  }
  json cfg_json = load_config(opts.config_path);
  auto cfg = hd::ExperimentConfig::from_json(cfg_json);
  if (opts.seed) cfg.seed = *opts.seed;
  cfg.threads = resolve_threads(opts);
  const auto report = init_bias ? hd::run_init_bias(cfg) : hd::run_score_perturb(cfg);
  const std::string out = opts.out_path.empty() ? "report.csv" : opts.out_path;
  hd::write_report(report, out);
  return 0;
}

int run_gmm_build(const CommonOpts& opts, std::uint64_t gmm_seed,
                  const std::string& rule_name) {
  const auto rule = hd::gmm_diag_rule_from_string(rule_name);
  const auto target = hd::build_reference_gmm(opts.seed ? *opts.seed : gmm_seed, rule);
  json out = hd::target_to_json(hd::Target(target));
  out["diag_rule"] = rule_name;
  out["seed"] = opts.seed ? *opts.seed : gmm_seed;
  emit(out, opts.out_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"score-based diffusion sampling with analytic scores and explicit "
               "Harris stability constants"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  CommonOpts sample_opts, constants_opts, bound_opts, metrics_opts, init_opts,
      score_opts, gmm_opts;
  std::string metrics_x, metrics_y;
  std::uint64_t gmm_seed = 0;
  std::string gmm_rule = "repeat-sequence";

  auto* cmd_sample = app.add_subcommand("sample", "run the reverse-time sampler");
  add_common(cmd_sample, sample_opts, true);
  auto* cmd_constants =
      app.add_subcommand("constants", "evaluate per-interval stability constants");
  add_common(cmd_constants, constants_opts, true);
  auto* cmd_bound = app.add_subcommand("bound", "assemble the sampling-error bound");
  add_common(cmd_bound, bound_opts, true);
  auto* cmd_metrics =
      app.add_subcommand("metrics", "distances between two sample CSV files");
  cmd_metrics->add_option("x", metrics_x, "first sample CSV")->required();
  cmd_metrics->add_option("y", metrics_y, "second sample CSV")->required();
  add_common(cmd_metrics, metrics_opts, false);
  auto* cmd_init = app.add_subcommand("exp-init-bias", "initialization-bias experiment");
  add_common(cmd_init, init_opts, true);
  auto* cmd_score =
      app.add_subcommand("exp-score-perturb", "single-step score-perturbation experiment");
  add_common(cmd_score, score_opts, true);
  auto* cmd_gmm = app.add_subcommand("gmm-build", "emit the 25-component reference mixture");
  cmd_gmm->add_option("--gmm-seed", gmm_seed, "seed for weights and rotations");
  cmd_gmm->add_option("--diag-rule", gmm_rule,
                      "repeat-sequence | repeat-each-entry | harmonic-to-dim");
  add_common(cmd_gmm, gmm_opts, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (cmd_sample->parsed()) return run_sample(sample_opts);
    if (cmd_constants->parsed()) return run_constants(constants_opts);
    if (cmd_bound->parsed()) return run_bound(bound_opts);
    if (cmd_metrics->parsed()) return run_metrics(metrics_opts, metrics_x, metrics_y);
    if (cmd_init->parsed()) return run_experiment(init_opts, true);
    if (cmd_score->parsed()) return run_experiment(score_opts, false);
    if (cmd_gmm->parsed()) return run_gmm_build(gmm_opts, gmm_seed, gmm_rule);
  } catch (const std::exception& e) {
    json err;
    err["error"] = e.what();
    std::cerr << err.dump() << '\n';
    return 1;
  }
  return 2;
}
