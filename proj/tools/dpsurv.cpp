// Command-line driver for the federated survival experiments.
#include "dpsurv/accountant.hpp"
#include "dpsurv/experiment.hpp"
#include "dpsurv/parallel.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

using namespace dpsurv;

namespace {

struct RunArgs {
  std::string config_path;
  std::vector<std::string> schemes;
  std::vector<std::string> models;
  std::vector<double> sigmas;
  std::vector<std::uint64_t> seeds;
  std::string out;
  std::vector<std::string> settings;
  int workers = 0;
  bool print_config = false;
};

ExperimentConfig build_config(const RunArgs& a) {
  ExperimentConfig config = a.config_path.empty() ? ExperimentConfig{} : load_config(a.config_path);
  for (const auto& s : a.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    apply_setting(config, s.substr(0, eq), s.substr(eq + 1));
  }
  if (!a.schemes.empty()) {
    config.schemes.clear();
    for (const auto& s : a.schemes) config.schemes.push_back(parse_scheme(s));
  }
  if (!a.models.empty()) {
    config.models.clear();
    for (const auto& m : a.models) config.models.push_back(parse_model_kind(m));
  }
  if (!a.sigmas.empty()) config.sigmas = a.sigmas;
  if (!a.seeds.empty()) config.seeds = a.seeds;
  if (!a.out.empty()) config.out_dir = a.out;
  if (a.workers > 0) config.workers = a.workers;
  else if (std::getenv("DPSURV_WORKERS")) config.workers = default_workers();
  config.validate();
  return config;
}

int run_command(const RunArgs& args) {
  const auto config = build_config(args);
  if (args.print_config) {
    std::cout << dump_config(config);
    return 0;
  }
  const auto run = run_experiment(config);
  const std::filesystem::path dir = config.out_dir;
  for (auto f : {ReportFormat::table, ReportFormat::csv, ReportFormat::records}) emit_report(run.report, f, dir);
  {
    std::ofstream cfg(dir / "config.txt");
    cfg << dump_config(config);
  }
  if (config.write_traces) {
    std::filesystem::create_directories(dir / "traces");
    for (const auto& t : run.traces) {
      std::ofstream out(dir / "traces" / trace_filename(t));
      if (!out) throw std::runtime_error("cannot write trace " + trace_filename(t).string());
      out << format_trace(t.rounds);
    }
  }
  std::cout << format_table(run.report);
  std::cout << "results written to " << dir.string() << '\n';
  return run.report.complete() ? 0 : 2;
}

struct AccountArgs {
  std::vector<double> sigmas = {2.0, 3.0};
  double sampling = 0.5;
  int rounds = 50;
  double delta = 1e-3;
  int max_order = 128;
  double target = 0.0;
  bool json = false;
};

int epsilon_command(const AccountArgs& a) {
  for (double sigma : a.sigmas) {
    const auto r = compute_epsilon({sigma, a.sampling, a.rounds, a.delta, a.max_order});
    if (a.json) {
      nlohmann::json j = {{"sigma", sigma},  {"sampling_probability", a.sampling}, {"rounds", a.rounds},
                          {"delta", a.delta}, {"epsilon", r.epsilon},              {"order", r.order}};
      std::cout << j.dump() << '\n';
    } else {
      std::printf("sigma %-8g C %-6g T %-5d delta %-8g epsilon %.4f (order %d)\n", sigma, a.sampling, a.rounds, a.delta,
                  r.epsilon, r.order);
    }
  }
  return 0;
}

int noise_command(const AccountArgs& a) {
  const double sigma = noise_for_epsilon(a.target, a.sampling, a.rounds, a.delta, a.max_order);
  const auto r = compute_epsilon({sigma, a.sampling, a.rounds, a.delta, a.max_order});
  if (a.json) {
    nlohmann::json j = {{"target_epsilon", a.target}, {"sigma", sigma}, {"epsilon", r.epsilon}, {"order", r.order}};
    std::cout << j.dump() << '\n';
  } else {
    std::printf("sigma %.6f gives epsilon %.4f (order %d)\n", sigma, r.epsilon, r.order);
  }
  return 0;
}

struct SynthArgs {
  std::string config_path;
  std::vector<std::string> settings;
  double censored_fraction = -1.0;
  std::string out = "synthetic.csv";
};

int synth_command(const SynthArgs& a) {
  RunArgs ra;
  ra.config_path = a.config_path;
  ra.settings = a.settings;
  auto config = build_config(ra);
  if (a.censored_fraction >= 0.0) {
    config.synth.censoring_rate = censoring_rate_for_fraction(config.synth, a.censored_fraction);
    std::printf("censoring rate %.6g\n", config.synth.censoring_rate);
  }
  const auto data = generate_synthetic(config.synth);
  write_csv(data, a.out);
  std::printf("%ld rows, %ld events (%.1f%% censored) written to %s\n", static_cast<long>(data.size()),
              static_cast<long>(data.event_count()), 100.0 * (1.0 - double(data.event_count()) / data.size()),
              a.out.c_str());
  return 0;
}

struct InspectArgs {
  std::string config_path;
  std::vector<std::string> settings;
  std::uint64_t seed = 0;
};

int inspect_command(const InspectArgs& a) {
  RunArgs ra;
  ra.config_path = a.config_path;
  ra.settings = a.settings;
  const auto config = build_config(ra);
  const auto data = load_experiment_data(config);
  const auto events = data.event_count();
  std::printf("samples %ld\nfeatures %ld\nevents %ld (%.1f%%)\ncensored %ld (%.1f%%)\n", static_cast<long>(data.size()),
              static_cast<long>(data.feature_count()), static_cast<long>(events), 100.0 * events / data.size(),
              static_cast<long>(data.size() - events), 100.0 * (data.size() - events) / data.size());
  const auto split = split_and_partition(data, config.test_fraction, config.fed.clients, a.seed);
  std::printf("test %zu\nshards", split.test.size());
  for (const auto& s : split.shards) std::printf(" %zu", s.size());
  std::printf("\nshard events");
  for (const auto& s : split.shards) std::printf(" %ld", static_cast<long>(data.subset(s).event_count()));
  std::printf("\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated survival analysis with client-level differential privacy"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run an experiment grid and write reports");
  run_cmd->add_option("--config", run.config_path, "Key-value config file")->check(CLI::ExistingFile);
  run_cmd->add_option("--scheme", run.schemes, "centralized, stdfed, dpfed, dpfed-post")->delimiter(',');
  run_cmd->add_option("--model", run.models, "coxph, coxcc, coxtime, deephit")->delimiter(',');
  run_cmd->add_option("--sigma", run.sigmas, "Noise multipliers")->delimiter(',');
  run_cmd->add_option("--seed", run.seeds, "Seeds")->delimiter(',');
  run_cmd->add_option("--out", run.out, "Output directory");
  run_cmd->add_option("--set", run.settings, "Extra key=value setting (repeatable)");
  run_cmd->add_option("--workers", run.workers, "Parallel experiment cells (default DPSURV_WORKERS or config)");
  run_cmd->add_flag("--print-config", run.print_config, "Print the merged config and exit");

  AccountArgs acc;
  auto* eps_cmd = app.add_subcommand("epsilon", "Privacy budget of the subsampled Gaussian mechanism");
  eps_cmd->add_option("--sigma", acc.sigmas, "Noise multipliers")->delimiter(',');
  AccountArgs noise;
  auto* noise_cmd = app.add_subcommand("noise", "Noise multiplier reaching a target epsilon");
  noise_cmd->add_option("--epsilon", noise.target, "Target epsilon")->required();
  for (auto [cmd, args] : {std::pair{eps_cmd, &acc}, std::pair{noise_cmd, &noise}}) {
    cmd->add_option("--sampling", args->sampling, "Client sampling probability C")->capture_default_str();
    cmd->add_option("--rounds", args->rounds, "Communication rounds")->capture_default_str();
    cmd->add_option("--delta", args->delta, "Target delta")->capture_default_str();
    cmd->add_option("--max-order", args->max_order, "Largest moment order")->capture_default_str();
    cmd->add_flag("--json", args->json, "One JSON record per line");
  }

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic Weibull proportional-hazards dataset");
  synth_cmd->add_option("--config", synth.config_path, "Key-value config file")->check(CLI::ExistingFile);
  synth_cmd->add_option("--set", synth.settings, "Extra key=value setting (repeatable)");
  synth_cmd->add_option("--censored-fraction", synth.censored_fraction, "Calibrate censoring to this fraction");
  synth_cmd->add_option("--out", synth.out, "CSV path")->capture_default_str();

  InspectArgs inspect;
  auto* inspect_cmd = app.add_subcommand("inspect", "Dataset counts and federated shard sizes");
  inspect_cmd->add_option("--config", inspect.config_path, "Key-value config file")->check(CLI::ExistingFile);
  inspect_cmd->add_option("--set", inspect.settings, "Extra key=value setting (repeatable)");
  inspect_cmd->add_option("--seed", inspect.seed, "Split seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run_cmd) return run_command(run);
    if (*eps_cmd) return epsilon_command(acc);
    if (*noise_cmd) return noise_command(noise);
    if (*synth_cmd) return synth_command(synth);
    if (*inspect_cmd) return inspect_command(inspect);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
