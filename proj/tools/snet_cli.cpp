// Command-line surface: mask generation, training, connectivity sweeps,
// StochasticNet-vs-ConvNet comparison, and inference benchmarking.
//
// Exit codes: 0 success, 1 I/O failure, 2 flag/config validation,
// 3 dataset error, 4 numerical divergence.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "snet/bench.hpp"
#include "snet/binio.hpp"
#include "snet/manifest.hpp"
#include "snet/mask.hpp"
#include "snet/train.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

// Flat key-value config with [section] headers; keys become "section.key".
// Lines starting with # are comments.
std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line, section;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: expected key = value: " + line);
    const std::string key = trim(line.substr(0, eq));
    kv[section.empty() ? key : section + "." + key] = trim(line.substr(eq + 1));
  }
  return kv;
}

template <typename T>
T parse_value(const std::string& s);
template <>
int parse_value(const std::string& s) { return std::stoi(s); }
template <>
double parse_value(const std::string& s) { return std::stod(s); }
template <>
std::uint64_t parse_value(const std::string& s) { return std::stoull(s); }
template <>
bool parse_value(const std::string& s) { return s == "true" || s == "1"; }
template <>
std::string parse_value(const std::string& s) { return s; }

void apply_config_file(snet::ExperimentConfig& config,
                       const std::map<std::string, std::string>& kv) {
  auto get = [&kv](const std::string& key, auto& target) {
    const auto it = kv.find(key);
    if (it != kv.end())
      target = parse_value<std::decay_t<decltype(target)>>(it->second);
  };
  get("experiment.dataset", config.dataset);
  get("experiment.data_dir", config.data_dir);
  get("experiment.subset_per_class", config.subset_per_class);
  get("experiment.test_subset_per_class", config.test_subset_per_class);
  get("experiment.epochs", config.epochs);
  get("experiment.batch_size", config.batch_size);
  get("experiment.eval_batch", config.eval_batch);
  get("experiment.lr", config.lr.base);
  get("experiment.lr_decay_every", config.lr.decay_every);
  get("experiment.lr_decay_factor", config.lr.decay_factor);
  get("experiment.momentum", config.momentum);
  get("experiment.trials", config.trials);
  get("experiment.base_seed", config.base_seed);
  get("experiment.vary_all_seeds", config.vary_all_seeds);
  get("experiment.threads", config.threads);
  get("experiment.full_train_eval", config.full_train_eval);

  std::string kind = "gaussian";
  double density = 1.0;
  get("net.kind", kind);
  get("net.density", density);
  int in_channels = config.dataset == "cifar10" ? 3 : 1;
  get("net.in_channels", in_channels);
  config.net = snet::paper_config(in_channels,
                                  snet::field_kind_from_string(kind), density);
  get("net.hidden_density", config.net.hidden_density);
}

std::vector<double> parse_density_list(const std::string& csv) {
  std::vector<double> densities;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) densities.push_back(std::stod(item));
  return densities;
}

void write_outputs(const std::string& out_dir, const std::string& name,
                   const std::string& csv, snet::Manifest manifest) {
  snet::stamp_manifest(manifest);
  snet::binio::write_text_atomic(out_dir + "/" + name + ".csv", csv);
  snet::save_manifest(manifest, out_dir + "/" + name + ".manifest.json");
  std::cout << "wrote " << out_dir << "/" << name << ".csv and manifest\n";
}

int run_train(const snet::Manifest& manifest, const std::string& out_dir) {
  const snet::DatasetPair data = snet::load_experiment_data(manifest.config);
  const auto trajectories =
      snet::run_trials(manifest.config, data.train, data.test);
  const auto summary = snet::summarize(trajectories);
  std::string csv = "kind,percentage,trial,epoch,train_error,test_error\n";
  const std::string kind =
      manifest.config.net.conv.empty()
          ? "uniform"
          : snet::to_string(manifest.config.net.conv.front().kind);
  csv += snet::trajectory_csv(trajectories, kind, summary.connectivity * 100.0);
  write_outputs(out_dir, "train", csv, manifest);
  std::printf("connectivity %.2f%%  final test error %.4f\n",
              summary.connectivity * 100.0, summary.test_mean.back());
  return kExitOk;
}

int run_sweep(const snet::Manifest& manifest, const std::string& out_dir) {
  const snet::DatasetPair data = snet::load_experiment_data(manifest.config);
  const auto result =
      snet::sweep_connectivity(manifest.config, manifest.densities,
                               manifest.sweep_kind, data.train, data.test);
  write_outputs(out_dir, "sweep", result.csv, manifest);
  for (const auto& row : result.rows)
    std::printf("%s %6.2f%%  train %.4f±%.4f  test %.4f±%.4f\n",
                row.kind.c_str(), row.percentage, row.final_train_mean,
                row.final_train_std, row.final_test_mean, row.final_test_std);
  return kExitOk;
}

int run_compare(const snet::Manifest& manifest, const std::string& out_dir) {
  const snet::DatasetPair data = snet::load_experiment_data(manifest.config);
  const auto result = snet::compare_vs_convnet(
      manifest.config, manifest.target_connectivity, data.train, data.test);
  write_outputs(out_dir, "compare", result.csv, manifest);
  std::printf("stochasticnet (%.2f%%): test %.4f±%.4f | convnet: test %.4f\n",
              result.stochastic.connectivity * 100.0,
              result.stochastic.test_mean.back(),
              result.stochastic.test_std.back(), result.dense.test_mean.back());
  return kExitOk;
}

int run_bench(const snet::Manifest& manifest, const std::string& out_dir) {
  snet::NetConfig shape = manifest.config.net;
  shape.in_channels = manifest.config.dataset == "cifar10" ? 3 : 1;
  const auto report = snet::sweep_relative_time(
      shape, manifest.densities, manifest.bench_batch, manifest.bench_reps,
      manifest.bench_warmup, manifest.config.base_seed);
  write_outputs(out_dir, "bench", report.to_csv(), manifest);
  for (const auto& row : report.rows)
    std::printf("%6.2f%%  median %.1f us  relative %.3f\n", row.percentage,
                row.median_latency_us, row.relative_time);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"StochasticNet: deep networks as random graph realizations"};
  app.require_subcommand(1);

  // mask subcommand
  auto* mask_cmd = app.add_subcommand("mask", "realize a connectivity mask");
  std::string mask_kind = "uniform", mask_out = "mask.snmk";
  int mask_k = 5, out_channels = 1, in_channels = 1;
  double mask_density = 0.5;
  std::uint64_t mask_seed = 1;
  mask_cmd->add_option("--kind", mask_kind)
      ->check(CLI::IsMember({"uniform", "gaussian"}));
  mask_cmd->add_option("--k", mask_k)->check(CLI::PositiveNumber);
  mask_cmd->add_option("--density", mask_density)
      ->check(CLI::Range(1e-9, 1.0));
  mask_cmd->add_option("--out-channels", out_channels)
      ->check(CLI::PositiveNumber);
  mask_cmd->add_option("--in-channels", in_channels)
      ->check(CLI::PositiveNumber);
  mask_cmd->add_option("--seed", mask_seed);
  mask_cmd->add_option("--output", mask_out);

  // shared experiment options
  std::string config_path, out_dir = ".", from_manifest;
  std::string dataset, data_dir;
  int trials = -1, epochs = -1, threads = -1, subset = -1;
  std::uint64_t seed = 0;
  bool seed_set = false;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key-value config file");
    cmd->add_option("--out-dir", out_dir);
    cmd->add_option("--from-manifest", from_manifest,
                    "rerun a previous experiment from its manifest");
    cmd->add_option("--dataset", dataset);
    cmd->add_option("--data-dir", data_dir);
    cmd->add_option("--trials", trials);
    cmd->add_option("--epochs", epochs);
    cmd->add_option("--threads", threads);
    cmd->add_option("--subset", subset, "train examples per class (0 = full)");
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t v) { seed = v; seed_set = true; });
  };

  auto* train_cmd = app.add_subcommand("train", "train one configuration");
  auto* sweep_cmd =
      app.add_subcommand("sweep", "error vs connectivity percentage");
  auto* compare_cmd = app.add_subcommand(
      "compare", "StochasticNet vs ConvNet over multiple trials");
  auto* bench_cmd =
      app.add_subcommand("bench", "relative inference time vs connectivity");
  for (CLI::App* cmd : {train_cmd, sweep_cmd, compare_cmd, bench_cmd})
    add_common(cmd);

  std::string densities_csv = "0.25,0.5,0.75,1.0", sweep_kind = "gaussian";
  sweep_cmd->add_option("--densities", densities_csv);
  sweep_cmd->add_option("--kind", sweep_kind)
      ->check(CLI::IsMember({"uniform", "gaussian"}));
  bench_cmd->add_option("--densities", densities_csv);
  double connectivity = 0.39;
  compare_cmd->add_option("--connectivity", connectivity)
      ->check(CLI::Range(1e-9, 1.0));
  int bench_batch = 1, bench_reps = 50, bench_warmup = 3;
  bench_cmd->add_option("--batch", bench_batch)->check(CLI::PositiveNumber);
  bench_cmd->add_option("--reps", bench_reps);
  bench_cmd->add_option("--warmup", bench_warmup);

  CLI11_PARSE(app, argc, argv);

  try {
    if (mask_cmd->parsed()) {
      const auto field = snet::build_probability_field(
          snet::field_kind_from_string(mask_kind), mask_k, mask_density);
      const auto mask =
          snet::realize_rf_mask(field, out_channels, in_channels, mask_seed);
      snet::binio::write_file_atomic(mask_out, snet::serialize_mask(mask));
      std::printf("measured density %.6f\n", snet::measured_density(mask));
      return kExitOk;
    }

    snet::Manifest manifest;
    if (!from_manifest.empty()) {
      manifest = snet::load_manifest(from_manifest);
    } else {
      manifest.config.net = snet::paper_config(1, snet::FieldKind::gaussian,
                                               1.0);
      if (!config_path.empty())
        apply_config_file(manifest.config, parse_config_file(config_path));
    }
    // Flag overrides beat both config file and manifest.
    if (!dataset.empty()) manifest.config.dataset = dataset;
    if (!data_dir.empty()) manifest.config.data_dir = data_dir;
    if (trials >= 0) manifest.config.trials = trials;
    if (epochs >= 0) manifest.config.epochs = epochs;
    if (threads >= 0) manifest.config.threads = threads;
    if (subset >= 0) manifest.config.subset_per_class = subset;
    if (seed_set) manifest.config.base_seed = seed;
    if (manifest.config.dataset == "cifar10")
      manifest.config.net.in_channels = 3;

    if (train_cmd->parsed()) manifest.command = "train";
    if (sweep_cmd->parsed()) manifest.command = "sweep";
    if (compare_cmd->parsed()) manifest.command = "compare";
    if (bench_cmd->parsed()) manifest.command = "bench";
    if (from_manifest.empty()) {
      manifest.densities = parse_density_list(densities_csv);
      manifest.sweep_kind = snet::field_kind_from_string(sweep_kind);
      manifest.target_connectivity = connectivity;
      manifest.bench_batch = bench_batch;
      manifest.bench_reps = bench_reps;
      manifest.bench_warmup = bench_warmup;
    }

    if (manifest.command == "train") return run_train(manifest, out_dir);
    if (manifest.command == "sweep") return run_sweep(manifest, out_dir);
    if (manifest.command == "compare") return run_compare(manifest, out_dir);
    if (manifest.command == "bench") return run_bench(manifest, out_dir);
    std::cerr << "error: unknown command in manifest: " << manifest.command
              << "\n";
    return kExitConfig;
  } catch (const snet::DataError& e) {
    std::cerr << "data error: " << e.what()
              << "\nhint: pass --data-dir pointing at the dataset files\n";
    return kExitData;
  } catch (const snet::DivergenceError& e) {
    std::cerr << "numerical divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
}
