#include "snet/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <thread>

#include "snet/rng.hpp"

namespace snet {

namespace {

constexpr std::uint64_t kMaskTag = 0x6d61736bULL;     // "mask"
constexpr std::uint64_t kInitTag = 0x696e6974ULL;     // "init"
constexpr std::uint64_t kShuffleTag = 0x73687566ULL;  // "shuf"

std::string fmt_error(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

double LrSchedule::at(int epoch) const {
  if (decay_every <= 0) return base;
  return base * std::pow(decay_factor, epoch / decay_every);
}

TrialSeeds trial_seeds(const ExperimentConfig& config, int trial_index) {
  TrialSeeds seeds;
  seeds.mask_seed = rng::derive(config.base_seed,
                                kMaskTag + static_cast<std::uint64_t>(trial_index));
  if (config.vary_all_seeds) {
    seeds.init_seed = rng::derive(
        config.base_seed, kInitTag + static_cast<std::uint64_t>(trial_index));
    seeds.shuffle_seed = rng::derive(
        config.base_seed, kShuffleTag + static_cast<std::uint64_t>(trial_index));
  } else {
    seeds.init_seed = rng::derive(config.base_seed, kInitTag);
    seeds.shuffle_seed = rng::derive(config.base_seed, kShuffleTag);
  }
  return seeds;
}

double evaluate_error(const Network& net, const Dataset& dataset,
                      int eval_batch) {
  const std::size_t n = static_cast<std::size_t>(dataset.size());
  std::vector<std::uint32_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);

  std::size_t wrong = 0;
  for (std::size_t off = 0; off < n; off += eval_batch) {
    const std::size_t count = std::min<std::size_t>(eval_batch, n - off);
    Batch batch = gather(dataset, order.data() + off, count);
    const std::vector<int> pred = predict(net, batch.images);
    for (std::size_t i = 0; i < count; ++i)
      if (pred[i] != batch.labels[i]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(n);
}

DatasetPair load_experiment_data(const ExperimentConfig& config) {
  DatasetPair pair;
  try {
    if (config.dataset == "mnist") {
      pair.train = load_idx(config.data_dir + "/train-images-idx3-ubyte",
                            config.data_dir + "/train-labels-idx1-ubyte");
      pair.test = load_idx(config.data_dir + "/t10k-images-idx3-ubyte",
                           config.data_dir + "/t10k-labels-idx1-ubyte");
    } else if (config.dataset == "cifar10") {
      std::vector<std::string> train_files;
      for (int i = 1; i <= 5; ++i)
        train_files.push_back(config.data_dir + "/data_batch_" +
                              std::to_string(i) + ".bin");
      pair.train = load_cifar10(train_files);
      pair.test = load_cifar10({config.data_dir + "/test_batch.bin"});
    } else if (config.dataset == "snds") {
      pair.train = load_snds(config.data_dir + "/train.snds");
      pair.test = load_snds(config.data_dir + "/test.snds");
    } else {
      throw DataError("unknown dataset: " + config.dataset);
    }
    pair.train.split = "train";
    pair.test.split = "test";

    const std::uint64_t subset_seed =
        rng::derive(config.base_seed, 0x737562ULL);
    if (config.subset_per_class > 0)
      pair.train = subset(pair.train, config.subset_per_class, subset_seed);
    if (config.test_subset_per_class > 0)
      pair.test = subset(pair.test, config.test_subset_per_class, subset_seed);
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
  standardize(pair.train, pair.test);
  return pair;
}

Trajectory run_single(const ExperimentConfig& config, const Dataset& train,
                      const Dataset& test, int trial_index) {
  const auto t0 = std::chrono::steady_clock::now();
  const TrialSeeds seeds = trial_seeds(config, trial_index);
  NetConfig net_config = config.net;
  net_config.mask_seed = seeds.mask_seed;
  net_config.init_seed = seeds.init_seed;
  net_config.in_channels = static_cast<int>(train.images.dim(1));
  net_config.height = static_cast<int>(train.images.dim(2));
  net_config.width = static_cast<int>(train.images.dim(3));

  Network net = build_network(net_config);

  Trajectory trajectory;
  trajectory.connectivity = net.connectivity();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.lr.at(epoch);
    BatchIterator batches(train, config.batch_size,
                          rng::derive(seeds.shuffle_seed,
                                      static_cast<std::uint64_t>(epoch)));
    std::size_t seen = 0, wrong = 0;
    Batch batch;
    while (batches.next(batch)) {
      LossResult result;
      try {
        result = loss_and_grads(net, batch.images, batch.labels);
      } catch (const std::runtime_error& e) {
        throw DivergenceError("trial " + std::to_string(trial_index) +
                              ", epoch " + std::to_string(epoch) + ": " +
                              e.what());
      }
      const Eigen::Index classes = result.logits.dim(1);
      for (std::size_t i = 0; i < batch.labels.size(); ++i) {
        const double* row = result.logits.data() +
                            static_cast<Eigen::Index>(i) * classes;
        int best = 0;
        for (Eigen::Index c = 1; c < classes; ++c)
          if (row[c] > row[best]) best = static_cast<int>(c);
        if (best != batch.labels[i]) ++wrong;
      }
      seen += batch.labels.size();
      apply_update(net, result.grads, lr, config.momentum);
    }

    EpochStats stats;
    stats.train_error = config.full_train_eval
                            ? evaluate_error(net, train, config.eval_batch)
                            : static_cast<double>(wrong) /
                                  static_cast<double>(seen);
    stats.test_error = evaluate_error(net, test, config.eval_batch);
    trajectory.epochs.push_back(stats);
  }
  trajectory.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return trajectory;
}

std::vector<Trajectory> run_trials(const ExperimentConfig& config,
                                   const Dataset& train, const Dataset& test) {
  if (config.trials < 1)
    throw std::invalid_argument("run_trials: trials must be >= 1");
  std::vector<Trajectory> trajectories(
      static_cast<std::size_t>(config.trials));

  const int workers =
      std::max(1, std::min(config.threads, config.trials));
  if (workers == 1) {
    for (int t = 0; t < config.trials; ++t)
      trajectories[static_cast<std::size_t>(t)] =
          run_single(config, train, test, t);
    return trajectories;
  }

  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (;;) {
      const int t = next.fetch_add(1);
      if (t >= config.trials) return;
      try {
        trajectories[static_cast<std::size_t>(t)] =
            run_single(config, train, test, t);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int i = 0; i < workers; ++i) pool.emplace_back(work);
  for (std::thread& thread : pool) thread.join();
  if (failure) std::rethrow_exception(failure);
  return trajectories;
}

TrialSummary summarize(const std::vector<Trajectory>& trajectories) {
  TrialSummary summary;
  summary.trajectories = trajectories;
  if (trajectories.empty()) return summary;
  const std::size_t n_epochs = trajectories.front().epochs.size();
  const double n = static_cast<double>(trajectories.size());

  summary.connectivity = trajectories.front().connectivity;
  for (const Trajectory& t : trajectories) {
    summary.wall_seconds += t.wall_seconds;
    summary.final_test_errors.push_back(t.epochs.back().test_error);
    summary.final_train_errors.push_back(t.epochs.back().train_error);
  }

  for (std::size_t e = 0; e < n_epochs; ++e) {
    double train_sum = 0, test_sum = 0;
    for (const Trajectory& t : trajectories) {
      train_sum += t.epochs[e].train_error;
      test_sum += t.epochs[e].test_error;
    }
    const double train_mean = train_sum / n, test_mean = test_sum / n;
    double train_sq = 0, test_sq = 0;
    for (const Trajectory& t : trajectories) {
      train_sq += (t.epochs[e].train_error - train_mean) *
                  (t.epochs[e].train_error - train_mean);
      test_sq += (t.epochs[e].test_error - test_mean) *
                 (t.epochs[e].test_error - test_mean);
    }
    summary.train_mean.push_back(train_mean);
    summary.test_mean.push_back(test_mean);
    // Population std; identically 0 for a single trial.
    summary.train_std.push_back(std::sqrt(train_sq / n));
    summary.test_std.push_back(std::sqrt(test_sq / n));
  }
  return summary;
}

std::string trajectory_csv(const std::vector<Trajectory>& trajectories,
                           const std::string& kind, double percentage) {
  std::string csv;
  char prefix[96];
  std::snprintf(prefix, sizeof(prefix), "%s,%.4f", kind.c_str(), percentage);
  for (std::size_t t = 0; t < trajectories.size(); ++t) {
    for (std::size_t e = 0; e < trajectories[t].epochs.size(); ++e) {
      csv += prefix;
      csv += ',' + std::to_string(t) + ',' + std::to_string(e + 1) + ',' +
             fmt_error(trajectories[t].epochs[e].train_error) + ',' +
             fmt_error(trajectories[t].epochs[e].test_error) + '\n';
    }
  }
  return csv;
}

SweepResult sweep_connectivity(const ExperimentConfig& config,
                               const std::vector<double>& densities,
                               FieldKind kind, const Dataset& train,
                               const Dataset& test) {
  if (densities.empty())
    throw std::invalid_argument("sweep_connectivity: empty density list");
  for (double d : densities)
    if (!(d > 0.0 && d <= 1.0))
      throw std::invalid_argument("sweep_connectivity: densities in (0, 1]");

  SweepResult result;
  result.csv = "kind,percentage,trial,epoch,train_error,test_error\n";
  for (double density : densities) {
    ExperimentConfig run = config;
    for (ConvStageConfig& stage : run.net.conv) {
      stage.kind = kind;
      stage.density = density;
    }
    run.net.hidden_density = density;  // hidden stays uniform by type
    const std::vector<Trajectory> trajectories = run_trials(run, train, test);
    const TrialSummary summary = summarize(trajectories);
    const double percentage = summary.connectivity * 100.0;

    SweepRow row;
    row.kind = to_string(kind);
    row.percentage = percentage;
    row.final_train_mean = 0;
    for (double v : summary.final_train_errors) row.final_train_mean += v;
    row.final_train_mean /= static_cast<double>(trajectories.size());
    row.final_test_mean = summary.test_mean.back();
    row.final_train_std = summary.train_std.back();
    row.final_test_std = summary.test_std.back();
    result.rows.push_back(row);

    result.csv += trajectory_csv(trajectories, to_string(kind), percentage);
  }
  return result;
}

CompareResult compare_vs_convnet(const ExperimentConfig& config,
                                 double target_connectivity,
                                 const Dataset& train, const Dataset& test) {
  ExperimentConfig stochastic = config;
  stochastic.net.in_channels = static_cast<int>(train.images.dim(1));
  const double density = solve_density_for_connectivity(stochastic.net,
                                                        target_connectivity);
  for (ConvStageConfig& stage : stochastic.net.conv) {
    stage.kind = FieldKind::gaussian;
    stage.density = density;
  }
  stochastic.net.hidden_density = density;

  ExperimentConfig dense = config;
  for (ConvStageConfig& stage : dense.net.conv) stage.density = 1.0;
  dense.net.hidden_density = 1.0;
  dense.trials = 1;  // deterministic given fixed seeds

  CompareResult result;
  result.stochastic = summarize(run_trials(stochastic, train, test));
  result.dense = summarize(run_trials(dense, train, test));

  result.csv = "model,trial,epoch,train_error,test_error\n";
  auto append = [&result](const char* model,
                          const std::vector<Trajectory>& trajectories) {
    for (std::size_t t = 0; t < trajectories.size(); ++t)
      for (std::size_t e = 0; e < trajectories[t].epochs.size(); ++e)
        result.csv += std::string(model) + ',' + std::to_string(t) + ',' +
                      std::to_string(e + 1) + ',' +
                      fmt_error(trajectories[t].epochs[e].train_error) + ',' +
                      fmt_error(trajectories[t].epochs[e].test_error) + '\n';
  };
  append("stochasticnet", result.stochastic.trajectories);
  append("convnet", result.dense.trajectories);
  return result;
}

}  // namespace snet
