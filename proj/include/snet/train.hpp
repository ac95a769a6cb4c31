#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "snet/data.hpp"
#include "snet/net.hpp"

namespace snet {

// Training aborted on a non-finite loss.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dataset files missing or malformed.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LrSchedule {
  double base = 0.01;
  int decay_every = 0;       // 0 = constant
  double decay_factor = 1.0;

  double at(int epoch) const;  // epoch is 0-based

  friend bool operator==(const LrSchedule&, const LrSchedule&) = default;
};

struct ExperimentConfig {
  NetConfig net;  // template; seeds are overwritten per trial
  std::string dataset = "mnist";  // mnist | cifar10 | snds
  std::string data_dir = "data";
  int subset_per_class = 0;       // 0 = full split
  int test_subset_per_class = 0;
  int epochs = 10;
  int batch_size = 64;
  int eval_batch = 256;
  LrSchedule lr;
  double momentum = 0.9;
  int trials = 1;
  std::uint64_t base_seed = 1;
  // Default: only the mask seed varies across trials, so the trial spread
  // isolates connectivity-realization variance. When set, init and shuffle
  // seeds vary too.
  bool vary_all_seeds = false;
  int threads = 1;
  // Per-epoch train error is accumulated from the training forward passes
  // ("online"); set to run a dedicated evaluation pass over the train split
  // at each epoch end instead.
  bool full_train_eval = false;

  friend bool operator==(const ExperimentConfig&,
                         const ExperimentConfig&) = default;
};

// Seeds for one trial, derived from (base seed, trial index).
struct TrialSeeds {
  std::uint64_t mask_seed, init_seed, shuffle_seed;
};
TrialSeeds trial_seeds(const ExperimentConfig& config, int trial_index);

struct EpochStats {
  double train_error = 0.0;
  double test_error = 0.0;
};

struct Trajectory {
  std::vector<EpochStats> epochs;
  double wall_seconds = 0.0;
  double connectivity = 0.0;
};

// Misclassified / total over the dataset, evaluated in fixed order.
double evaluate_error(const Network& net, const Dataset& dataset,
                      int eval_batch);

// Loads the configured dataset pair, applies subsets, and standardizes with
// train statistics. Throws DataError on missing or malformed files.
struct DatasetPair {
  Dataset train, test;
};
DatasetPair load_experiment_data(const ExperimentConfig& config);

Trajectory run_single(const ExperimentConfig& config, const Dataset& train,
                      const Dataset& test, int trial_index);

// Runs config.trials trials (optionally on a worker pool); results are
// ordered by trial index regardless of scheduling.
std::vector<Trajectory> run_trials(const ExperimentConfig& config,
                                   const Dataset& train, const Dataset& test);

struct TrialSummary {
  std::vector<double> train_mean, train_std;  // per epoch, over trials
  std::vector<double> test_mean, test_std;
  std::vector<double> final_test_errors;      // per trial
  std::vector<double> final_train_errors;
  double connectivity = 0.0;
  double wall_seconds = 0.0;
  std::vector<Trajectory> trajectories;
};

TrialSummary summarize(const std::vector<Trajectory>& trajectories);

struct SweepRow {
  std::string kind;
  double percentage = 0.0;
  double final_train_mean = 0.0, final_train_std = 0.0;
  double final_test_mean = 0.0, final_test_std = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::string csv;  // kind,percentage,trial,epoch,train_error,test_error
};

// One multi-trial run per density; `kind` selects the convolutional
// connectivity distribution (the hidden layer stays uniform).
SweepResult sweep_connectivity(const ExperimentConfig& config,
                               const std::vector<double>& densities,
                               FieldKind kind, const Dataset& train,
                               const Dataset& test);

struct CompareResult {
  TrialSummary stochastic;
  TrialSummary dense;
  std::string csv;  // model,trial,epoch,train_error,test_error
};

// Gaussian-connectivity StochasticNet at `target_connectivity` (aggregate,
// dense output layer included) vs the dense baseline. The baseline runs once;
// it is deterministic given the fixed seeds.
CompareResult compare_vs_convnet(const ExperimentConfig& config,
                                 double target_connectivity,
                                 const Dataset& train, const Dataset& test);

std::string trajectory_csv(const std::vector<Trajectory>& trajectories,
                           const std::string& kind, double percentage);

}  // namespace snet
