#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "snet/net.hpp"

namespace snet {

// Inference engine that enumerates only formed connections.
// Conv layers become per-filter coordinate lists; affine layers become
// compressed sparse rows over unmasked weights.
class SparseExecutor {
 public:
  explicit SparseExecutor(const Network& net);

  Tensor forward(const Tensor& batch) const;
  std::vector<int> predict(const Tensor& batch) const;

  // Formed-connection entries across all layers (biases excluded).
  std::size_t entry_count() const;

  // Multiply-accumulate count of the most recent forward() call.
  std::uint64_t last_mac_count() const { return last_macs_; }

  int in_channels() const { return in_channels_; }
  int height() const { return height_; }
  int width() const { return width_; }

 private:
  struct ConvEntry {
    std::int32_t channel, dx, dy;
    double weight;
  };
  struct SparseConvLayer {
    int out_channels, in_channels, k, padding;
    std::vector<std::vector<ConvEntry>> filters;  // one list per filter
    Eigen::VectorXd bias;
  };
  struct CsrAffineLayer {
    int in_units, out_units;
    std::vector<std::int32_t> row_start;  // per output unit
    std::vector<std::int32_t> col;        // input unit index
    std::vector<double> value;
    Eigen::VectorXd bias;
  };

  Tensor conv_forward(const SparseConvLayer& layer, const Tensor& input) const;
  Tensor affine_forward(const CsrAffineLayer& layer, const Tensor& input) const;

  int in_channels_, height_, width_;
  std::vector<SparseConvLayer> conv_;
  CsrAffineLayer hidden_;
  CsrAffineLayer output_;
  mutable std::uint64_t last_macs_ = 0;
};

SparseExecutor compile_sparse(const Network& net);

struct LatencyStats {
  double median_us = 0.0;
  double iqr_us = 0.0;
  double min_us = 0.0;
  double max_us = 0.0;
  double per_image_us = 0.0;  // median / batch size
  int batch = 0;
  int repetitions = 0;
  std::vector<double> samples_us;
};

// Median and interquartile range over `repetitions` timed forward passes on a
// random batch; `warmup` untimed passes come first.
LatencyStats bench_inference(const SparseExecutor& executor, int batch_size,
                             int repetitions, int warmup,
                             std::uint64_t input_seed = 42);

struct BenchRow {
  double percentage = 0.0;  // connectivity * 100
  double median_latency_us = 0.0;
  double iqr_us = 0.0;
  double relative_time = 0.0;  // vs the density-1.0 row
  int batch = 0;
  int reps = 0;
  int threads = 1;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::string to_csv() const;
};

// One row per density; densities must include 1.0, which anchors
// relative_time = 1.0 exactly.
BenchReport sweep_relative_time(const NetConfig& shape,
                                const std::vector<double>& densities,
                                int batch_size, int repetitions, int warmup,
                                std::uint64_t seed);

}  // namespace snet
