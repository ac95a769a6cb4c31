#include "snet/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <stdexcept>

#include "snet/rng.hpp"

namespace snet {

namespace {

std::vector<double> sorted(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v;
}

double percentile(const std::vector<double>& sorted_v, double q) {
  const double pos = q * (sorted_v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted_v.size() - 1);
  const double frac = pos - lo;
  return sorted_v[lo] * (1.0 - frac) + sorted_v[hi] * frac;
}

}  // namespace

SparseExecutor::SparseExecutor(const Network& net)
    : in_channels_(net.config.in_channels),
      height_(net.config.height),
      width_(net.config.width) {
  for (const ConvLayer& layer : net.conv) {
    SparseConvLayer sparse;
    sparse.out_channels = layer.mask.out_channels;
    sparse.in_channels = layer.mask.in_channels;
    sparse.k = layer.mask.k;
    sparse.padding = (layer.mask.k - 1) / 2;
    sparse.bias = layer.bias;
    sparse.filters.resize(sparse.out_channels);
    for (int o = 0; o < sparse.out_channels; ++o)
      for (int c = 0; c < sparse.in_channels; ++c)
        for (int dx = 0; dx < sparse.k; ++dx)
          for (int dy = 0; dy < sparse.k; ++dy)
            if (layer.mask.test(o, c, dx, dy))
              sparse.filters[o].push_back(
                  {c, dx, dy, layer.weights[static_cast<Eigen::Index>(
                                  layer.mask.index(o, c, dx, dy))]});
    conv_.push_back(std::move(sparse));
  }

  auto to_csr = [](const AffineLayer& layer) {
    CsrAffineLayer csr;
    csr.in_units = layer.mask.in_units;
    csr.out_units = layer.mask.out_units;
    csr.bias = layer.bias;
    csr.row_start.push_back(0);
    for (int o = 0; o < csr.out_units; ++o) {
      for (int i = 0; i < csr.in_units; ++i)
        if (layer.mask.test(i, o)) {
          csr.col.push_back(i);
          csr.value.push_back(layer.weights(i, o));
        }
      csr.row_start.push_back(static_cast<std::int32_t>(csr.col.size()));
    }
    return csr;
  };
  hidden_ = to_csr(net.hidden);
  output_ = to_csr(net.output);
}

std::size_t SparseExecutor::entry_count() const {
  std::size_t n = 0;
  for (const SparseConvLayer& layer : conv_)
    for (const auto& filter : layer.filters) n += filter.size();
  n += hidden_.value.size();
  n += output_.value.size();
  return n;
}

Tensor SparseExecutor::conv_forward(const SparseConvLayer& layer,
                                    const Tensor& input) const {
  const Eigen::Index batch = input.dim(0);
  const Eigen::Index height = input.dim(2), width = input.dim(3);
  const int pad = layer.padding;
  const Eigen::Index pheight = height + 2 * pad, pwidth = width + 2 * pad;

  Tensor output({batch, layer.out_channels, height, width});
  thread_local std::vector<double> padded;
  padded.assign(static_cast<std::size_t>(layer.in_channels) * pheight * pwidth,
                0.0);

  for (Eigen::Index n = 0; n < batch; ++n) {
    // Zero-padded copy so every entry applies at every output position.
    for (int c = 0; c < layer.in_channels; ++c) {
      const double* src = input.data() + (n * layer.in_channels + c) * height *
                                             width;
      double* dst = padded.data() + static_cast<std::size_t>(c) * pheight *
                                        pwidth;
      for (Eigen::Index r = 0; r < height; ++r)
        std::copy_n(src + r * width, width,
                    dst + (r + pad) * pwidth + pad);
    }
    for (int o = 0; o < layer.out_channels; ++o) {
      double* out =
          output.data() + (n * layer.out_channels + o) * height * width;
      std::fill_n(out, height * width, layer.bias[o]);
      for (const ConvEntry& e : layer.filters[o]) {
        const double* plane = padded.data() +
                              static_cast<std::size_t>(e.channel) * pheight *
                                  pwidth;
        for (Eigen::Index oy = 0; oy < height; ++oy) {
          const double* in_row = plane + (oy + e.dx) * pwidth + e.dy;
          double* out_row = out + oy * width;
          for (Eigen::Index ox = 0; ox < width; ++ox)
            out_row[ox] += e.weight * in_row[ox];
        }
      }
      last_macs_ += static_cast<std::uint64_t>(layer.filters[o].size()) *
                    height * width;
    }
  }
  return output;
}

Tensor SparseExecutor::affine_forward(const CsrAffineLayer& layer,
                                      const Tensor& input) const {
  const Eigen::Index batch = input.dim(0);
  Tensor output({batch, layer.out_units});
  for (Eigen::Index n = 0; n < batch; ++n) {
    const double* x = input.data() + n * layer.in_units;
    double* y = output.data() + n * layer.out_units;
    for (int o = 0; o < layer.out_units; ++o) {
      double acc = layer.bias[o];
      for (std::int32_t j = layer.row_start[o]; j < layer.row_start[o + 1];
           ++j)
        acc += layer.value[j] * x[layer.col[j]];
      y[o] = acc;
    }
  }
  last_macs_ += static_cast<std::uint64_t>(layer.value.size()) * batch;
  return output;
}

Tensor SparseExecutor::forward(const Tensor& batch) const {
  if (batch.shape().size() != 4 || batch.dim(1) != in_channels_ ||
      batch.dim(2) != height_ || batch.dim(3) != width_)
    throw std::invalid_argument("sparse forward: batch shape mismatch");
  last_macs_ = 0;
  Tensor x = batch;
  for (const SparseConvLayer& layer : conv_) {
    Tensor pre = conv_forward(layer, x);
    Tensor activated = relu_forward(pre);
    x = maxpool2x2_forward(activated).output;
  }
  const Eigen::Index n = x.dim(0);
  Tensor flat({n, x.size() / n}, x.array());
  Tensor hidden_act = relu_forward(affine_forward(hidden_, flat));
  return affine_forward(output_, hidden_act);
}

std::vector<int> SparseExecutor::predict(const Tensor& batch) const {
  const Tensor logits = forward(batch);
  const Eigen::Index n = logits.dim(0), classes = logits.dim(1);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double* row = logits.data() + i * classes;
    int best = 0;
    for (Eigen::Index c = 1; c < classes; ++c)
      if (row[c] > row[best]) best = static_cast<int>(c);
    labels[static_cast<std::size_t>(i)] = best;
  }
  return labels;
}

SparseExecutor compile_sparse(const Network& net) {
  return SparseExecutor(net);
}

LatencyStats bench_inference(const SparseExecutor& executor, int batch_size,
                             int repetitions, int warmup,
                             std::uint64_t input_seed) {
  if (repetitions < 10)
    throw std::invalid_argument("bench_inference: repetitions must be >= 10");
  if (warmup < 1)
    throw std::invalid_argument("bench_inference: warmup must be >= 1");

  // Random but reproducible input.
  Tensor batch({batch_size, executor.in_channels(), executor.height(),
                executor.width()});
  for (Eigen::Index i = 0; i < batch.size(); ++i)
    batch[i] = rng::uniform(input_seed, static_cast<std::uint64_t>(i));

  volatile double sink = 0.0;
  for (int i = 0; i < warmup; ++i) sink += executor.forward(batch)[0];

  LatencyStats stats;
  stats.batch = batch_size;
  stats.repetitions = repetitions;
  stats.samples_us.reserve(static_cast<std::size_t>(repetitions));
  for (int i = 0; i < repetitions; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    sink += executor.forward(batch)[0];
    const auto t1 = std::chrono::steady_clock::now();
    stats.samples_us.push_back(
        std::chrono::duration<double, std::micro>(t1 - t0).count());
  }
  (void)sink;

  const std::vector<double> s = sorted(stats.samples_us);
  stats.median_us = percentile(s, 0.5);
  stats.iqr_us = percentile(s, 0.75) - percentile(s, 0.25);
  stats.min_us = s.front();
  stats.max_us = s.back();
  stats.per_image_us = stats.median_us / batch_size;
  return stats;
}

std::string BenchReport::to_csv() const {
  std::string csv =
      "percentage,median_latency_us,iqr_us,relative_time,batch,reps,threads\n";
  char line[256];
  for (const BenchRow& row : rows) {
    std::snprintf(line, sizeof(line), "%.4f,%.3f,%.3f,%.6f,%d,%d,%d\n",
                  row.percentage, row.median_latency_us, row.iqr_us,
                  row.relative_time, row.batch, row.reps, row.threads);
    csv += line;
  }
  return csv;
}

BenchReport sweep_relative_time(const NetConfig& shape,
                                const std::vector<double>& densities,
                                int batch_size, int repetitions, int warmup,
                                std::uint64_t seed) {
  if (densities.empty())
    throw std::invalid_argument("sweep_relative_time: empty density list");
  if (std::find(densities.begin(), densities.end(), 1.0) == densities.end())
    throw std::invalid_argument(
        "sweep_relative_time: densities must include the 1.0 baseline");

  BenchReport report;
  double baseline_median = 0.0;
  for (double density : densities) {
    NetConfig config = shape;
    for (ConvStageConfig& stage : config.conv) stage.density = density;
    config.hidden_density = density;
    config.mask_seed = rng::derive(seed, static_cast<std::uint64_t>(
                                             density * 1e6));
    Network net = build_network(config);
    SparseExecutor executor = compile_sparse(net);
    LatencyStats stats =
        bench_inference(executor, batch_size, repetitions, warmup, seed);
    BenchRow row;
    row.percentage = net.connectivity() * 100.0;
    row.median_latency_us = stats.median_us;
    row.iqr_us = stats.iqr_us;
    row.batch = batch_size;
    row.reps = repetitions;
    row.threads = 1;
    if (density == 1.0) baseline_median = stats.median_us;
    report.rows.push_back(row);
  }
  for (std::size_t i = 0; i < densities.size(); ++i)
    report.rows[i].relative_time =
        densities[i] == 1.0
            ? 1.0
            : report.rows[i].median_latency_us / baseline_median;
  return report;
}

}  // namespace snet
