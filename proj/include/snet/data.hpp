#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "snet/tensor.hpp"

namespace snet {

// Images are (N, C, 32, 32). Values start in [0, 1]; standardize() shifts
// them to zero-mean unit-variance per channel using train-split statistics.
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  std::string split;  // "train" or "test"
  bool standardized = false;
  Eigen::VectorXd channel_mean;  // stats used for standardization
  Eigen::VectorXd channel_std;

  Eigen::Index size() const { return images.dim(0); }
  int channels() const { return static_cast<int>(images.dim(1)); }
};

// Big-endian IDX pair (image magic 0x00000803, label magic 0x00000801).
// 28x28 inputs are zero-padded to 32x32, centered.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// CIFAR-10 binary batches: records of 1 label byte + 3072 pixel bytes
// (R, G, B planes, row-major).
Dataset load_cifar10(const std::vector<std::string>& batch_paths);

// Raw-tensor import: magic `SNDS`, version byte, u32 N/C/H/W, N label bytes,
// little-endian f64 pixel payload in [0, 1], CRC-32.
Dataset load_snds(const std::string& path);
void save_snds(const Dataset& dataset, const std::string& path);

// Computes per-channel mean/std on `train` and applies them to both splits.
void standardize(Dataset& train, Dataset& test);

// Recovers the original byte values (inverts standardization and the
// [0, 1] scaling).
std::vector<std::uint8_t> denormalized_bytes(const Dataset& dataset);

// Class-balanced subset: exactly n_per_class examples of each class,
// chosen by a seeded per-class draw.
Dataset subset(const Dataset& dataset, int n_per_class, std::uint64_t seed);

struct Batch {
  Tensor images;
  std::vector<int> labels;
};

Batch gather(const Dataset& dataset, const std::uint32_t* indices,
             std::size_t count);

// Seeded-permutation batch order. The last batch may be short.
class BatchIterator {
 public:
  BatchIterator(const Dataset& dataset, int batch_size, std::uint64_t shuffle_seed);
  bool next(Batch& batch);
  std::size_t n_batches() const;

 private:
  const Dataset& dataset_;
  int batch_size_;
  std::vector<std::uint32_t> order_;
  std::size_t cursor_ = 0;
};

// crc32 of a file on disk, for dataset manifests.
std::uint32_t file_checksum(const std::string& path);

}  // namespace snet
