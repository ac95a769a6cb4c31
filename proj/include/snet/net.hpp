#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "snet/mask.hpp"
#include "snet/tensor.hpp"

namespace snet {

struct ConvStageConfig {
  int filters = 0;
  int kernel = 5;
  FieldKind kind = FieldKind::uniform;
  double density = 1.0;

  friend bool operator==(const ConvStageConfig&,
                         const ConvStageConfig&) = default;
};

// LeNet-style topology: per conv stage [conv same-pad -> relu -> maxpool 2x2],
// then flatten -> masked affine -> relu -> dense affine to `classes`.
// The classifier head is always dense; stochastic connectivity applies to the
// convolutional stages and the hidden layer only.
struct NetConfig {
  int in_channels = 1, height = 32, width = 32;
  std::vector<ConvStageConfig> conv;
  int hidden_units = 64;
  double hidden_density = 1.0;
  int classes = 10;
  std::uint64_t init_seed = 1;
  std::uint64_t mask_seed = 1;

  void validate() const;
  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

// The paper-scale configuration: 3 conv stages of 32/32/64 5x5 filters and a
// 64-unit hidden layer. `kind`/`density` apply to every masked layer.
NetConfig paper_config(int in_channels, FieldKind kind, double density);

struct ConvLayer {
  Tensor weights;  // (O, C, k, k); exactly 0 at masked positions
  Eigen::VectorXd bias;
  ReceptiveFieldMask mask;
  Tensor velocity;
  Eigen::VectorXd bias_velocity;
};

struct AffineLayer {
  Eigen::MatrixXd weights;  // (in, out)
  Eigen::VectorXd bias;
  DenseMask mask;  // all-ones for the dense output layer
  Eigen::MatrixXd velocity;
  Eigen::VectorXd bias_velocity;
};

struct Network {
  NetConfig config;
  std::vector<ConvLayer> conv;
  AffineLayer hidden;
  AffineLayer output;

  std::size_t formed_connections() const;  // set mask bits + output weights
  std::size_t dense_connections() const;   // all weights at density 1
  double connectivity() const;             // formed / dense, in (0, 1]
  double connectivity_excluding_output() const;
  std::size_t parameter_count() const;     // weights + biases
  std::uint64_t mask_fingerprint() const;  // CRC over all mask bits
};

Network build_network(const NetConfig& config);

// Per-layer density that makes the aggregate connectivity (dense output
// layer included in the denominator) hit `target`.
double solve_density_for_connectivity(const NetConfig& shape, double target);

Tensor forward(const Network& net, const Tensor& batch);

// Class predictions per example (argmax of logits, lowest class wins ties).
std::vector<int> predict(const Network& net, const Tensor& batch);

struct NetGrads {
  std::vector<Conv2dGrads> conv;
  AffineGrads hidden;
  AffineGrads output;
};

struct LossResult {
  double loss = 0.0;
  Tensor logits;
  NetGrads grads;
};

LossResult loss_and_grads(const Network& net, const Tensor& batch,
                          const std::vector<int>& labels);

// SGD with momentum: v = momentum * v - lr * g; w += v.
// Masked positions stay at exactly 0.
void apply_update(Network& net, const NetGrads& grads, double lr,
                  double momentum);

// Checkpoint format: magic `SNCK`, version, config, mask blocks (mask file
// format), little-endian f64 parameter and velocity blocks, CRC-32.
void save_checkpoint(const Network& net, const std::string& path);
Network load_checkpoint(const std::string& path);

std::vector<std::uint8_t> serialize_network(const Network& net);
Network deserialize_network(const std::uint8_t* data, std::size_t size);

}  // namespace snet
