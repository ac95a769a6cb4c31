#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace snet {

enum class FieldKind : std::uint8_t { uniform = 0, gaussian = 1 };

FieldKind field_kind_from_string(const std::string& s);
std::string to_string(FieldKind kind);

// Per-position connection probabilities over a k x k receptive field.
// The grid mean equals target_density, so the expected realized density
// matches the target exactly.
struct ProbabilityField {
  FieldKind kind = FieldKind::uniform;
  int k = 0;
  double target_density = 0.0;
  Eigen::MatrixXd grid;  // k x k, entries in [0, 1]
};

// uniform: every cell equals target_density.
// gaussian: cell (x, y) proportional to exp(-((x-c)^2 + (y-c)^2) / (2 s^2))
// with c = (k-1)/2 and s = k/3, rescaled so the grid mean equals
// target_density; cells pushed past 1 are clamped and the excess mass is
// redistributed proportionally over the rest until no cell exceeds 1.
ProbabilityField build_probability_field(FieldKind kind, int k,
                                         double target_density);

// Binary connectivity of one convolutional layer: bit (o, c, x, y) marks a
// formed connection in output filter o. The same realized pattern is applied
// at every spatial position of the convolution.
struct ReceptiveFieldMask {
  int out_channels = 0, in_channels = 0, k = 0;
  std::vector<std::uint8_t> bits;  // out * in * k * k, row-major, 0/1

  std::size_t index(int o, int c, int x, int y) const {
    return ((static_cast<std::size_t>(o) * in_channels + c) * k + x) * k + y;
  }
  bool test(int o, int c, int x, int y) const {
    return bits[index(o, c, x, y)] != 0;
  }
  friend bool operator==(const ReceptiveFieldMask&,
                         const ReceptiveFieldMask&) = default;
};

// Binary connectivity of a fully connected layer; bit (i, o) marks a formed
// connection from input unit i to output unit o.
struct DenseMask {
  int in_units = 0, out_units = 0;
  std::vector<std::uint8_t> bits;  // in * out, row-major (input-major), 0/1

  std::size_t index(int i, int o) const {
    return static_cast<std::size_t>(i) * out_units + o;
  }
  bool test(int i, int o) const { return bits[index(i, o)] != 0; }
  friend bool operator==(const DenseMask&, const DenseMask&) = default;
};

// Bits drawn independently with the field's per-position probability,
// identically distributed across input channels. A filter realized with no
// connections gets its single highest-probability position set (ties broken
// by lowest flat index). Deterministic per seed.
ReceptiveFieldMask realize_rf_mask(const ProbabilityField& field,
                                   int out_channels, int in_channels,
                                   std::uint64_t seed);

// i.i.d. Bernoulli(density) bits with the same empty-output repair rule.
DenseMask realize_dense_mask(int in_units, int out_units, double density,
                             std::uint64_t seed);

double measured_density(const ReceptiveFieldMask& mask);
double measured_density(const DenseMask& mask);

// File format: magic `SNMK`, version byte, kind byte (0 = dense,
// 1 = receptive-field), little-endian u32 dimensions, bit-packed payload
// (LSB first), CRC-32 of everything before it.
std::vector<std::uint8_t> serialize_mask(const DenseMask& mask);
std::vector<std::uint8_t> serialize_mask(const ReceptiveFieldMask& mask);

using AnyMask = std::variant<DenseMask, ReceptiveFieldMask>;
AnyMask deserialize_mask(const std::uint8_t* data, std::size_t size);
inline AnyMask deserialize_mask(const std::vector<std::uint8_t>& bytes) {
  return deserialize_mask(bytes.data(), bytes.size());
}

}  // namespace snet
