#include "snet/mask.hpp"

#include <cmath>
#include <stdexcept>

#include "snet/binio.hpp"
#include "snet/rng.hpp"

namespace snet {

namespace {
constexpr std::uint8_t kMaskVersion = 1;
constexpr std::uint8_t kKindDense = 0;
constexpr std::uint8_t kKindReceptiveField = 1;
}  // namespace

FieldKind field_kind_from_string(const std::string& s) {
  if (s == "uniform") return FieldKind::uniform;
  if (s == "gaussian") return FieldKind::gaussian;
  throw std::invalid_argument("unknown field kind: " + s);
}

std::string to_string(FieldKind kind) {
  return kind == FieldKind::uniform ? "uniform" : "gaussian";
}

ProbabilityField build_probability_field(FieldKind kind, int k,
                                         double target_density) {
  if (k < 1) throw std::invalid_argument("probability field: k must be >= 1");
  if (!(target_density > 0.0 && target_density <= 1.0))
    throw std::invalid_argument(
        "probability field: target_density must be in (0, 1]");

  ProbabilityField field;
  field.kind = kind;
  field.k = k;
  field.target_density = target_density;

  if (kind == FieldKind::uniform) {
    field.grid = Eigen::MatrixXd::Constant(k, k, target_density);
    return field;
  }

  const double c = (k - 1) / 2.0;
  const double sigma = k / 3.0;
  Eigen::MatrixXd raw(k, k);
  for (int x = 0; x < k; ++x)
    for (int y = 0; y < k; ++y)
      raw(x, y) = std::exp(-((x - c) * (x - c) + (y - c) * (y - c)) /
                           (2.0 * sigma * sigma));

  // Scale so the mean hits the target; cells pushed above 1 are clamped and
  // the excess is redistributed proportionally over the rest, repeated until
  // nothing exceeds 1. Terminates because each pass clamps at least one more
  // cell; the all-clamped grid is exactly the density-1 case.
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> clamped =
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(k, k,
                                                                    false);
  const double total_target = target_density * k * k;
  Eigen::MatrixXd grid = raw;
  for (;;) {
    double unclamped_sum = 0.0;
    int n_clamped = 0;
    for (int x = 0; x < k; ++x)
      for (int y = 0; y < k; ++y)
        clamped(x, y) ? void(++n_clamped) : void(unclamped_sum += raw(x, y));
    const double need = total_target - n_clamped;
    if (n_clamped == k * k || unclamped_sum == 0.0) break;
    const double scale = need / unclamped_sum;
    bool newly_clamped = false;
    for (int x = 0; x < k; ++x) {
      for (int y = 0; y < k; ++y) {
        if (clamped(x, y)) continue;
        const double v = scale * raw(x, y);
        if (v > 1.0) {
          clamped(x, y) = true;
          newly_clamped = true;
        } else {
          grid(x, y) = v;
        }
      }
    }
    if (!newly_clamped) break;
  }
  for (int x = 0; x < k; ++x)
    for (int y = 0; y < k; ++y)
      if (clamped(x, y)) grid(x, y) = 1.0;

  field.grid = grid;
  return field;
}

ReceptiveFieldMask realize_rf_mask(const ProbabilityField& field,
                                   int out_channels, int in_channels,
                                   std::uint64_t seed) {
  if (out_channels < 1 || in_channels < 1)
    throw std::invalid_argument("realize_rf_mask: channel counts must be >= 1");
  if (field.k < 1 || field.grid.rows() != field.k ||
      field.grid.cols() != field.k)
    throw std::invalid_argument("realize_rf_mask: invalid field");

  ReceptiveFieldMask mask;
  mask.out_channels = out_channels;
  mask.in_channels = in_channels;
  mask.k = field.k;
  mask.bits.assign(static_cast<std::size_t>(out_channels) * in_channels *
                       field.k * field.k,
                   0);

  const int k = field.k;
  for (int o = 0; o < out_channels; ++o) {
    bool any = false;
    for (int c = 0; c < in_channels; ++c) {
      for (int x = 0; x < k; ++x) {
        for (int y = 0; y < k; ++y) {
          const std::size_t idx = mask.index(o, c, x, y);
          if (rng::uniform(seed, idx) < field.grid(x, y)) {
            mask.bits[idx] = 1;
            any = true;
          }
        }
      }
    }
    if (!any) {
      // Repair: set the single highest-probability position, lowest flat
      // index first.
      std::size_t best = mask.index(o, 0, 0, 0);
      double best_p = field.grid(0, 0);
      for (int c = 0; c < in_channels; ++c)
        for (int x = 0; x < k; ++x)
          for (int y = 0; y < k; ++y)
            if (field.grid(x, y) > best_p) {
              best_p = field.grid(x, y);
              best = mask.index(o, c, x, y);
            }
      mask.bits[best] = 1;
    }
  }
  return mask;
}

DenseMask realize_dense_mask(int in_units, int out_units, double density,
                             std::uint64_t seed) {
  if (in_units < 1 || out_units < 1)
    throw std::invalid_argument("realize_dense_mask: unit counts must be >= 1");
  if (!(density > 0.0 && density <= 1.0))
    throw std::invalid_argument("realize_dense_mask: density must be in (0, 1]");

  DenseMask mask;
  mask.in_units = in_units;
  mask.out_units = out_units;
  mask.bits.assign(static_cast<std::size_t>(in_units) * out_units, 0);
  for (int i = 0; i < in_units; ++i)
    for (int o = 0; o < out_units; ++o) {
      const std::size_t idx = mask.index(i, o);
      if (rng::uniform(seed, idx) < density) mask.bits[idx] = 1;
    }
  // Repair output units left with no incoming connection.
  for (int o = 0; o < out_units; ++o) {
    bool any = false;
    for (int i = 0; i < in_units && !any; ++i) any = mask.test(i, o);
    if (!any) mask.bits[mask.index(0, o)] = 1;
  }
  return mask;
}

double measured_density(const ReceptiveFieldMask& mask) {
  std::size_t set = 0;
  for (std::uint8_t b : mask.bits) set += b;
  return static_cast<double>(set) / static_cast<double>(mask.bits.size());
}

double measured_density(const DenseMask& mask) {
  std::size_t set = 0;
  for (std::uint8_t b : mask.bits) set += b;
  return static_cast<double>(set) / static_cast<double>(mask.bits.size());
}

namespace {

void pack_bits(std::vector<std::uint8_t>& out,
               const std::vector<std::uint8_t>& bits) {
  std::uint8_t byte = 0;
  int fill = 0;
  for (std::uint8_t b : bits) {
    byte |= static_cast<std::uint8_t>((b & 1) << fill);
    if (++fill == 8) {
      out.push_back(byte);
      byte = 0;
      fill = 0;
    }
  }
  if (fill > 0) out.push_back(byte);
}

std::vector<std::uint8_t> unpack_bits(binio::Reader& r, std::size_t count) {
  std::vector<std::uint8_t> bits(count);
  const std::uint8_t* packed = r.take((count + 7) / 8);
  for (std::size_t i = 0; i < count; ++i)
    bits[i] = (packed[i / 8] >> (i % 8)) & 1;
  return bits;
}

void append_checksum(std::vector<std::uint8_t>& out) {
  binio::put_u32(out, binio::crc32(out.data(), out.size()));
}

void start_header(std::vector<std::uint8_t>& out, std::uint8_t kind) {
  binio::put_bytes(out, "SNMK", 4);
  binio::put_u8(out, kMaskVersion);
  binio::put_u8(out, kind);
}

}  // namespace

std::vector<std::uint8_t> serialize_mask(const DenseMask& mask) {
  std::vector<std::uint8_t> out;
  start_header(out, kKindDense);
  binio::put_u32(out, static_cast<std::uint32_t>(mask.in_units));
  binio::put_u32(out, static_cast<std::uint32_t>(mask.out_units));
  pack_bits(out, mask.bits);
  append_checksum(out);
  return out;
}

std::vector<std::uint8_t> serialize_mask(const ReceptiveFieldMask& mask) {
  std::vector<std::uint8_t> out;
  start_header(out, kKindReceptiveField);
  binio::put_u32(out, static_cast<std::uint32_t>(mask.out_channels));
  binio::put_u32(out, static_cast<std::uint32_t>(mask.in_channels));
  binio::put_u32(out, static_cast<std::uint32_t>(mask.k));
  pack_bits(out, mask.bits);
  append_checksum(out);
  return out;
}

AnyMask deserialize_mask(const std::uint8_t* data, std::size_t size) {
  using binio::FormatError;
  binio::Reader r(data, size);
  const std::uint8_t* magic = r.take(4);
  if (std::memcmp(magic, "SNMK", 4) != 0)
    throw FormatError(FormatError::Kind::bad_magic, "mask: bad magic");
  const std::uint8_t version = r.u8();
  if (version != kMaskVersion)
    throw FormatError(FormatError::Kind::bad_header,
                      "mask: unsupported version");
  const std::uint8_t kind = r.u8();

  AnyMask result;
  if (kind == kKindDense) {
    DenseMask mask;
    mask.in_units = static_cast<int>(r.u32());
    mask.out_units = static_cast<int>(r.u32());
    if (mask.in_units < 1 || mask.out_units < 1)
      throw FormatError(FormatError::Kind::bad_header,
                        "mask: invalid dimensions");
    mask.bits = unpack_bits(
        r, static_cast<std::size_t>(mask.in_units) * mask.out_units);
    result = std::move(mask);
  } else if (kind == kKindReceptiveField) {
    ReceptiveFieldMask mask;
    mask.out_channels = static_cast<int>(r.u32());
    mask.in_channels = static_cast<int>(r.u32());
    mask.k = static_cast<int>(r.u32());
    if (mask.out_channels < 1 || mask.in_channels < 1 || mask.k < 1)
      throw FormatError(FormatError::Kind::bad_header,
                        "mask: invalid dimensions");
    mask.bits = unpack_bits(r, static_cast<std::size_t>(mask.out_channels) *
                                   mask.in_channels * mask.k * mask.k);
    result = std::move(mask);
  } else {
    throw FormatError(FormatError::Kind::bad_header, "mask: unknown kind");
  }

  const std::size_t body = r.pos();
  const std::uint32_t stored = r.u32();
  if (stored != binio::crc32(data, body))
    throw FormatError(FormatError::Kind::checksum, "mask: checksum mismatch");
  return result;
}

}  // namespace snet
