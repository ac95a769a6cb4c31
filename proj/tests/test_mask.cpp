#include <doctest.h>

#include <cmath>

#include "snet/binio.hpp"
#include "snet/mask.hpp"

using namespace snet;

TEST_CASE("uniform field is constant at the target density") {
  const ProbabilityField field =
      build_probability_field(FieldKind::uniform, 5, 0.39);
  CHECK(field.grid.rows() == 5);
  CHECK((field.grid.array() == 0.39).all());
}

TEST_CASE("field rejects bad parameters") {
  CHECK_THROWS_AS(build_probability_field(FieldKind::uniform, 0, 0.5),
                  std::invalid_argument);
  CHECK_THROWS_AS(build_probability_field(FieldKind::uniform, 5, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(build_probability_field(FieldKind::gaussian, 5, 1.5),
                  std::invalid_argument);
}

TEST_CASE("gaussian center-to-corner ratio is exp(1.44) for k=5") {
  // With c=2 and sigma=5/3: exp(8 / (2 * 25/9)) = e^1.44. A low density
  // avoids clamping, so the raw ratio survives the rescale.
  const ProbabilityField field =
      build_probability_field(FieldKind::gaussian, 5, 0.1);
  const double ratio = field.grid(2, 2) / field.grid(0, 0);
  CHECK(ratio == doctest::Approx(std::exp(1.44)).epsilon(1e-12));
}

TEST_CASE("gaussian degenerate k=1 grid") {
  const ProbabilityField field =
      build_probability_field(FieldKind::gaussian, 1, 0.5);
  CHECK(field.grid(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("grid mean equals target density to 1e-12") {
  for (FieldKind kind : {FieldKind::uniform, FieldKind::gaussian})
    for (double density : {0.05, 0.1, 0.39, 0.75, 0.99, 1.0})
      for (int k : {1, 3, 5, 7}) {
        const ProbabilityField field =
            build_probability_field(kind, k, density);
        CHECK(std::abs(field.grid.mean() - density) < 1e-12);
        CHECK((field.grid.array() <= 1.0 + 1e-15).all());
        CHECK((field.grid.array() >= 0.0).all());
      }
}

TEST_CASE("gaussian grid decreases with distance from center") {
  // High density forces clamping near the center; check the unclamped tail
  // still decays strictly along the diagonal.
  for (double density : {0.1, 0.39}) {
    const ProbabilityField field =
        build_probability_field(FieldKind::gaussian, 7, density);
    for (int d = 0; d < 3; ++d)
      CHECK(field.grid(3 - d, 3 - d) > field.grid(3 - d - 1, 3 - d - 1));
  }
}

TEST_CASE("gaussian grid is symmetric under rotation and reflection") {
  const ProbabilityField field =
      build_probability_field(FieldKind::gaussian, 5, 0.39);
  const Eigen::MatrixXd& g = field.grid;
  for (int x = 0; x < 5; ++x)
    for (int y = 0; y < 5; ++y) {
      CHECK(g(x, y) == doctest::Approx(g(y, x)).epsilon(1e-15));
      CHECK(g(x, y) == doctest::Approx(g(4 - x, y)).epsilon(1e-15));
      CHECK(g(x, y) == doctest::Approx(g(4 - y, x)).epsilon(1e-15));  // 90 deg
    }
}

TEST_CASE("all-ones field realizes a fully set mask") {
  const ProbabilityField field =
      build_probability_field(FieldKind::uniform, 3, 1.0);
  const ReceptiveFieldMask mask = realize_rf_mask(field, 4, 2, 9);
  CHECK(measured_density(mask) == 1.0);
}

TEST_CASE("uniform rf mask density converges to the target") {
  const ProbabilityField field =
      build_probability_field(FieldKind::uniform, 5, 0.39);
  const int trials = 10000;
  // One filter, three channels per realization: 75 Bernoulli(0.39) bits.
  double total_bits = 0.0;
  const double n_bits = 75.0;
  for (int s = 0; s < trials; ++s) {
    const ReceptiveFieldMask mask = realize_rf_mask(field, 1, 3, s);
    total_bits += measured_density(mask) * n_bits;
  }
  const double mean_density = total_bits / (trials * n_bits);
  const double se = std::sqrt(0.39 * 0.61 / (trials * n_bits));
  CHECK(std::abs(mean_density - 0.39) < 3 * se);
}

TEST_CASE("gaussian rf mask per-position frequency matches the grid") {
  const ProbabilityField field =
      build_probability_field(FieldKind::gaussian, 5, 0.39);
  const int trials = 10000;
  Eigen::MatrixXd hits = Eigen::MatrixXd::Zero(5, 5);
  for (int s = 0; s < trials; ++s) {
    const ReceptiveFieldMask mask = realize_rf_mask(field, 1, 1, s);
    for (int x = 0; x < 5; ++x)
      for (int y = 0; y < 5; ++y)
        if (mask.test(0, 0, x, y)) hits(x, y) += 1.0;
  }
  for (int x = 0; x < 5; ++x)
    for (int y = 0; y < 5; ++y) {
      const double p = field.grid(x, y);
      const double se = std::sqrt(p * (1 - p) / trials);
      CHECK(std::abs(hits(x, y) / trials - p) < 3 * se + 1e-12);
    }
}

TEST_CASE("rf mask determinism") {
  const ProbabilityField field =
      build_probability_field(FieldKind::gaussian, 5, 0.39);
  CHECK(realize_rf_mask(field, 8, 3, 42) == realize_rf_mask(field, 8, 3, 42));
}

TEST_CASE("dense mask density and determinism") {
  CHECK(measured_density(realize_dense_mask(16, 16, 1.0, 1)) == 1.0);
  CHECK(realize_dense_mask(64, 32, 0.39, 7) ==
        realize_dense_mask(64, 32, 0.39, 7));

  const int trials = 10000;
  const double n_bits = 64.0;
  double total = 0.0;
  for (int s = 0; s < trials; ++s)
    total += measured_density(realize_dense_mask(8, 8, 0.39, s)) * n_bits;
  // Repair can only add bits; at 0.39 with 8 inputs per unit the empty-column
  // probability is ~0.019, a bias of ~0.019/8 per column's 8 bits.
  const double repair_bias = std::pow(1 - 0.39, 8) / 8.0;
  const double se = std::sqrt(0.39 * 0.61 / (trials * n_bits));
  CHECK(std::abs(total / (trials * n_bits) - 0.39 - repair_bias) < 4 * se);
}

TEST_CASE("empty-column repair guarantees an incoming connection") {
  for (int seed = 0; seed < 200; ++seed) {
    const DenseMask mask = realize_dense_mask(8, 1, 0.01, seed);
    int incoming = 0;
    for (int i = 0; i < 8; ++i) incoming += mask.test(i, 0);
    CHECK(incoming >= 1);
  }
}

TEST_CASE("empty-filter repair picks the highest-probability position") {
  const ProbabilityField field =
      build_probability_field(FieldKind::gaussian, 5, 0.01);
  for (int seed = 0; seed < 500; ++seed) {
    const ReceptiveFieldMask mask = realize_rf_mask(field, 1, 1, seed);
    int set = 0;
    for (std::uint8_t b : mask.bits) set += b;
    CHECK(set >= 1);
  }
}

TEST_CASE("measured density arithmetic") {
  DenseMask mask;
  mask.in_units = 10;
  mask.out_units = 10;
  mask.bits.assign(100, 1);
  CHECK(measured_density(mask) == 1.0);
  mask.bits[17] = 0;
  CHECK(measured_density(mask) == doctest::Approx(0.99).epsilon(1e-15));
}

TEST_CASE("mask serialization round-trips") {
  const ProbabilityField field =
      build_probability_field(FieldKind::gaussian, 5, 0.39);
  const ReceptiveFieldMask rf = realize_rf_mask(field, 8, 3, 21);
  const auto rf_bytes = serialize_mask(rf);
  CHECK(std::get<ReceptiveFieldMask>(deserialize_mask(rf_bytes)) == rf);

  const DenseMask dense = realize_dense_mask(32, 16, 0.5, 4);
  const auto dense_bytes = serialize_mask(dense);
  CHECK(std::get<DenseMask>(deserialize_mask(dense_bytes)) == dense);
}

TEST_CASE("mask deserialization failure modes are distinct") {
  using Kind = binio::FormatError::Kind;
  const DenseMask mask = realize_dense_mask(16, 8, 0.5, 1);
  auto bytes = serialize_mask(mask);

  SUBCASE("bad magic") {
    auto bad = bytes;
    bad[0] = 'X';
    try {
      deserialize_mask(bad);
      FAIL("expected FormatError");
    } catch (const binio::FormatError& e) {
      CHECK(e.kind == Kind::bad_magic);
    }
  }
  SUBCASE("truncated payload") {
    auto bad = bytes;
    bad.resize(bytes.size() - 6);
    try {
      deserialize_mask(bad);
      FAIL("expected FormatError");
    } catch (const binio::FormatError& e) {
      CHECK(e.kind == Kind::truncated);
    }
  }
  SUBCASE("corrupted checksum") {
    auto bad = bytes;
    bad[bytes.size() / 2] ^= 0x40;
    try {
      deserialize_mask(bad);
      FAIL("expected FormatError");
    } catch (const binio::FormatError& e) {
      CHECK(e.kind == Kind::checksum);
    }
  }
}
