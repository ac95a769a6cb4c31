#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "snet/binio.hpp"
#include "snet/data.hpp"
#include "snet/rng.hpp"

using namespace snet;
namespace fs = std::filesystem;

namespace {

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("snet_test_" + name);
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  REQUIRE(f.good());
}

// A deterministic fake IDX pair: pixel (i, r, c) = (i*7 + r*3 + c) % 256,
// label i % 10.
struct FakeIdx {
  fs::path images, labels;
  std::size_t n, rows, cols;
};

FakeIdx make_idx(std::size_t n, std::size_t rows, std::size_t cols,
                 const std::string& tag) {
  std::vector<std::uint8_t> img;
  put_be32(img, 0x00000803);
  put_be32(img, static_cast<std::uint32_t>(n));
  put_be32(img, static_cast<std::uint32_t>(rows));
  put_be32(img, static_cast<std::uint32_t>(cols));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        img.push_back(static_cast<std::uint8_t>((i * 7 + r * 3 + c) % 256));

  std::vector<std::uint8_t> lab;
  put_be32(lab, 0x00000801);
  put_be32(lab, static_cast<std::uint32_t>(n));
  for (std::size_t i = 0; i < n; ++i)
    lab.push_back(static_cast<std::uint8_t>(i % 10));

  FakeIdx out{temp_file(tag + "_images.idx"), temp_file(tag + "_labels.idx"),
              n, rows, cols};
  write_bytes(out.images, img);
  write_bytes(out.labels, lab);
  return out;
}

Dataset synthetic_dataset(std::size_t n, int channels, std::uint64_t seed) {
  Dataset ds;
  ds.images = Tensor({static_cast<Eigen::Index>(n), channels, 32, 32});
  ds.labels.resize(n);
  for (Eigen::Index i = 0; i < ds.images.size(); ++i)
    ds.images[i] =
        std::round(rng::uniform(seed, static_cast<std::uint64_t>(i)) * 255.0) /
        255.0;
  for (std::size_t i = 0; i < n; ++i)
    ds.labels[i] = static_cast<int>(rng::stream(seed + 1, i) % 10);
  ds.split = "train";
  return ds;
}

}  // namespace

TEST_CASE("idx loading pads 28x28 to centered 32x32") {
  const FakeIdx files = make_idx(30, 28, 28, "mnist28");
  const Dataset ds = load_idx(files.images.string(), files.labels.string());
  CHECK(ds.size() == 30);
  CHECK(ds.images.shape() == std::vector<Eigen::Index>{30, 1, 32, 32});
  CHECK_FALSE(ds.standardized);

  for (Eigen::Index i = 0; i < 30; ++i) {
    // Padding border stays zero.
    for (int j = 0; j < 32; ++j) {
      CHECK(ds.images.at4(i, 0, 0, j) == 0.0);
      CHECK(ds.images.at4(i, 0, 31, j) == 0.0);
      CHECK(ds.images.at4(i, 0, j, 1) == 0.0);
      CHECK(ds.images.at4(i, 0, j, 30) == 0.0);
    }
    CHECK(ds.labels[static_cast<std::size_t>(i)] == static_cast<int>(i % 10));
  }
  // Interior pixel (r, c) of image i lands at (r + 2, c + 2).
  CHECK(ds.images.at4(3, 0, 2, 2) == doctest::Approx((3 * 7) % 256 / 255.0));
  CHECK(ds.images.at4(3, 0, 7, 6) ==
        doctest::Approx((3 * 7 + 5 * 3 + 4) % 256 / 255.0));

  fs::remove(files.images);
  fs::remove(files.labels);
}

TEST_CASE("idx loading keeps native 32x32 unpadded") {
  const FakeIdx files = make_idx(5, 32, 32, "idx32");
  const Dataset ds = load_idx(files.images.string(), files.labels.string());
  CHECK(ds.images.at4(0, 0, 0, 0) == 0.0);  // pixel value (0*7+0+0)%256
  CHECK(ds.images.at4(1, 0, 0, 0) == doctest::Approx(7 / 255.0));
  fs::remove(files.images);
  fs::remove(files.labels);
}

TEST_CASE("idx loading rejects malformed files") {
  const FakeIdx files = make_idx(4, 28, 28, "idxbad");
  SUBCASE("bad magic") {
    std::vector<std::uint8_t> img = binio::read_file(files.images.string());
    img[3] = 0x07;
    const fs::path bad = temp_file("idxbad2_images.idx");
    write_bytes(bad, img);
    CHECK_THROWS_AS(load_idx(bad.string(), files.labels.string()),
                    std::runtime_error);
    fs::remove(bad);
  }
  SUBCASE("count mismatch") {
    std::vector<std::uint8_t> lab = binio::read_file(files.labels.string());
    lab[7] = 9;
    const fs::path bad = temp_file("idxbad2_labels.idx");
    write_bytes(bad, lab);
    CHECK_THROWS_AS(load_idx(files.images.string(), bad.string()),
                    std::runtime_error);
    fs::remove(bad);
  }
  SUBCASE("truncated pixels") {
    std::vector<std::uint8_t> img = binio::read_file(files.images.string());
    img.resize(img.size() - 10);
    const fs::path bad = temp_file("idxbad2t_images.idx");
    write_bytes(bad, img);
    CHECK_THROWS_AS(load_idx(bad.string(), files.labels.string()),
                    std::runtime_error);
    fs::remove(bad);
  }
  fs::remove(files.images);
  fs::remove(files.labels);
}

TEST_CASE("cifar10 batch parsing") {
  // Two tiny batches of 3 and 2 records.
  auto make_batch = [](std::size_t n, std::uint8_t base) {
    std::vector<std::uint8_t> out;
    for (std::size_t i = 0; i < n; ++i) {
      out.push_back(static_cast<std::uint8_t>((base + i) % 10));
      for (std::size_t p = 0; p < 3072; ++p)
        out.push_back(static_cast<std::uint8_t>((base + i + p) % 256));
    }
    return out;
  };
  const fs::path a = temp_file("cifar_a.bin"), b = temp_file("cifar_b.bin");
  write_bytes(a, make_batch(3, 0));
  write_bytes(b, make_batch(2, 5));

  const Dataset ds = load_cifar10({a.string(), b.string()});
  CHECK(ds.size() == 5);
  CHECK(ds.channels() == 3);
  CHECK(ds.labels == std::vector<int>{0, 1, 2, 5, 6});
  // Record 3 (first of batch b): pixel p=0 is (5+0+0)%256 = 5.
  CHECK(ds.images.at4(3, 0, 0, 0) == doctest::Approx(5 / 255.0));
  // Channel planes are contiguous: pixel p=1024 starts the G plane.
  CHECK(ds.images.at4(3, 1, 0, 0) == doctest::Approx((5 + 1024) % 256 / 255.0));

  SUBCASE("rejects partial records") {
    std::vector<std::uint8_t> broken = make_batch(1, 0);
    broken.pop_back();
    const fs::path c = temp_file("cifar_c.bin");
    write_bytes(c, broken);
    CHECK_THROWS_AS(load_cifar10({c.string()}), std::runtime_error);
    fs::remove(c);
  }
  fs::remove(a);
  fs::remove(b);
}

TEST_CASE("snds round-trip and corruption detection") {
  const Dataset ds = synthetic_dataset(12, 3, 100);
  const fs::path path = temp_file("roundtrip.snds");
  save_snds(ds, path.string());

  const Dataset back = load_snds(path.string());
  CHECK(back.images == ds.images);
  CHECK(back.labels == ds.labels);

  std::vector<std::uint8_t> bytes = binio::read_file(path.string());
  bytes[bytes.size() / 2] ^= 0x01;
  const fs::path bad = temp_file("corrupt.snds");
  write_bytes(bad, bytes);
  try {
    load_snds(bad.string());
    FAIL("expected FormatError");
  } catch (const binio::FormatError& e) {
    CHECK(e.kind == binio::FormatError::Kind::checksum);
  }
  fs::remove(path);
  fs::remove(bad);
}

TEST_CASE("standardize uses train statistics for both splits") {
  Dataset train = synthetic_dataset(40, 2, 200);
  Dataset test = synthetic_dataset(10, 2, 201);
  test.split = "test";
  const Tensor test_raw = test.images;

  standardize(train, test);
  CHECK(train.standardized);
  CHECK(test.standardized);
  CHECK(train.channel_mean == test.channel_mean);

  // Per-channel train mean ~0 and std ~1 after the transform.
  const Eigen::Index plane = 32 * 32, n = train.images.dim(0);
  for (Eigen::Index c = 0; c < 2; ++c) {
    double sum = 0.0, sq = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double* p = train.images.data() + (i * 2 + c) * plane;
      for (Eigen::Index j = 0; j < plane; ++j) {
        sum += p[j];
        sq += p[j] * p[j];
      }
    }
    const double count = static_cast<double>(n * plane);
    CHECK(std::abs(sum / count) < 1e-9);
    CHECK(sq / count == doctest::Approx(1.0).epsilon(1e-6));
  }

  // The test split was shifted by the train stats, not its own.
  for (Eigen::Index i = 0; i < 64; ++i)
    CHECK(test.images[i] ==
          doctest::Approx((test_raw[i] - train.channel_mean[0]) /
                          train.channel_std[0])
              .epsilon(1e-12));

  CHECK_THROWS_AS(standardize(train, test), std::logic_error);
}

TEST_CASE("denormalized bytes invert standardization exactly") {
  Dataset train = synthetic_dataset(20, 1, 300);
  Dataset test = synthetic_dataset(5, 1, 301);
  const std::vector<std::uint8_t> before = denormalized_bytes(train);
  standardize(train, test);
  CHECK(denormalized_bytes(train) == before);
}

TEST_CASE("subset is class-balanced, deterministic, and label-preserving") {
  const Dataset ds = synthetic_dataset(500, 1, 400);
  const Dataset sub = subset(ds, 7, 42);
  CHECK(sub.size() == 70);

  std::map<int, int> counts;
  for (int label : sub.labels) ++counts[label];
  for (int c = 0; c < 10; ++c) CHECK(counts[c] == 7);

  const Dataset again = subset(ds, 7, 42);
  CHECK(again.images == sub.images);
  CHECK(again.labels == sub.labels);
  const Dataset other = subset(ds, 7, 43);
  CHECK_FALSE(other.images == sub.images);

  // Every subset image is an exact copy of a source image with its label.
  const Eigen::Index plane = 32 * 32;
  for (Eigen::Index i = 0; i < 3; ++i) {
    bool found = false;
    for (Eigen::Index j = 0; j < ds.size() && !found; ++j) {
      bool same = ds.labels[static_cast<std::size_t>(j)] ==
                  sub.labels[static_cast<std::size_t>(i)];
      for (Eigen::Index p = 0; same && p < plane; ++p)
        same = ds.images[j * plane + p] == sub.images[i * plane + p];
      found = same;
    }
    CHECK(found);
  }

  CHECK_THROWS_AS(subset(ds, 100, 1), std::invalid_argument);
  CHECK_THROWS_AS(subset(ds, 0, 1), std::invalid_argument);
}

TEST_CASE("batch iterator covers every example once") {
  const Dataset ds = synthetic_dataset(53, 1, 500);
  BatchIterator it(ds, 8, 9);
  CHECK(it.n_batches() == 7);

  std::multiset<int> seen_labels;
  Batch batch;
  std::size_t batches = 0, total = 0;
  std::size_t last_count = 0;
  while (it.next(batch)) {
    ++batches;
    total += batch.labels.size();
    last_count = batch.labels.size();
    for (int label : batch.labels) seen_labels.insert(label);
  }
  CHECK(batches == 7);
  CHECK(total == 53);
  CHECK(last_count == 5);  // 53 = 6*8 + 5
  CHECK(seen_labels == std::multiset<int>(ds.labels.begin(), ds.labels.end()));
}

TEST_CASE("batch order is a seeded permutation") {
  const Dataset ds = synthetic_dataset(20, 1, 600);
  auto first_batch = [&](std::uint64_t seed) {
    BatchIterator it(ds, 20, seed);
    Batch batch;
    REQUIRE(it.next(batch));
    return batch.images;
  };
  CHECK(first_batch(1) == first_batch(1));
  CHECK_FALSE(first_batch(1) == first_batch(2));
}

TEST_CASE("file checksum matches an in-memory crc") {
  const fs::path path = temp_file("crc.bin");
  const std::vector<std::uint8_t> payload{1, 2, 3, 4, 5, 250};
  write_bytes(path, payload);
  CHECK(file_checksum(path.string()) ==
        binio::crc32(payload.data(), payload.size()));
  fs::remove(path);
}
