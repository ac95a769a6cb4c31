#include "snet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "snet/binio.hpp"
#include "snet/rng.hpp"

namespace snet {

namespace {

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
constexpr std::size_t kCifarRecord = 3073;

std::uint32_t be32(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) |
         (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | p[3];
}

void check_labels(const std::vector<int>& labels) {
  for (int label : labels)
    if (label < 0 || label > 9)
      throw std::runtime_error("dataset: label out of range [0, 10)");
}

}  // namespace

Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path) {
  const std::vector<std::uint8_t> img = binio::read_file(images_path);
  const std::vector<std::uint8_t> lab = binio::read_file(labels_path);
  if (img.size() < 16 || be32(img.data()) != kIdxImageMagic)
    throw std::runtime_error("idx: bad image magic");
  if (lab.size() < 8 || be32(lab.data()) != kIdxLabelMagic)
    throw std::runtime_error("idx: bad label magic");

  const std::size_t n = be32(img.data() + 4);
  const std::size_t rows = be32(img.data() + 8);
  const std::size_t cols = be32(img.data() + 12);
  if (be32(lab.data() + 4) != n)
    throw std::runtime_error("idx: image/label count mismatch");
  if (rows > 32 || cols > 32)
    throw std::runtime_error("idx: images larger than 32x32 unsupported");
  if (img.size() != 16 + n * rows * cols)
    throw std::runtime_error("idx: truncated image payload");
  if (lab.size() != 8 + n)
    throw std::runtime_error("idx: truncated label payload");

  Dataset ds;
  ds.images = Tensor({static_cast<Eigen::Index>(n), 1, 32, 32});
  ds.labels.resize(n);
  // Center by zero padding: (32 - 28) / 2 = 2 pixels each side for MNIST.
  const std::size_t pad_top = (32 - rows) / 2;
  const std::size_t pad_left = (32 - cols) / 2;
  const std::uint8_t* px = img.data() + 16;
  for (std::size_t i = 0; i < n; ++i) {
    double* out = ds.images.data() + i * 32 * 32;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        out[(pad_top + r) * 32 + pad_left + c] =
            px[(i * rows + r) * cols + c] / 255.0;
    ds.labels[i] = lab[8 + i];
  }
  check_labels(ds.labels);
  return ds;
}

Dataset load_cifar10(const std::vector<std::string>& batch_paths) {
  if (batch_paths.empty())
    throw std::invalid_argument("cifar10: no batch files given");
  std::vector<std::vector<std::uint8_t>> files;
  std::size_t n = 0;
  for (const std::string& path : batch_paths) {
    files.push_back(binio::read_file(path));
    if (files.back().empty() || files.back().size() % kCifarRecord != 0)
      throw std::runtime_error(
          "cifar10: file length not a multiple of 3073: " + path);
    n += files.back().size() / kCifarRecord;
  }

  Dataset ds;
  ds.images = Tensor({static_cast<Eigen::Index>(n), 3, 32, 32});
  ds.labels.resize(n);
  std::size_t i = 0;
  for (const auto& bytes : files) {
    for (std::size_t off = 0; off < bytes.size(); off += kCifarRecord, ++i) {
      ds.labels[i] = bytes[off];
      double* out = ds.images.data() + i * 3 * 32 * 32;
      for (std::size_t p = 0; p < 3072; ++p)
        out[p] = bytes[off + 1 + p] / 255.0;
    }
  }
  check_labels(ds.labels);
  return ds;
}

Dataset load_snds(const std::string& path) {
  using binio::FormatError;
  const std::vector<std::uint8_t> bytes = binio::read_file(path);
  if (bytes.size() < 8)
    throw FormatError(FormatError::Kind::truncated, "snds: too short");
  const std::uint32_t stored =
      binio::Reader(bytes.data() + bytes.size() - 4, 4).u32();
  if (stored != binio::crc32(bytes.data(), bytes.size() - 4))
    throw FormatError(FormatError::Kind::checksum, "snds: checksum mismatch");
  binio::Reader r(bytes.data(), bytes.size() - 4);
  const std::uint8_t* magic = r.take(4);
  if (std::memcmp(magic, "SNDS", 4) != 0)
    throw FormatError(FormatError::Kind::bad_magic, "snds: bad magic");
  if (r.u8() != 1)
    throw FormatError(FormatError::Kind::bad_header, "snds: bad version");
  const std::size_t n = r.u32(), c = r.u32(), h = r.u32(), w = r.u32();
  Dataset ds;
  ds.images = Tensor({static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c),
                      static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(w)});
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = r.u8();
  check_labels(ds.labels);
  for (Eigen::Index i = 0; i < ds.images.size(); ++i)
    ds.images[i] = r.f64();
  return ds;
}

void save_snds(const Dataset& dataset, const std::string& path) {
  std::vector<std::uint8_t> out;
  binio::put_bytes(out, "SNDS", 4);
  binio::put_u8(out, 1);
  binio::put_u32(out, static_cast<std::uint32_t>(dataset.images.dim(0)));
  binio::put_u32(out, static_cast<std::uint32_t>(dataset.images.dim(1)));
  binio::put_u32(out, static_cast<std::uint32_t>(dataset.images.dim(2)));
  binio::put_u32(out, static_cast<std::uint32_t>(dataset.images.dim(3)));
  for (int label : dataset.labels)
    binio::put_u8(out, static_cast<std::uint8_t>(label));
  for (Eigen::Index i = 0; i < dataset.images.size(); ++i)
    binio::put_f64(out, dataset.images[i]);
  binio::put_u32(out, binio::crc32(out.data(), out.size()));
  binio::write_file_atomic(path, out);
}

void standardize(Dataset& train, Dataset& test) {
  if (train.standardized || test.standardized)
    throw std::logic_error("standardize: dataset already standardized");
  const Eigen::Index channels = train.images.dim(1);
  const Eigen::Index plane = train.images.dim(2) * train.images.dim(3);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(channels);
  Eigen::VectorXd stdev = Eigen::VectorXd::Zero(channels);

  const Eigen::Index n = train.images.dim(0);
  for (Eigen::Index c = 0; c < channels; ++c) {
    double sum = 0.0, sq = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double* p = train.images.data() + (i * channels + c) * plane;
      for (Eigen::Index j = 0; j < plane; ++j) {
        sum += p[j];
        sq += p[j] * p[j];
      }
    }
    const double count = static_cast<double>(n) * plane;
    mean[c] = sum / count;
    const double var = sq / count - mean[c] * mean[c];
    stdev[c] = std::sqrt(std::max(var, 1e-12));
  }

  for (Dataset* ds : {&train, &test}) {
    const Eigen::Index m = ds->images.dim(0);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index c = 0; c < channels; ++c) {
        double* p = ds->images.data() + (i * channels + c) * plane;
        for (Eigen::Index j = 0; j < plane; ++j)
          p[j] = (p[j] - mean[c]) / stdev[c];
      }
    ds->standardized = true;
    ds->channel_mean = mean;
    ds->channel_std = stdev;
  }
}

std::vector<std::uint8_t> denormalized_bytes(const Dataset& dataset) {
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(dataset.images.size()));
  const Eigen::Index channels = dataset.images.dim(1);
  const Eigen::Index plane = dataset.images.dim(2) * dataset.images.dim(3);
  const Eigen::Index n = dataset.images.dim(0);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < channels; ++c) {
      const double* p = dataset.images.data() + (i * channels + c) * plane;
      std::uint8_t* q = bytes.data() + (i * channels + c) * plane;
      for (Eigen::Index j = 0; j < plane; ++j) {
        double v = p[j];
        if (dataset.standardized)
          v = v * dataset.channel_std[c] + dataset.channel_mean[c];
        q[j] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  return bytes;
}

Dataset subset(const Dataset& dataset, int n_per_class, std::uint64_t seed) {
  if (n_per_class < 1)
    throw std::invalid_argument("subset: n_per_class must be >= 1");
  std::vector<std::vector<std::uint32_t>> by_class(10);
  for (std::size_t i = 0; i < dataset.labels.size(); ++i)
    by_class[static_cast<std::size_t>(dataset.labels[i])].push_back(
        static_cast<std::uint32_t>(i));

  std::vector<std::uint32_t> chosen;
  for (std::size_t c = 0; c < 10; ++c) {
    auto& pool = by_class[c];
    if (pool.size() < static_cast<std::size_t>(n_per_class))
      throw std::invalid_argument("subset: not enough examples of class " +
                                  std::to_string(c));
    const auto order = rng::permutation(pool.size(), rng::derive(seed, c));
    for (int i = 0; i < n_per_class; ++i) chosen.push_back(pool[order[i]]);
  }
  std::sort(chosen.begin(), chosen.end());

  Batch picked = gather(dataset, chosen.data(), chosen.size());
  Dataset out;
  out.images = std::move(picked.images);
  out.labels = std::move(picked.labels);
  out.split = dataset.split;
  out.standardized = dataset.standardized;
  out.channel_mean = dataset.channel_mean;
  out.channel_std = dataset.channel_std;
  return out;
}

Batch gather(const Dataset& dataset, const std::uint32_t* indices,
             std::size_t count) {
  const Eigen::Index stride =
      dataset.images.dim(1) * dataset.images.dim(2) * dataset.images.dim(3);
  Batch batch;
  batch.images = Tensor({static_cast<Eigen::Index>(count), dataset.images.dim(1),
                         dataset.images.dim(2), dataset.images.dim(3)});
  batch.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::copy_n(dataset.images.data() + indices[i] * stride, stride,
                batch.images.data() + static_cast<Eigen::Index>(i) * stride);
    batch.labels[i] = dataset.labels[indices[i]];
  }
  return batch;
}

BatchIterator::BatchIterator(const Dataset& dataset, int batch_size,
                             std::uint64_t shuffle_seed)
    : dataset_(dataset), batch_size_(batch_size) {
  if (batch_size < 1)
    throw std::invalid_argument("batches: batch size must be >= 1");
  order_ = rng::permutation(static_cast<std::size_t>(dataset.size()),
                            shuffle_seed);
}

bool BatchIterator::next(Batch& batch) {
  if (cursor_ >= order_.size()) return false;
  const std::size_t count =
      std::min<std::size_t>(batch_size_, order_.size() - cursor_);
  batch = gather(dataset_, order_.data() + cursor_, count);
  cursor_ += count;
  return true;
}

std::size_t BatchIterator::n_batches() const {
  return (order_.size() + batch_size_ - 1) / batch_size_;
}

std::uint32_t file_checksum(const std::string& path) {
  const std::vector<std::uint8_t> bytes = binio::read_file(path);
  return binio::crc32(bytes.data(), bytes.size());
}

}  // namespace snet
