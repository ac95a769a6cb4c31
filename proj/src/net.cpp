#include "snet/net.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "snet/binio.hpp"
#include "snet/rng.hpp"

namespace snet {

namespace {

constexpr std::uint8_t kCheckpointVersion = 1;

// Seed tags so each layer draws from its own stream.
std::uint64_t layer_seed(std::uint64_t base, std::size_t layer) {
  return rng::derive(base, layer);
}
constexpr std::size_t kHiddenTag = 1000;
constexpr std::size_t kOutputTag = 1001;

std::size_t count_set(const std::vector<std::uint8_t>& bits) {
  std::size_t n = 0;
  for (std::uint8_t b : bits) n += b;
  return n;
}

// Glorot-uniform bound from effective (unmasked) fan-in/fan-out.
double glorot_bound(double fan_in, double fan_out) {
  return std::sqrt(6.0 / (fan_in + fan_out));
}

void init_conv_layer(ConvLayer& layer, std::uint64_t seed) {
  const std::size_t set = count_set(layer.mask.bits);
  const double fan_in = static_cast<double>(set) / layer.mask.out_channels;
  const double fan_out = static_cast<double>(set) / layer.mask.in_channels;
  const double bound = glorot_bound(fan_in, fan_out);
  for (Eigen::Index i = 0; i < layer.weights.size(); ++i)
    layer.weights[i] = layer.mask.bits[static_cast<std::size_t>(i)]
                           ? rng::uniform_symmetric(seed, i, bound)
                           : 0.0;
  layer.bias.setZero();
  layer.velocity = Tensor(layer.weights.shape());
  layer.bias_velocity = Eigen::VectorXd::Zero(layer.bias.size());
}

void init_affine_layer(AffineLayer& layer, std::uint64_t seed) {
  const std::size_t set = count_set(layer.mask.bits);
  const double fan_in = static_cast<double>(set) / layer.mask.out_units;
  const double fan_out = static_cast<double>(set) / layer.mask.in_units;
  const double bound = glorot_bound(fan_in, fan_out);
  // Draw in (input, output) order so the stream is independent of Eigen's
  // storage layout.
  for (int i = 0; i < layer.mask.in_units; ++i)
    for (int o = 0; o < layer.mask.out_units; ++o) {
      const std::size_t flat = layer.mask.index(i, o);
      layer.weights(i, o) =
          layer.mask.bits[flat]
              ? rng::uniform_symmetric(seed, static_cast<std::uint64_t>(flat),
                                       bound)
              : 0.0;
    }
  layer.bias.setZero();
  layer.velocity = Eigen::MatrixXd::Zero(layer.weights.rows(),
                                         layer.weights.cols());
  layer.bias_velocity = Eigen::VectorXd::Zero(layer.bias.size());
}

DenseMask all_ones_mask(int in_units, int out_units) {
  DenseMask mask;
  mask.in_units = in_units;
  mask.out_units = out_units;
  mask.bits.assign(static_cast<std::size_t>(in_units) * out_units, 1);
  return mask;
}

}  // namespace

void NetConfig::validate() const {
  if (in_channels < 1 || height < 1 || width < 1)
    throw std::invalid_argument("net config: invalid input shape");
  if (classes < 2)
    throw std::invalid_argument("net config: classes must be >= 2");
  if (hidden_units < 1)
    throw std::invalid_argument("net config: hidden_units must be >= 1");
  if (!(hidden_density > 0.0 && hidden_density <= 1.0))
    throw std::invalid_argument("net config: hidden density must be in (0, 1]");
  if (conv.empty())
    throw std::invalid_argument("net config: at least one conv stage");
  int h = height, w = width;
  for (const ConvStageConfig& stage : conv) {
    if (stage.filters < 1 || stage.kernel < 1 || stage.kernel % 2 == 0)
      throw std::invalid_argument("net config: invalid conv stage");
    if (!(stage.density > 0.0 && stage.density <= 1.0))
      throw std::invalid_argument("net config: conv density must be in (0, 1]");
    if (h < 2 || w < 2 || h % 2 != 0 || w % 2 != 0)
      throw std::invalid_argument(
          "net config: spatial dims must halve cleanly at every pool");
    h /= 2;
    w /= 2;
  }
}

NetConfig paper_config(int in_channels, FieldKind kind, double density) {
  NetConfig config;
  config.in_channels = in_channels;
  for (int filters : {32, 32, 64})
    config.conv.push_back({filters, 5, kind, density});
  config.hidden_units = 64;
  config.hidden_density = density;
  config.classes = 10;
  return config;
}

std::size_t Network::formed_connections() const {
  std::size_t n = 0;
  for (const ConvLayer& layer : conv) n += count_set(layer.mask.bits);
  n += count_set(hidden.mask.bits);
  n += static_cast<std::size_t>(output.weights.size());
  return n;
}

std::size_t Network::dense_connections() const {
  std::size_t n = 0;
  for (const ConvLayer& layer : conv)
    n += static_cast<std::size_t>(layer.weights.size());
  n += static_cast<std::size_t>(hidden.weights.size());
  n += static_cast<std::size_t>(output.weights.size());
  return n;
}

double Network::connectivity() const {
  return static_cast<double>(formed_connections()) /
         static_cast<double>(dense_connections());
}

double Network::connectivity_excluding_output() const {
  std::size_t formed = 0, dense = 0;
  for (const ConvLayer& layer : conv) {
    formed += count_set(layer.mask.bits);
    dense += static_cast<std::size_t>(layer.weights.size());
  }
  formed += count_set(hidden.mask.bits);
  dense += static_cast<std::size_t>(hidden.weights.size());
  return static_cast<double>(formed) / static_cast<double>(dense);
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const ConvLayer& layer : conv)
    n += static_cast<std::size_t>(layer.weights.size() + layer.bias.size());
  n += static_cast<std::size_t>(hidden.weights.size() + hidden.bias.size());
  n += static_cast<std::size_t>(output.weights.size() + output.bias.size());
  return n;
}

std::uint64_t Network::mask_fingerprint() const {
  std::uint32_t crc = 0;
  for (const ConvLayer& layer : conv)
    crc = binio::crc32(layer.mask.bits.data(), layer.mask.bits.size(), crc);
  crc = binio::crc32(hidden.mask.bits.data(), hidden.mask.bits.size(), crc);
  return crc;
}

Network build_network(const NetConfig& config) {
  config.validate();
  Network net;
  net.config = config;

  int channels = config.in_channels, h = config.height, w = config.width;
  for (std::size_t i = 0; i < config.conv.size(); ++i) {
    const ConvStageConfig& stage = config.conv[i];
    ConvLayer layer;
    const ProbabilityField field =
        build_probability_field(stage.kind, stage.kernel, stage.density);
    layer.mask = realize_rf_mask(field, stage.filters, channels,
                                 layer_seed(config.mask_seed, i));
    layer.weights = Tensor({stage.filters, channels, stage.kernel,
                            stage.kernel});
    layer.bias = Eigen::VectorXd::Zero(stage.filters);
    init_conv_layer(layer, layer_seed(config.init_seed, i));
    net.conv.push_back(std::move(layer));
    channels = stage.filters;
    h /= 2;
    w /= 2;
  }

  const int flat_units = channels * h * w;
  net.hidden.mask =
      realize_dense_mask(flat_units, config.hidden_units, config.hidden_density,
                         layer_seed(config.mask_seed, kHiddenTag));
  net.hidden.weights = Eigen::MatrixXd::Zero(flat_units, config.hidden_units);
  net.hidden.bias = Eigen::VectorXd::Zero(config.hidden_units);
  init_affine_layer(net.hidden, layer_seed(config.init_seed, kHiddenTag));

  net.output.mask = all_ones_mask(config.hidden_units, config.classes);
  net.output.weights =
      Eigen::MatrixXd::Zero(config.hidden_units, config.classes);
  net.output.bias = Eigen::VectorXd::Zero(config.classes);
  init_affine_layer(net.output, layer_seed(config.init_seed, kOutputTag));

  return net;
}

double solve_density_for_connectivity(const NetConfig& shape, double target) {
  shape.validate();
  double maskable = 0, output_weights = 0;
  int channels = shape.in_channels;
  for (const ConvStageConfig& stage : shape.conv) {
    maskable += static_cast<double>(stage.filters) * channels * stage.kernel *
                stage.kernel;
    channels = stage.filters;
  }
  int h = shape.height >> shape.conv.size();
  int w = shape.width >> shape.conv.size();
  maskable += static_cast<double>(channels) * h * w * shape.hidden_units;
  output_weights = static_cast<double>(shape.hidden_units) * shape.classes;

  const double density =
      (target * (maskable + output_weights) - output_weights) / maskable;
  if (!(density > 0.0 && density <= 1.0))
    throw std::invalid_argument(
        "target connectivity unreachable with a dense output layer");
  return density;
}

namespace {

struct ForwardCache {
  std::vector<Tensor> conv_in;       // input to each conv stage
  std::vector<Tensor> conv_pre;      // conv output, pre-relu
  std::vector<MaxPoolResult> pools;  // pool of relu(conv)
  Tensor flat;
  Tensor hidden_pre;
  Tensor logits;
};

ForwardCache run_forward(const Network& net, const Tensor& batch) {
  if (batch.shape().size() != 4 || batch.dim(1) != net.config.in_channels ||
      batch.dim(2) != net.config.height || batch.dim(3) != net.config.width)
    throw std::invalid_argument("forward: batch shape mismatch");

  ForwardCache cache;
  Tensor x = batch;
  for (const ConvLayer& layer : net.conv) {
    const int pad = (static_cast<int>(layer.weights.dim(2)) - 1) / 2;
    cache.conv_in.push_back(x);
    Tensor pre = masked_conv2d_forward(x, layer.weights, layer.bias,
                                       layer.mask, /*stride=*/1, pad);
    Tensor activated = relu_forward(pre);
    cache.conv_pre.push_back(std::move(pre));
    cache.pools.push_back(maxpool2x2_forward(activated));
    x = cache.pools.back().output;
  }

  const Eigen::Index batch_n = x.dim(0);
  cache.flat = Tensor({batch_n, x.size() / batch_n}, x.array());
  cache.hidden_pre = masked_affine_forward(cache.flat, net.hidden.weights,
                                           net.hidden.bias, net.hidden.mask);
  Tensor hidden_act = relu_forward(cache.hidden_pre);
  cache.logits = masked_affine_forward(hidden_act, net.output.weights,
                                       net.output.bias, net.output.mask);
  return cache;
}

}  // namespace

Tensor forward(const Network& net, const Tensor& batch) {
  return run_forward(net, batch).logits;
}

std::vector<int> predict(const Network& net, const Tensor& batch) {
  const Tensor logits = forward(net, batch);
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

LossResult loss_and_grads(const Network& net, const Tensor& batch,
                          const std::vector<int>& labels) {
  ForwardCache cache = run_forward(net, batch);
  SoftmaxXentResult xent = softmax_cross_entropy(cache.logits, labels);
  if (!std::isfinite(xent.loss))
    throw std::runtime_error("loss_and_grads: non-finite loss");

  NetGrads grads;
  Tensor hidden_act = relu_forward(cache.hidden_pre);
  grads.output = masked_affine_backward(xent.dlogits, hidden_act,
                                        net.output.weights, net.output.mask);
  Tensor dhidden_pre =
      relu_backward(grads.output.input_grad, cache.hidden_pre);
  grads.hidden = masked_affine_backward(dhidden_pre, cache.flat,
                                        net.hidden.weights, net.hidden.mask);

  const std::size_t n_conv = net.conv.size();
  grads.conv.resize(n_conv);
  Tensor dpooled(cache.pools.empty()
                     ? std::vector<Eigen::Index>{}
                     : cache.pools.back().output.shape(),
                 grads.hidden.input_grad.array());
  for (std::size_t i = n_conv; i-- > 0;) {
    const ConvLayer& layer = net.conv[i];
    Tensor dact = maxpool2x2_backward(dpooled, cache.pools[i],
                                      cache.conv_pre[i].shape());
    Tensor dpre = relu_backward(dact, cache.conv_pre[i]);
    const int pad = (static_cast<int>(layer.weights.dim(2)) - 1) / 2;
    grads.conv[i] = masked_conv2d_backward(dpre, cache.conv_in[i],
                                           layer.weights, layer.mask,
                                           /*stride=*/1, pad,
                                           /*need_input_grad=*/i > 0);
    if (i > 0) dpooled = std::move(grads.conv[i].input_grad);
  }
  return {xent.loss, std::move(cache.logits), std::move(grads)};
}

void apply_update(Network& net, const NetGrads& grads, double lr,
                  double momentum) {
  for (std::size_t i = 0; i < net.conv.size(); ++i) {
    ConvLayer& layer = net.conv[i];
    layer.velocity.array() = momentum * layer.velocity.array() -
                             lr * grads.conv[i].weight_grad.array();
    layer.weights.array() += layer.velocity.array();
    layer.bias_velocity =
        momentum * layer.bias_velocity - lr * grads.conv[i].bias_grad;
    layer.bias += layer.bias_velocity;
  }
  auto update_affine = [&](AffineLayer& layer, const AffineGrads& g) {
    layer.velocity = momentum * layer.velocity - lr * g.weight_grad;
    layer.weights += layer.velocity;
    layer.bias_velocity = momentum * layer.bias_velocity - lr * g.bias_grad;
    layer.bias += layer.bias_velocity;
  };
  update_affine(net.hidden, grads.hidden);
  update_affine(net.output, grads.output);
}

namespace {

void put_config(std::vector<std::uint8_t>& out, const NetConfig& config) {
  binio::put_u32(out, static_cast<std::uint32_t>(config.in_channels));
  binio::put_u32(out, static_cast<std::uint32_t>(config.height));
  binio::put_u32(out, static_cast<std::uint32_t>(config.width));
  binio::put_u32(out, static_cast<std::uint32_t>(config.conv.size()));
  for (const ConvStageConfig& stage : config.conv) {
    binio::put_u32(out, static_cast<std::uint32_t>(stage.filters));
    binio::put_u32(out, static_cast<std::uint32_t>(stage.kernel));
    binio::put_u8(out, static_cast<std::uint8_t>(stage.kind));
    binio::put_f64(out, stage.density);
  }
  binio::put_u32(out, static_cast<std::uint32_t>(config.hidden_units));
  binio::put_f64(out, config.hidden_density);
  binio::put_u32(out, static_cast<std::uint32_t>(config.classes));
  binio::put_u64(out, config.init_seed);
  binio::put_u64(out, config.mask_seed);
}

NetConfig read_config(binio::Reader& r) {
  NetConfig config;
  config.in_channels = static_cast<int>(r.u32());
  config.height = static_cast<int>(r.u32());
  config.width = static_cast<int>(r.u32());
  const std::uint32_t n_conv = r.u32();
  for (std::uint32_t i = 0; i < n_conv; ++i) {
    ConvStageConfig stage;
    stage.filters = static_cast<int>(r.u32());
    stage.kernel = static_cast<int>(r.u32());
    stage.kind = static_cast<FieldKind>(r.u8());
    stage.density = r.f64();
    config.conv.push_back(stage);
  }
  config.hidden_units = static_cast<int>(r.u32());
  config.hidden_density = r.f64();
  config.classes = static_cast<int>(r.u32());
  config.init_seed = r.u64();
  config.mask_seed = r.u64();
  return config;
}

void put_doubles(std::vector<std::uint8_t>& out, const double* data,
                 std::size_t n) {
  binio::put_u64(out, n);
  for (std::size_t i = 0; i < n; ++i) binio::put_f64(out, data[i]);
}

void read_doubles(binio::Reader& r, double* data, std::size_t expect) {
  const std::uint64_t n = r.u64();
  if (n != expect)
    throw binio::FormatError(binio::FormatError::Kind::bad_header,
                             "checkpoint: parameter block size mismatch");
  for (std::size_t i = 0; i < n; ++i) data[i] = r.f64();
}

void put_mask_block(std::vector<std::uint8_t>& out,
                    const std::vector<std::uint8_t>& block) {
  binio::put_u64(out, block.size());
  binio::put_bytes(out, block.data(), block.size());
}

AnyMask read_mask_block(binio::Reader& r) {
  const std::uint64_t n = r.u64();
  const std::uint8_t* p = r.take(n);
  return deserialize_mask(p, n);
}

}  // namespace

std::vector<std::uint8_t> serialize_network(const Network& net) {
  std::vector<std::uint8_t> out;
  binio::put_bytes(out, "SNCK", 4);
  binio::put_u8(out, kCheckpointVersion);
  put_config(out, net.config);
  for (const ConvLayer& layer : net.conv) {
    put_mask_block(out, serialize_mask(layer.mask));
    put_doubles(out, layer.weights.data(),
                static_cast<std::size_t>(layer.weights.size()));
    put_doubles(out, layer.bias.data(),
                static_cast<std::size_t>(layer.bias.size()));
    put_doubles(out, layer.velocity.data(),
                static_cast<std::size_t>(layer.velocity.size()));
    put_doubles(out, layer.bias_velocity.data(),
                static_cast<std::size_t>(layer.bias_velocity.size()));
  }
  auto put_affine = [&out](const AffineLayer& layer) {
    put_mask_block(out, serialize_mask(layer.mask));
    put_doubles(out, layer.weights.data(),
                static_cast<std::size_t>(layer.weights.size()));
    put_doubles(out, layer.bias.data(),
                static_cast<std::size_t>(layer.bias.size()));
    put_doubles(out, layer.velocity.data(),
                static_cast<std::size_t>(layer.velocity.size()));
    put_doubles(out, layer.bias_velocity.data(),
                static_cast<std::size_t>(layer.bias_velocity.size()));
  };
  put_affine(net.hidden);
  put_affine(net.output);
  binio::put_u32(out, binio::crc32(out.data(), out.size()));
  return out;
}

Network deserialize_network(const std::uint8_t* data, std::size_t size) {
  using binio::FormatError;
  if (size < 8)
    throw FormatError(FormatError::Kind::truncated, "checkpoint: too short");
  const std::uint32_t stored =
      binio::Reader(data + size - 4, 4).u32();
  if (stored != binio::crc32(data, size - 4))
    throw FormatError(FormatError::Kind::checksum,
                      "checkpoint: checksum mismatch");

  binio::Reader r(data, size - 4);
  const std::uint8_t* magic = r.take(4);
  if (std::memcmp(magic, "SNCK", 4) != 0)
    throw FormatError(FormatError::Kind::bad_magic, "checkpoint: bad magic");
  if (r.u8() != kCheckpointVersion)
    throw FormatError(FormatError::Kind::bad_header,
                      "checkpoint: unsupported version");

  // Rebuild shapes from the config, then overwrite every block.
  Network net = build_network(read_config(r));
  auto conv_mask = [&](ConvLayer& layer) {
    AnyMask any = read_mask_block(r);
    auto* m = std::get_if<ReceptiveFieldMask>(&any);
    if (!m)
      throw FormatError(FormatError::Kind::bad_header,
                        "checkpoint: expected receptive-field mask");
    layer.mask = std::move(*m);
  };
  for (ConvLayer& layer : net.conv) {
    conv_mask(layer);
    read_doubles(r, layer.weights.data(),
                 static_cast<std::size_t>(layer.weights.size()));
    read_doubles(r, layer.bias.data(),
                 static_cast<std::size_t>(layer.bias.size()));
    read_doubles(r, layer.velocity.data(),
                 static_cast<std::size_t>(layer.velocity.size()));
    read_doubles(r, layer.bias_velocity.data(),
                 static_cast<std::size_t>(layer.bias_velocity.size()));
  }
  auto read_affine = [&r](AffineLayer& layer) {
    AnyMask any = read_mask_block(r);
    auto* m = std::get_if<DenseMask>(&any);
    if (!m)
      throw FormatError(FormatError::Kind::bad_header,
                        "checkpoint: expected dense mask");
    layer.mask = std::move(*m);
    read_doubles(r, layer.weights.data(),
                 static_cast<std::size_t>(layer.weights.size()));
    read_doubles(r, layer.bias.data(),
                 static_cast<std::size_t>(layer.bias.size()));
    read_doubles(r, layer.velocity.data(),
                 static_cast<std::size_t>(layer.velocity.size()));
    read_doubles(r, layer.bias_velocity.data(),
                 static_cast<std::size_t>(layer.bias_velocity.size()));
  };
  read_affine(net.hidden);
  read_affine(net.output);
  return net;
}

void save_checkpoint(const Network& net, const std::string& path) {
  binio::write_file_atomic(path, serialize_network(net));
}

Network load_checkpoint(const std::string& path) {
  const std::vector<std::uint8_t> bytes = binio::read_file(path);
  return deserialize_network(bytes.data(), bytes.size());
}

}  // namespace snet
