#include "snet/tensor.hpp"

#include <cassert>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace snet {

namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMatrix>;
using ConstMapRow = Eigen::Map<const RowMatrix>;

void check_finite(const Tensor& t, const char* where) {
#ifndef NDEBUG
  if (!t.array().isFinite().all())
    throw std::runtime_error(std::string("non-finite values after ") + where);
#else
  (void)t;
  (void)where;
#endif
}

int conv_out_dim(Eigen::Index in, int k, int stride, int padding) {
  const Eigen::Index out = (in + 2 * padding - k) / stride + 1;
  if (out < 1 || in + 2 * padding < k)
    throw std::invalid_argument("conv2d: non-positive output dimension");
  return static_cast<int>(out);
}

// Effective weight matrix (O x C*k*k) with masked positions zeroed.
RowMatrix effective_weights(const Tensor& weights,
                            const ReceptiveFieldMask& mask) {
  const Eigen::Index rows = weights.dim(0);
  const Eigen::Index cols = weights.dim(1) * weights.dim(2) * weights.dim(3);
  RowMatrix w(rows, cols);
  const double* src = weights.data();
  for (Eigen::Index i = 0; i < rows * cols; ++i)
    w.data()[i] = mask.bits[static_cast<std::size_t>(i)] ? src[i] : 0.0;
  return w;
}

// Columns of `col` are receptive-field patches of one image, rows indexed by
// (c, kx, ky). Out-of-bounds positions are zero-filled.
void im2col(const double* img, Eigen::Index channels, Eigen::Index height,
            Eigen::Index width, int k, int stride, int padding, int out_h,
            int out_w, Eigen::MatrixXd& col) {
  const Eigen::Index patch = channels * k * k;
  col.resize(patch, static_cast<Eigen::Index>(out_h) * out_w);
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      double* dst = col.col(static_cast<Eigen::Index>(oy) * out_w + ox).data();
      for (Eigen::Index c = 0; c < channels; ++c) {
        const double* plane = img + c * height * width;
        for (int kx = 0; kx < k; ++kx) {
          const Eigen::Index ih = static_cast<Eigen::Index>(oy) * stride -
                                  padding + kx;
          const Eigen::Index iw0 = static_cast<Eigen::Index>(ox) * stride -
                                   padding;
          if (ih < 0 || ih >= height) {
            std::memset(dst, 0, sizeof(double) * k);
          } else {
            const double* row = plane + ih * width;
            for (int ky = 0; ky < k; ++ky) {
              const Eigen::Index iw = iw0 + ky;
              dst[ky] = (iw >= 0 && iw < width) ? row[iw] : 0.0;
            }
          }
          dst += k;
        }
      }
    }
  }
}

// Scatter-add transpose of im2col.
void col2im(const Eigen::MatrixXd& col, Eigen::Index channels,
            Eigen::Index height, Eigen::Index width, int k, int stride,
            int padding, int out_h, int out_w, double* img) {
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      const double* src = col.col(static_cast<Eigen::Index>(oy) * out_w + ox)
                              .data();
      for (Eigen::Index c = 0; c < channels; ++c) {
        double* plane = img + c * height * width;
        for (int kx = 0; kx < k; ++kx) {
          const Eigen::Index ih = static_cast<Eigen::Index>(oy) * stride -
                                  padding + kx;
          const Eigen::Index iw0 = static_cast<Eigen::Index>(ox) * stride -
                                   padding;
          if (ih >= 0 && ih < height) {
            double* row = plane + ih * width;
            for (int ky = 0; ky < k; ++ky) {
              const Eigen::Index iw = iw0 + ky;
              if (iw >= 0 && iw < width) row[iw] += src[ky];
            }
          }
          src += k;
        }
      }
    }
  }
}

void check_conv_shapes(const Tensor& input, const Tensor& weights,
                       const Eigen::VectorXd& bias,
                       const ReceptiveFieldMask& mask) {
  if (input.shape().size() != 4 || weights.shape().size() != 4)
    throw std::invalid_argument("conv2d: input and weights must be 4-d");
  if (weights.dim(1) != input.dim(1))
    throw std::invalid_argument("conv2d: channel mismatch");
  if (weights.dim(2) != weights.dim(3))
    throw std::invalid_argument("conv2d: kernel must be square");
  if (mask.out_channels != weights.dim(0) ||
      mask.in_channels != weights.dim(1) || mask.k != weights.dim(2))
    throw std::invalid_argument("conv2d: mask dims must equal weight dims");
  if (bias.size() != weights.dim(0))
    throw std::invalid_argument("conv2d: bias size mismatch");
}

}  // namespace

Tensor masked_conv2d_forward(const Tensor& input, const Tensor& weights,
                             const Eigen::VectorXd& bias,
                             const ReceptiveFieldMask& mask, int stride,
                             int padding) {
  check_conv_shapes(input, weights, bias, mask);
  const Eigen::Index batch = input.dim(0), channels = input.dim(1),
                     height = input.dim(2), width = input.dim(3);
  const Eigen::Index out_channels = weights.dim(0);
  const int k = static_cast<int>(weights.dim(2));
  const int out_h = conv_out_dim(height, k, stride, padding);
  const int out_w = conv_out_dim(width, k, stride, padding);

  const RowMatrix w_eff = effective_weights(weights, mask);
  Tensor output({batch, out_channels, out_h, out_w});

  thread_local Eigen::MatrixXd col;
  const Eigen::Index positions = static_cast<Eigen::Index>(out_h) * out_w;
  for (Eigen::Index n = 0; n < batch; ++n) {
    im2col(input.data() + n * channels * height * width, channels, height,
           width, k, stride, padding, out_h, out_w, col);
    MapRow y(output.data() + n * out_channels * positions, out_channels,
             positions);
    y.noalias() = w_eff * col;
    y.colwise() += bias;
  }
  check_finite(output, "masked_conv2d_forward");
  return output;
}

Conv2dGrads masked_conv2d_backward(const Tensor& upstream, const Tensor& input,
                                   const Tensor& weights,
                                   const ReceptiveFieldMask& mask, int stride,
                                   int padding, bool need_input_grad) {
  Eigen::VectorXd bias_probe = Eigen::VectorXd::Zero(weights.dim(0));
  check_conv_shapes(input, weights, bias_probe, mask);
  const Eigen::Index batch = input.dim(0), channels = input.dim(1),
                     height = input.dim(2), width = input.dim(3);
  const Eigen::Index out_channels = weights.dim(0);
  const int k = static_cast<int>(weights.dim(2));
  const int out_h = conv_out_dim(height, k, stride, padding);
  const int out_w = conv_out_dim(width, k, stride, padding);
  const Eigen::Index positions = static_cast<Eigen::Index>(out_h) * out_w;
  if (upstream.shape() !=
      std::vector<Eigen::Index>{batch, out_channels, out_h, out_w})
    throw std::invalid_argument("conv2d backward: upstream shape mismatch");

  const RowMatrix w_eff = effective_weights(weights, mask);
  const Eigen::Index patch = channels * k * k;

  Conv2dGrads grads;
  grads.weight_grad = Tensor(weights.shape());
  grads.bias_grad = Eigen::VectorXd::Zero(out_channels);
  if (need_input_grad) grads.input_grad = Tensor(input.shape());

  RowMatrix dw = RowMatrix::Zero(out_channels, patch);
  thread_local Eigen::MatrixXd col, dcol;
  for (Eigen::Index n = 0; n < batch; ++n) {
    ConstMapRow dy(upstream.data() + n * out_channels * positions,
                   out_channels, positions);
    im2col(input.data() + n * channels * height * width, channels, height,
           width, k, stride, padding, out_h, out_w, col);
    dw.noalias() += dy * col.transpose();
    grads.bias_grad += dy.rowwise().sum();
    if (need_input_grad) {
      dcol.resize(patch, positions);
      dcol.noalias() = w_eff.transpose() * dy;
      col2im(dcol, channels, height, width, k, stride, padding, out_h, out_w,
             grads.input_grad.data() + n * channels * height * width);
    }
  }
  // d(effective)/d(weight) is the mask bit, so masked positions get exactly 0.
  for (Eigen::Index i = 0; i < dw.size(); ++i)
    grads.weight_grad.data()[i] =
        mask.bits[static_cast<std::size_t>(i)] ? dw.data()[i] : 0.0;
  return grads;
}

Tensor masked_affine_forward(const Tensor& input, const Eigen::MatrixXd& weights,
                             const Eigen::VectorXd& bias,
                             const DenseMask& mask) {
  if (input.shape().size() != 2 || input.dim(1) != weights.rows())
    throw std::invalid_argument("affine: input/weight shape mismatch");
  if (mask.in_units != weights.rows() || mask.out_units != weights.cols())
    throw std::invalid_argument("affine: mask dims must equal weight dims");
  if (bias.size() != weights.cols())
    throw std::invalid_argument("affine: bias size mismatch");

  Eigen::MatrixXd w_eff(weights.rows(), weights.cols());
  for (Eigen::Index i = 0; i < weights.rows(); ++i)
    for (Eigen::Index o = 0; o < weights.cols(); ++o)
      w_eff(i, o) = mask.test(static_cast<int>(i), static_cast<int>(o))
                        ? weights(i, o)
                        : 0.0;

  const Eigen::Index batch = input.dim(0);
  Tensor output({batch, weights.cols()});
  ConstMapRow x(input.data(), batch, weights.rows());
  MapRow y(output.data(), batch, weights.cols());
  y.noalias() = x * w_eff;
  y.rowwise() += bias.transpose();
  check_finite(output, "masked_affine_forward");
  return output;
}

AffineGrads masked_affine_backward(const Tensor& upstream, const Tensor& input,
                                   const Eigen::MatrixXd& weights,
                                   const DenseMask& mask) {
  if (input.shape().size() != 2 || upstream.shape().size() != 2 ||
      input.dim(0) != upstream.dim(0) || input.dim(1) != weights.rows() ||
      upstream.dim(1) != weights.cols())
    throw std::invalid_argument("affine backward: shape mismatch");

  Eigen::MatrixXd w_eff(weights.rows(), weights.cols());
  for (Eigen::Index i = 0; i < weights.rows(); ++i)
    for (Eigen::Index o = 0; o < weights.cols(); ++o)
      w_eff(i, o) = mask.test(static_cast<int>(i), static_cast<int>(o))
                        ? weights(i, o)
                        : 0.0;

  const Eigen::Index batch = input.dim(0);
  ConstMapRow x(input.data(), batch, weights.rows());
  ConstMapRow dy(upstream.data(), batch, weights.cols());

  AffineGrads grads;
  grads.weight_grad = x.transpose() * dy;
  for (Eigen::Index i = 0; i < weights.rows(); ++i)
    for (Eigen::Index o = 0; o < weights.cols(); ++o)
      if (!mask.test(static_cast<int>(i), static_cast<int>(o)))
        grads.weight_grad(i, o) = 0.0;
  grads.bias_grad = dy.colwise().sum();
  grads.input_grad = Tensor(input.shape());
  MapRow dx(grads.input_grad.data(), batch, weights.rows());
  dx.noalias() = dy * w_eff.transpose();
  return grads;
}

MaxPoolResult maxpool2x2_forward(const Tensor& input) {
  if (input.shape().size() != 4)
    throw std::invalid_argument("maxpool: input must be 4-d");
  const Eigen::Index batch = input.dim(0), channels = input.dim(1),
                     height = input.dim(2), width = input.dim(3);
  if (height < 2 || width < 2)
    throw std::invalid_argument("maxpool: spatial dims must be >= 2");
  const Eigen::Index out_h = height / 2, out_w = width / 2;

  MaxPoolResult result;
  result.output = Tensor({batch, channels, out_h, out_w});
  result.argmax.resize(static_cast<std::size_t>(result.output.size()));

  const double* src = input.data();
  double* dst = result.output.data();
  std::size_t out_idx = 0;
  for (Eigen::Index nc = 0; nc < batch * channels; ++nc) {
    const double* plane = src + nc * height * width;
    for (Eigen::Index oy = 0; oy < out_h; ++oy) {
      for (Eigen::Index ox = 0; ox < out_w; ++ox) {
        const Eigen::Index base = (2 * oy) * width + 2 * ox;
        Eigen::Index best = base;
        double best_v = plane[base];
        const Eigen::Index candidates[3] = {base + 1, base + width,
                                            base + width + 1};
        for (Eigen::Index cand : candidates) {
          if (plane[cand] > best_v) {  // strict: first max wins ties
            best_v = plane[cand];
            best = cand;
          }
        }
        dst[out_idx] = best_v;
        result.argmax[out_idx] =
            static_cast<std::int32_t>(nc * height * width + best);
        ++out_idx;
      }
    }
  }
  return result;
}

Tensor maxpool2x2_backward(const Tensor& upstream, const MaxPoolResult& cached,
                           const std::vector<Eigen::Index>& input_shape) {
  if (upstream.shape() != cached.output.shape())
    throw std::invalid_argument("maxpool backward: upstream shape mismatch");
  Tensor grad(input_shape);
  for (Eigen::Index i = 0; i < upstream.size(); ++i)
    grad[cached.argmax[static_cast<std::size_t>(i)]] += upstream[i];
  return grad;
}

Tensor relu_forward(const Tensor& input) {
  return Tensor(input.shape(), input.array().max(0.0));
}

Tensor relu_backward(const Tensor& upstream, const Tensor& forward_input) {
  if (upstream.shape() != forward_input.shape())
    throw std::invalid_argument("relu backward: shape mismatch");
  return Tensor(upstream.shape(),
                (forward_input.array() > 0.0)
                    .select(upstream.array(), Eigen::ArrayXd::Zero(
                                                  upstream.size())));
}

SoftmaxXentResult softmax_cross_entropy(const Tensor& logits,
                                        const std::vector<int>& labels) {
  if (logits.shape().size() != 2)
    throw std::invalid_argument("softmax: logits must be 2-d");
  const Eigen::Index batch = logits.dim(0), classes = logits.dim(1);
  if (batch == 0) throw std::invalid_argument("softmax: empty batch");
  if (static_cast<Eigen::Index>(labels.size()) != batch)
    throw std::invalid_argument("softmax: label count mismatch");
  for (int label : labels)
    if (label < 0 || label >= classes)
      throw std::invalid_argument("softmax: label out of range");

  SoftmaxXentResult result;
  result.dlogits = Tensor(logits.shape());
  double total = 0.0;
  for (Eigen::Index n = 0; n < batch; ++n) {
    const double* row = logits.data() + n * classes;
    double* drow = result.dlogits.data() + n * classes;
    double max_v = row[0];
    for (Eigen::Index c = 1; c < classes; ++c) max_v = std::max(max_v, row[c]);
    double sum = 0.0;
    for (Eigen::Index c = 0; c < classes; ++c) {
      drow[c] = std::exp(row[c] - max_v);
      sum += drow[c];
    }
    const int label = labels[static_cast<std::size_t>(n)];
    total += -(row[label] - max_v - std::log(sum));
    const double inv = 1.0 / (sum * batch);
    for (Eigen::Index c = 0; c < classes; ++c) drow[c] *= inv;
    drow[label] -= 1.0 / batch;
  }
  result.loss = total / batch;
  return result;
}

}  // namespace snet
