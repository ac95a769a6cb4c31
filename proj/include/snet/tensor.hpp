#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "snet/mask.hpp"

namespace snet {

// Dense row-major array of 64-bit floats. Shapes are fixed by the network
// topology; no broadcasting.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<Eigen::Index> shape)
      : shape_(std::move(shape)), data_(Eigen::ArrayXd::Zero(count(shape_))) {}
  Tensor(std::vector<Eigen::Index> shape, Eigen::ArrayXd data)
      : shape_(std::move(shape)), data_(std::move(data)) {}

  const std::vector<Eigen::Index>& shape() const { return shape_; }
  Eigen::Index dim(std::size_t i) const { return shape_[i]; }
  Eigen::Index size() const { return data_.size(); }

  Eigen::ArrayXd& array() { return data_; }
  const Eigen::ArrayXd& array() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](Eigen::Index i) { return data_[i]; }
  double operator[](Eigen::Index i) const { return data_[i]; }

  // 4-d accessor (N, C, H, W); used by tests and slow paths.
  double& at4(Eigen::Index n, Eigen::Index c, Eigen::Index h, Eigen::Index w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  double at4(Eigen::Index n, Eigen::Index c, Eigen::Index h,
             Eigen::Index w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && (a.data_ == b.data_).all();
  }

 private:
  static Eigen::Index count(const std::vector<Eigen::Index>& shape) {
    Eigen::Index n = 1;
    for (Eigen::Index d : shape) n *= d;
    return n;
  }
  std::vector<Eigen::Index> shape_;
  Eigen::ArrayXd data_;
};

struct Conv2dGrads {
  Tensor input_grad;        // empty when not requested
  Tensor weight_grad;       // (O, C, k, k); exactly 0 at masked positions
  Eigen::VectorXd bias_grad;
};

// Cross-correlation with effective weights = weights (.) mask, the same
// mask bits applied at every spatial position.
// input (N, C, H, W), weights (O, C, k, k), bias (O).
Tensor masked_conv2d_forward(const Tensor& input, const Tensor& weights,
                             const Eigen::VectorXd& bias,
                             const ReceptiveFieldMask& mask, int stride,
                             int padding);

Conv2dGrads masked_conv2d_backward(const Tensor& upstream, const Tensor& input,
                                   const Tensor& weights,
                                   const ReceptiveFieldMask& mask, int stride,
                                   int padding, bool need_input_grad = true);

struct AffineGrads {
  Tensor input_grad;
  Eigen::MatrixXd weight_grad;  // (in, out); exactly 0 at masked positions
  Eigen::VectorXd bias_grad;
};

// input (N, in), weights (in, out), bias (out).
Tensor masked_affine_forward(const Tensor& input, const Eigen::MatrixXd& weights,
                             const Eigen::VectorXd& bias,
                             const DenseMask& mask);

AffineGrads masked_affine_backward(const Tensor& upstream, const Tensor& input,
                                   const Eigen::MatrixXd& weights,
                                   const DenseMask& mask);

struct MaxPoolResult {
  Tensor output;                    // (N, C, H/2, W/2)
  std::vector<std::int32_t> argmax; // flat input index per output element
};

// 2x2 window, stride 2. Ties route to the first maximal element in scan
// order, so the backward pass is deterministic.
MaxPoolResult maxpool2x2_forward(const Tensor& input);
Tensor maxpool2x2_backward(const Tensor& upstream, const MaxPoolResult& cached,
                           const std::vector<Eigen::Index>& input_shape);

Tensor relu_forward(const Tensor& input);
Tensor relu_backward(const Tensor& upstream, const Tensor& forward_input);

struct SoftmaxXentResult {
  double loss = 0.0;  // mean over the batch
  Tensor dlogits;     // gradient of the mean loss w.r.t. logits
};

// logits (N, classes); computed with max-subtraction for stability.
SoftmaxXentResult softmax_cross_entropy(const Tensor& logits,
                                        const std::vector<int>& labels);

}  // namespace snet
