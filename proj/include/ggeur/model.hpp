#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ggeur/datastore.hpp"
#include "ggeur/linalg.hpp"

namespace ggeur {

// Single affine layer followed by softmax: logits = X W^T + b.
struct LinearClassifierParams {
  Matrix weights;  // C x p
  Vector bias;     // C

  static LinearClassifierParams zeros(Eigen::Index classes, Eigen::Index dim);

  Eigen::Index classes() const noexcept { return weights.rows(); }
  Eigen::Index dim() const noexcept { return weights.cols(); }

  friend bool operator==(const LinearClassifierParams& a, const LinearClassifierParams& b) {
    return a.weights == b.weights && a.bias == b.bias;
  }
};

struct SgdConfig {
  double learning_rate = 1e-2;
  double momentum = 0.9;
  double weight_decay = 1e-5;
  int batch_size = 64;

  void validate() const;
};

Matrix forward(const LinearClassifierParams& params, const RowMatrix& batch);

struct LossAndGrad {
  double cross_entropy = 0.0;  // mean over the batch
  double objective = 0.0;      // cross_entropy + weight_decay / 2 * ||W||^2
  LinearClassifierParams grad; // gradient of `objective`
};

/// Mean softmax cross-entropy and its gradient. The weight-decay term enters
/// the gradient of W (not of the bias).
LossAndGrad loss_and_grad(const LinearClassifierParams& params, const RowMatrix& batch,
                          std::span<const int> labels, double weight_decay);

/// v <- momentum * v + g;  theta <- theta - lr * v
void sgd_step(LinearClassifierParams& params, LinearClassifierParams& velocity, const LinearClassifierParams& grad,
              const SgdConfig& config);

/// Argmax with ties resolved to the lowest class index.
int predict_one(const Eigen::Ref<const Eigen::RowVectorXd>& logits);

double evaluate_top1(const LinearClassifierParams& params, const RowMatrix& rows, std::span<const int> labels);

struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;  // mean cross-entropy
};

/// Top-1 accuracy and mean cross-entropy over a stored split.
Evaluation evaluate_split(const LinearClassifierParams& params, const LabeledSplit& split);

// MLP1 checkpoint: "MLP1", u32 version, u32 C, u32 p, u8 dtype (2 = float64),
// 3 zero bytes, C*p weights row-major, C biases. Little-endian throughout.
std::vector<std::uint8_t> encode_params(const LinearClassifierParams& params);
LinearClassifierParams decode_params(std::span<const std::uint8_t> bytes);
void save_params(const std::filesystem::path& path, const LinearClassifierParams& params);
LinearClassifierParams load_params(const std::filesystem::path& path);

}  // namespace ggeur
