#include "ggeur/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "ggeur/error.hpp"

namespace ggeur {

LinearClassifierParams LinearClassifierParams::zeros(Eigen::Index classes, Eigen::Index dim) {
  return {Matrix::Zero(classes, dim), Vector::Zero(classes)};
}

void SgdConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw UsageError("sgd: learning_rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw UsageError("sgd: momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw UsageError("sgd: weight_decay must be >= 0");
  if (batch_size < 1) throw UsageError("sgd: batch_size must be >= 1");
}

Matrix forward(const LinearClassifierParams& params, const RowMatrix& batch) {
  if (batch.cols() != params.dim()) {
    throw DataError("forward: batch width " + std::to_string(batch.cols()) + " != model input " +
                    std::to_string(params.dim()));
  }
  Matrix logits = batch * params.weights.transpose();
  logits.rowwise() += params.bias.transpose();
  return logits;
}

namespace {

void check_labels(std::span<const int> labels, Eigen::Index rows, Eigen::Index classes) {
  if (static_cast<Eigen::Index>(labels.size()) != rows) throw DataError("label count does not match batch rows");
  for (int l : labels) {
    if (l < 0 || l >= classes) throw DataError("label " + std::to_string(l) + " out of range");
  }
}

// Converts logits into softmax probabilities in place; returns sum of -log p[label].
double softmax_nll(Matrix& logits, std::span<const int> labels) {
  double nll = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double top = logits.row(r).maxCoeff();
    logits.row(r).array() -= top;
    const double log_z = std::log(logits.row(r).array().exp().sum());
    nll += log_z - logits(r, labels[static_cast<std::size_t>(r)]);
    logits.row(r) = (logits.row(r).array() - log_z).exp().matrix();
  }
  return nll;
}

}  // namespace

LossAndGrad loss_and_grad(const LinearClassifierParams& params, const RowMatrix& batch, std::span<const int> labels,
                          double weight_decay) {
  check_labels(labels, batch.rows(), params.classes());
  if (batch.rows() == 0) throw DataError("loss_and_grad: empty batch");
  const double n = static_cast<double>(batch.rows());

  Matrix probs = forward(params, batch);
  const double nll = softmax_nll(probs, labels);
  for (Eigen::Index r = 0; r < probs.rows(); ++r) probs(r, labels[static_cast<std::size_t>(r)]) -= 1.0;
  probs /= n;  // d(mean CE)/d(logits)

  LossAndGrad out;
  out.cross_entropy = nll / n;
  out.objective = out.cross_entropy + 0.5 * weight_decay * params.weights.squaredNorm();
  out.grad.weights = probs.transpose() * batch + weight_decay * params.weights;
  out.grad.bias = probs.colwise().sum().transpose();
  return out;
}

void sgd_step(LinearClassifierParams& params, LinearClassifierParams& velocity, const LinearClassifierParams& grad,
              const SgdConfig& config) {
  velocity.weights = config.momentum * velocity.weights + grad.weights;
  velocity.bias = config.momentum * velocity.bias + grad.bias;
  params.weights -= config.learning_rate * velocity.weights;
  params.bias -= config.learning_rate * velocity.bias;
}

int predict_one(const Eigen::Ref<const Eigen::RowVectorXd>& logits) {
  int best = 0;
  for (Eigen::Index c = 1; c < logits.size(); ++c) {
    if (logits(c) > logits(best)) best = static_cast<int>(c);
  }
  return best;
}

double evaluate_top1(const LinearClassifierParams& params, const RowMatrix& rows, std::span<const int> labels) {
  check_labels(labels, rows.rows(), params.classes());
  if (rows.rows() == 0) return 0.0;
  const Matrix logits = forward(params, rows);
  std::int64_t hits = 0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) hits += predict_one(logits.row(r)) == labels[static_cast<std::size_t>(r)];
  return static_cast<double>(hits) / static_cast<double>(rows.rows());
}

Evaluation evaluate_split(const LinearClassifierParams& params, const LabeledSplit& split) {
  Evaluation out;
  if (split.size() == 0) return out;
  constexpr Eigen::Index kChunk = 4096;
  std::int64_t hits = 0;
  double nll = 0.0;
  const auto n = static_cast<Eigen::Index>(split.size());
  for (Eigen::Index start = 0; start < n; start += kChunk) {
    const Eigen::Index len = std::min(kChunk, n - start);
    const RowMatrix rows = split.rows.middleRows(start, len).cast<double>();
    std::vector<int> labels(static_cast<std::size_t>(len));
    for (Eigen::Index i = 0; i < len; ++i) {
      const auto l = split.labels[static_cast<std::size_t>(start + i)];
      if (l >= params.classes()) throw DataError("evaluate_split: label out of range");
      labels[static_cast<std::size_t>(i)] = static_cast<int>(l);
    }
    Matrix logits = forward(params, rows);
    for (Eigen::Index r = 0; r < len; ++r) hits += predict_one(logits.row(r)) == labels[static_cast<std::size_t>(r)];
    nll += softmax_nll(logits, labels);
  }
  out.accuracy = static_cast<double>(hits) / static_cast<double>(n);
  out.loss = nll / static_cast<double>(n);
  return out;
}

std::vector<std::uint8_t> encode_params(const LinearClassifierParams& params) {
  std::vector<std::uint8_t> out;
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  auto f64 = [&](double d) {
    const auto v = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  out.insert(out.end(), {'M', 'L', 'P', '1'});
  u32(1);
  u32(static_cast<std::uint32_t>(params.classes()));
  u32(static_cast<std::uint32_t>(params.dim()));
  out.insert(out.end(), {2, 0, 0, 0});
  for (Eigen::Index c = 0; c < params.classes(); ++c) {
    for (Eigen::Index j = 0; j < params.dim(); ++j) f64(params.weights(c, j));
  }
  for (Eigen::Index c = 0; c < params.classes(); ++c) f64(params.bias(c));
  return out;
}

LinearClassifierParams decode_params(std::span<const std::uint8_t> bytes) {
  std::uint64_t pos = 0;
  auto need = [&](std::uint64_t n, const char* what) {
    if (bytes.size() - pos < n) {
      throw FormatError(FormatErrorKind::kTruncated, pos, std::string("need ") + std::to_string(n) + " bytes for " + what);
    }
  };
  auto u32 = [&](const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  };
  auto f64 = [&](const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
    pos += 8;
    return std::bit_cast<double>(v);
  };
  need(4, "magic");
  if (std::memcmp(bytes.data(), "MLP1", 4) != 0) throw FormatError(FormatErrorKind::kBadMagic, 0, "expected magic MLP1");
  pos = 4;
  if (u32("version") != 1) throw FormatError(FormatErrorKind::kBadVersion, 4, "unsupported version");
  const std::uint32_t classes = u32("classes");
  const std::uint32_t dim = u32("dim");
  need(4, "dtype");
  if (bytes[pos] != 2) throw FormatError(FormatErrorKind::kBadDtype, pos, "expected float64");
  pos += 4;
  const std::uint64_t elems = static_cast<std::uint64_t>(classes) * dim + classes;
  need(elems * 8, "parameters");
  LinearClassifierParams out = LinearClassifierParams::zeros(classes, dim);
  for (std::uint32_t c = 0; c < classes; ++c) {
    for (std::uint32_t j = 0; j < dim; ++j) out.weights(c, j) = f64("weight");
  }
  for (std::uint32_t c = 0; c < classes; ++c) out.bias(c) = f64("bias");
  if (pos != bytes.size()) throw FormatError(FormatErrorKind::kTrailingBytes, pos, "unexpected bytes after parameters");
  return out;
}

void save_params(const std::filesystem::path& path, const LinearClassifierParams& params) {
  write_file_bytes(path, encode_params(params));
}

LinearClassifierParams load_params(const std::filesystem::path& path) { return decode_params(read_file_bytes(path)); }

}  // namespace ggeur
