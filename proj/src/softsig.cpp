#include "omnia/softsig.hpp"

#include <cmath>

#include "omnia/error.hpp"

namespace omnia {

namespace {

bool binary(double v) { return v == 0.0 || v == 1.0; }

[[noreturn]] void bad_batch(const std::string& what) {
  throw Error(ErrorKind::Precondition, "loss batch: " + what);
}

}  // namespace

void LossBatch::check() const {
  const Eigen::Index r = rois();
  const Eigen::Index c = columns();
  if (r < 1 || c < 2) bad_batch("need R >= 1 and C >= 1");
  if (targets.rows() != r || targets.cols() != c || weights.rows() != r ||
      weights.cols() != c || mask.size() != r)
    bad_batch("logits, targets, mask and weights disagree in shape");
  if (!(lambda_binary >= 0.0) || !std::isfinite(lambda_binary))
    bad_batch("lambda_binary must be a finite non-negative number");
  if (!logits.allFinite()) throw Error(ErrorKind::Numeric, "loss batch: non-finite logits");
  for (Eigen::Index i = 0; i < r; ++i) {
    if (!binary(mask[i])) bad_batch("mask entries must be 0 or 1");
    double sum = 0.0;
    for (Eigen::Index j = 0; j < c; ++j) {
      if (!binary(targets(i, j))) bad_batch("targets must be one-hot");
      if (!binary(weights(i, j))) bad_batch("weights must be 0 or 1");
      sum += targets(i, j);
    }
    if (sum != 1.0) bad_batch("each target row must sum to 1");
  }
}

double log_sum_exp(const double* row, Eigen::Index n) {
  double peak = row[0];
  for (Eigen::Index j = 1; j < n; ++j) peak = std::max(peak, row[j]);
  double sum = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) sum += std::exp(row[j] - peak);
  return peak + std::log(sum);
}

double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

LossBatch make_batch(const RoiTargets& targets, std::span<const std::size_t> rows,
                     const Matrix& logits, double lambda_binary) {
  const auto width = static_cast<Eigen::Index>(targets.num_categories + 1);
  if (logits.cols() != width || logits.rows() != static_cast<Eigen::Index>(rows.size()))
    bad_batch("logit matrix must have one row per sampled ROI and C + 1 columns");
  LossBatch b;
  b.logits = logits;
  b.targets = Matrix::Zero(logits.rows(), width);
  b.weights = Matrix::Zero(logits.rows(), width);
  b.mask = Vector::Zero(logits.rows());
  b.lambda_binary = lambda_binary;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const RoiTarget& t = targets.rois.at(rows[i]);
    const auto r = static_cast<Eigen::Index>(i);
    b.targets(r, static_cast<Eigen::Index>(t.class_index)) = 1.0;
    b.mask[r] = t.mask ? 1.0 : 0.0;
    for (Eigen::Index c = 0; c < width; ++c) b.weights(r, c) = t.weights[static_cast<std::size_t>(c)];
  }
  return b;
}

double categorical_loss(const LossBatch& b) {
  b.check();
  const Eigen::Index cols = b.columns();
  double total = 0.0;
  for (Eigen::Index r = 0; r < b.rois(); ++r) {
    if (b.mask[r] == 0.0) continue;
    const double lse = log_sum_exp(b.logits.row(r).data(), cols);
    for (Eigen::Index c = 0; c < cols; ++c)
      if (b.targets(r, c) != 0.0) total += b.targets(r, c) * (lse - b.logits(r, c));
  }
  return total / static_cast<double>(b.rois());
}

double binary_loss(const LossBatch& b) {
  b.check();
  const Eigen::Index cols = b.columns();
  double total = 0.0;
  for (Eigen::Index r = 0; r < b.rois(); ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (b.weights(r, c) == 0.0) continue;
      const double x = b.logits(r, c);
      const double t = b.targets(r, c);
      // -log sigmoid(x) = softplus(-x), -log(1 - sigmoid(x)) = softplus(x)
      total += t * softplus(-x) + (1.0 - t) * softplus(x);
    }
  }
  return total / static_cast<double>(b.rois() * cols);
}

double softsig_loss(const LossBatch& b) {
  return categorical_loss(b) + b.lambda_binary * binary_loss(b);
}

Matrix softsig_gradient(const LossBatch& b) {
  b.check();
  const Eigen::Index rows = b.rois();
  const Eigen::Index cols = b.columns();
  const double categorical_scale = 1.0 / static_cast<double>(rows);
  const double binary_scale = b.lambda_binary / static_cast<double>(rows * cols);

  Matrix grad = Matrix::Zero(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (b.mask[r] != 0.0) {
      const double lse = log_sum_exp(b.logits.row(r).data(), cols);
      for (Eigen::Index c = 0; c < cols; ++c)
        grad(r, c) += categorical_scale * (std::exp(b.logits(r, c) - lse) - b.targets(r, c));
    }
    if (binary_scale == 0.0) continue;
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (b.weights(r, c) == 0.0) continue;
      grad(r, c) += binary_scale * (sigmoid(b.logits(r, c)) - b.targets(r, c));
    }
  }
  return grad;
}

}  // namespace omnia
