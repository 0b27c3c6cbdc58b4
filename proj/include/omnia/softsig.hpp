#pragma once

#include <Eigen/Core>

#include "omnia/assignment.hpp"

namespace omnia {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// One box-classifier batch: R rows, C + 1 columns (categories, then
// background). Targets are one-hot rows; mask and weights are 0/1.
struct LossBatch {
  Matrix logits;
  Matrix targets;
  Vector mask;
  Matrix weights;
  double lambda_binary = 1.0;

  Eigen::Index rois() const { return logits.rows(); }
  Eigen::Index columns() const { return logits.cols(); }

  // Throws Error{Precondition} on shape or value violations and
  // Error{Numeric} on non-finite logits.
  void check() const;
};

// Builds a batch from sampled ROI targets and the matching logit rows.
LossBatch make_batch(const RoiTargets& targets, std::span<const std::size_t> rows,
                     const Matrix& logits, double lambda_binary);

// -(1/R) sum_r m_r sum_c t_rc log softmax(x_r)_c
double categorical_loss(const LossBatch& b);

// -(1/(R(C+1))) sum_{r,c} w_rc [t log sigmoid(x) + (1 - t) log(1 - sigmoid(x))]
double binary_loss(const LossBatch& b);

// categorical_loss + lambda_binary * binary_loss
double softsig_loss(const LossBatch& b);

// Analytic dL/dx of softsig_loss. Entries whose mask and weight are both
// zero are exactly +0.0.
Matrix softsig_gradient(const LossBatch& b);

// Numerically stable pieces, exposed for tests.
double log_sum_exp(const double* row, Eigen::Index n);
double softplus(double x);  // log(1 + exp(x))
double sigmoid(double x);

}  // namespace omnia
