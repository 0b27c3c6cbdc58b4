#pragma once

#include <cstddef>
#include <cstdint>

#include "omnia/rng.hpp"
#include "omnia/softsig.hpp"

namespace omnia {

// A random batch with 1..max_rois rows and 1..max_categories categories,
// logits ~ N(0, logit_sigma^2). About a third of the rows are
// unsafe-matched (mask 0, matched category and background weights 0).
LossBatch random_batch(rng::Engine& gen, int max_rois = 8, int max_categories = 5,
                       double logit_sigma = 2.0, double lambda_binary = 1.0);

// Central differences of softsig_loss with step h.
Matrix numeric_gradient(const LossBatch& b, double h = 1e-5);

// Elementwise |a - n| / max(|a|, |n|), with 0 when both are exactly 0.
double max_relative_error(const Matrix& analytic, const Matrix& numeric);

struct GradientCheck {
  std::size_t trials = 0;
  std::size_t entries = 0;
  double max_relative_error = 0.0;
};

// Compares softsig_gradient against numeric_gradient on `trials` random
// batches drawn from `seed`.
GradientCheck gradient_check(std::uint64_t seed, std::size_t trials, double h = 1e-5);

}  // namespace omnia
