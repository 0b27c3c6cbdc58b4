#include "omnia/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace omnia {

LossBatch random_batch(rng::Engine& gen, int max_rois, int max_categories, double logit_sigma,
                       double lambda_binary) {
  const auto pick = [&gen](int hi) { return 1 + static_cast<int>(rng::uniform(gen) * hi); };
  const Eigen::Index rows = pick(max_rois);
  const Eigen::Index categories = pick(max_categories);
  const Eigen::Index cols = categories + 1;

  LossBatch b;
  b.lambda_binary = lambda_binary;
  b.logits = Matrix(rows, cols);
  b.targets = Matrix::Zero(rows, cols);
  b.weights = Matrix::Ones(rows, cols);
  b.mask = Vector::Ones(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) b.logits(r, c) = logit_sigma * rng::normal(gen);
    const auto target = static_cast<Eigen::Index>(rng::uniform(gen) * static_cast<double>(cols));
    if (rng::uniform(gen) < 1.0 / 3.0) {
      // Unsafe-matched: background target, nothing said about its category.
      const auto matched =
          static_cast<Eigen::Index>(rng::uniform(gen) * static_cast<double>(categories));
      b.targets(r, categories) = 1.0;
      b.mask[r] = 0.0;
      b.weights(r, std::min(matched, categories - 1)) = 0.0;
      b.weights(r, categories) = 0.0;
    } else {
      b.targets(r, std::min(target, cols - 1)) = 1.0;
    }
  }
  return b;
}

Matrix numeric_gradient(const LossBatch& b, double h) {
  Matrix grad(b.rois(), b.columns());
  LossBatch probe = b;
  for (Eigen::Index r = 0; r < b.rois(); ++r) {
    for (Eigen::Index c = 0; c < b.columns(); ++c) {
      const double x = b.logits(r, c);
      probe.logits(r, c) = x + h;
      const double up = softsig_loss(probe);
      probe.logits(r, c) = x - h;
      const double down = softsig_loss(probe);
      probe.logits(r, c) = x;
      grad(r, c) = (up - down) / (2.0 * h);
    }
  }
  return grad;
}

double max_relative_error(const Matrix& analytic, const Matrix& numeric) {
  double worst = 0.0;
  for (Eigen::Index r = 0; r < analytic.rows(); ++r) {
    for (Eigen::Index c = 0; c < analytic.cols(); ++c) {
      const double a = analytic(r, c);
      const double n = numeric(r, c);
      const double scale = std::max(std::abs(a), std::abs(n));
      if (scale == 0.0) continue;
      worst = std::max(worst, std::abs(a - n) / scale);
    }
  }
  return worst;
}

GradientCheck gradient_check(std::uint64_t seed, std::size_t trials, double h) {
  GradientCheck out;
  out.trials = trials;
  for (std::size_t t = 0; t < trials; ++t) {
    rng::Engine gen = rng::engine(seed, "gradcheck", t);
    const LossBatch b = random_batch(gen);
    const Matrix analytic = softsig_gradient(b);
    out.entries += static_cast<std::size_t>(analytic.size());
    out.max_relative_error =
        std::max(out.max_relative_error, max_relative_error(analytic, numeric_gradient(b, h)));
  }
  return out;
}

}  // namespace omnia
