#pragma once

#include <string>
#include <vector>

#include "omnia/annotations.hpp"
#include "omnia/rng.hpp"

namespace testing {

using namespace omnia;

inline Dataset make_dataset(std::vector<std::string> names, int images = 1, int size = 100) {
  Dataset d;
  for (int i = 0; i < images; ++i) d.images.push_back({i + 1, size, size, "a"});
  for (std::size_t c = 0; c < names.size(); ++c)
    d.categories.push_back({static_cast<Id>(c + 1), names[c]});
  return d;
}

inline Instance gt(Id id, Id image, Id category, Box box) {
  return {id, image, category, box, Provenance::ground_truth()};
}

inline Instance safe(Id id, Id image, Id category, Box box, double score) {
  return {id, image, category, box, Provenance::safe(score)};
}

inline Instance unsafe(Id id, Id image, Id category, Box box, double score) {
  return {id, image, category, box, Provenance::unsafe(score)};
}

// A box inside [0, size]^2 with sides in [1, size / 2].
inline Box random_box(rng::Engine& gen, double size = 100.0) {
  const double w = 1.0 + rng::uniform(gen) * (size / 2 - 1.0);
  const double h = 1.0 + rng::uniform(gen) * (size / 2 - 1.0);
  return {rng::uniform(gen) * (size - w), rng::uniform(gen) * (size - h), w, h};
}

// A box with the requested IoU against `ref`, sharing its top-left corner
// and height and differing only in width (requires 0 < target <= 1).
inline Box box_with_iou(const Box& ref, double target) {
  return {ref.x, ref.y, ref.w * target, ref.h};
}

}  // namespace testing
