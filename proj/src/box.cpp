#include "omnia/box.hpp"

#include <algorithm>

namespace omnia {

namespace {

// Overlap of [a0, a0 + a) and [b0, b0 + b). When one interval contains the
// other the overlap is that interval's own length, so identical and nested
// boxes give exact ratios instead of rounding through the right edge.
double overlap(double a0, double a, double b0, double b) {
  const double lo = std::max(a0, b0);
  const double hi = std::min(a0 + a, b0 + b);
  if (lo == a0 && hi == a0 + a) return a;
  if (lo == b0 && hi == b0 + b) return b;
  return hi - lo;
}

}  // namespace

double iou(const Box& a, const Box& b) {
  const double iw = overlap(a.x, a.w, b.x, b.w);
  const double ih = overlap(a.y, a.h, b.y, b.h);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

Box clamp_to_image(const Box& box, double width, double height) {
  const double x0 = std::clamp(box.x, 0.0, width);
  const double y0 = std::clamp(box.y, 0.0, height);
  const double x1 = std::clamp(box.right(), 0.0, width);
  const double y1 = std::clamp(box.bottom(), 0.0, height);
  if (x0 == box.x && y0 == box.y && x1 == box.right() && y1 == box.bottom())
    return box;
  return {x0, y0, x1 - x0, y1 - y0};
}

}  // namespace omnia
