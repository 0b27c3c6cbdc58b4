#pragma once

#include <cmath>

namespace omnia {

// Axis-aligned box in continuous pixel coordinates, [x, y, w, h] with
// area = w * h (no +1 pixel convention).
struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double right() const { return x + w; }
  double bottom() const { return y + h; }
  double area() const { return w * h; }

  bool valid() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(w) &&
           std::isfinite(h) && w > 0.0 && h > 0.0;
  }

  friend bool operator==(const Box&, const Box&) = default;
};

// Intersection over union; 0 when the boxes are disjoint or only touch.
double iou(const Box& a, const Box& b);

// Clips the box to [0, width] x [0, height]. The result may be empty
// (w or h <= 0) when the box lies entirely outside the image.
Box clamp_to_image(const Box& box, double width, double height);

}  // namespace omnia
