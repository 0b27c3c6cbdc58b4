#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "omnia/annotations.hpp"

namespace omnia {

// Whether ROIs matched to unsafe predictions may fill the non-positive
// part of a box-classifier batch.
enum class UnsafeSampling { Pooled, Excluded };

UnsafeSampling unsafe_sampling_from_string(std::string_view text);
std::string_view to_string(UnsafeSampling mode);

struct AssignConfig {
  double rpn_pos_iou = 0.7;
  double rpn_neg_iou = 0.3;
  double roi_pos_iou = 0.5;
  double undefined_iou = 0.3;
  std::size_t rpn_batch = 256;
  std::size_t roi_batch = 124;
  double roi_pos_fraction = 0.25;
  double rpn_pos_fraction = 0.5;
  UnsafeSampling unsafe_sampling = UnsafeSampling::Pooled;
  std::uint64_t seed = 3;

  void check() const;  // throws Error{Config}
};

enum class AnchorLabel { Positive, Negative, Undefined };

std::string_view to_string(AnchorLabel label);

// Positive when some ground truth or safe prediction overlaps at
// >= rpn_pos_iou; otherwise Undefined when an unsafe prediction overlaps at
// >= undefined_iou; otherwise Negative when every trusted overlap is below
// rpn_neg_iou; anything left sits in the ignore band and is Undefined.
std::vector<AnchorLabel> assign_anchors(std::span<const Box> anchors,
                                        std::span<const Instance> instances,
                                        const AssignConfig& cfg);

// Box-classifier target for one ROI. Category columns follow the taxonomy
// order, with background as the last column.
struct RoiTarget {
  std::size_t class_index = 0;  // == num_categories for background
  bool mask = true;              // m_r; false iff matched an unsafe prediction
  std::vector<std::uint8_t> weights;  // w_r^c, num_categories + 1 entries
  bool regression_valid = false;
  std::optional<Id> matched_instance;
  std::optional<Origin> matched_origin;

  bool unsafe() const { return !mask; }
};

struct RoiTargets {
  std::size_t num_categories = 0;
  std::vector<RoiTarget> rois;

  std::size_t background_index() const { return num_categories; }
  bool positive(std::size_t i) const {
    return rois[i].mask && rois[i].class_index != num_categories;
  }
};

// Matches every ROI to the instance with the highest IoU >= roi_pos_iou
// (ties to the lowest instance id). `categories` fixes the column order.
RoiTargets assign_rois(std::span<const Box> rois, std::span<const Instance> instances,
                       std::span<const Category> categories, const AssignConfig& cfg);

struct Sample {
  std::vector<std::size_t> positives;  // ascending indices
  std::vector<std::size_t> negatives;  // ascending indices

  std::vector<std::size_t> all() const;
};

// Up to rpn_batch anchors, ceil(rpn_batch * rpn_pos_fraction) of them
// positive when available; Undefined anchors are never drawn. A short
// bucket is topped up from the other one.
Sample sample_anchors(std::span<const AnchorLabel> labels, const AssignConfig& cfg,
                      std::uint64_t seed);

// Up to roi_batch ROIs, ceil(roi_batch * roi_pos_fraction) positive when
// available; the rest come uniformly from background ROIs and, when
// unsafe_sampling is Pooled, unsafe-matched ROIs. Throws
// Error{Precondition} when no ROI is eligible.
Sample sample_rois(const RoiTargets& targets, const AssignConfig& cfg, std::uint64_t seed);

// Positive-bucket quota for a batch, robust to fractions like 0.3 * 10.
std::size_t positive_quota(std::size_t batch, double fraction);

// Per-image dump used by the CLI and golden tests.
nlohmann::json assignment_dump(Id image_id, std::span<const Box> anchors,
                               std::span<const AnchorLabel> labels,
                               const Sample& anchor_sample, std::span<const Box> rois,
                               const RoiTargets& targets, const Sample& roi_sample);

// Square/rectangular anchors centred on a regular grid, clipped to the
// image. Only used to produce probe boxes for dumps and the simulator.
std::vector<Box> grid_anchors(double width, double height, double stride,
                              std::span<const double> sizes,
                              std::span<const double> aspect_ratios);

}  // namespace omnia
