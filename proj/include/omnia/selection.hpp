#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "omnia/annotations.hpp"

namespace omnia {

struct Thresholds {
  double low = 0.2;
  double high = 0.9;
};

struct SelectionConfig {
  double threshold_low = 0.2;
  double threshold_high = 0.9;
  std::map<std::string, Thresholds> per_category;  // keyed by canonical name
  double dedup_iou = 0.7;

  Thresholds thresholds_for(const std::string& category_name) const;

  // Throws Error{Config} unless 0 <= low < high <= 1 for every effective
  // pair and dedup_iou is in (0, 1].
  void check() const;
};

struct BucketCounts {
  std::size_t safe = 0;
  std::size_t unsafe = 0;
  std::size_t discarded_low = 0;
  std::size_t discarded_dedup = 0;

  std::size_t total() const { return safe + unsafe + discarded_low + discarded_dedup; }
};

// Instances carry the index of their source detection as id and keep the
// detection's category id; callers re-id and remap them.
struct SelectionResult {
  std::vector<Instance> safe;
  std::vector<Instance> unsafe;
  std::size_t discarded_low = 0;
  std::size_t discarded_dedup = 0;
  std::map<std::string, BucketCounts> per_category;

  BucketCounts totals() const {
    return {safe.size(), unsafe.size(), discarded_low, discarded_dedup};
  }
};

// Splits detections into safe predictions (score > high), unsafe
// predictions (low < score <= high) and discards (score <= low). A
// detection overlapping any ground-truth box of its image with IoU above
// dedup_iou is discarded first, whatever the categories involved.
//
// `target` supplies the images and the human labels (only GroundTruth
// instances are consulted); `categories` is the taxonomy the detections are
// expressed in. Throws Error{Referential} naming an unknown image id.
SelectionResult select(const DetectionSet& detections, const Dataset& target,
                       const std::vector<Category>& categories,
                       const SelectionConfig& cfg);

// {safe, unsafe, discarded_low, discarded_dedup, per_category: {...}}
nlohmann::json selection_stats(const SelectionResult& result);

}  // namespace omnia
