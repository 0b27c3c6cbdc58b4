#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "omnia/annotations.hpp"

namespace omnia {

// Outcome of greedy matching for one category: detections visited in
// descending score order (ties keep input order), each taking the unmatched
// ground truth of its image with the highest IoU >= threshold.
struct MatchResult {
  std::vector<std::size_t> order;     // detection indices, visiting order
  std::vector<bool> true_positive;    // aligned with `order`
  std::vector<double> matched_iou;    // aligned with `order`, 0 for FP
  std::size_t ground_truth = 0;
};

// Only ground-truth provenance counts as evaluation truth.
MatchResult match_category(const DetectionSet& dets, const Dataset& gt, Id category_id,
                           double iou_thresh);

struct CategoryReport {
  Id category_id = 0;
  std::string name;
  std::size_t gt = 0;
  double ap = 0.0;       // percent
  std::optional<double> olrp;  // percent; empty when the category has no GT
  std::size_t tp = 0;    // counts at the oLRP-optimal threshold
  std::size_t fp = 0;
  std::size_t fn = 0;
};

struct EvalReport {
  std::vector<CategoryReport> categories;
  double map = 0.0;    // percent, over categories with >= 1 GT
  double molrp = 0.0;  // percent, over categories with >= 1 GT
  std::vector<std::string> skipped;  // categories without GT
};

// All-point interpolated AP at `iou_thresh`, in percent. Throws
// Error{Referential} when the category is not in gt's taxonomy.
double average_precision(const DetectionSet& dets, const Dataset& gt, Id category_id,
                         double iou_thresh = 0.5);

double mean_ap(const DetectionSet& dets, const Dataset& gt, double iou_thresh = 0.5);

struct LrpResult {
  double olrp = 100.0;  // percent
  double threshold = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

// Optimal LRP over the distinct detection scores, in percent. Returns
// nullopt when the category has no ground truth. Throws Error{Config} for
// tau outside (0, 1).
std::optional<LrpResult> olrp(const DetectionSet& dets, const Dataset& gt, Id category_id,
                              double tau = 0.5);

double molrp(const DetectionSet& dets, const Dataset& gt, double tau = 0.5);

EvalReport evaluate(const DetectionSet& dets, const Dataset& gt, double iou_thresh = 0.5,
                    double tau = 0.5);

nlohmann::json to_json(const EvalReport& report);

}  // namespace omnia
