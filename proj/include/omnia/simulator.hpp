#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "omnia/annotations.hpp"
#include "omnia/assignment.hpp"
#include "omnia/merging.hpp"
#include "omnia/metrics.hpp"
#include "omnia/selection.hpp"

namespace omnia {

// Synthetic scenes with a complete ("hidden") annotation.
struct SceneConfig {
  std::size_t n_images = 100;
  int width = 320;
  int height = 320;
  std::vector<std::string> taxonomy;  // category ids are 1..N in this order
  int min_objects = 3;
  int max_objects = 7;
  double min_box = 24.0;
  double max_box = 96.0;
  double overlap_cap = 0.3;  // max pairwise IoU among generated boxes
  std::uint64_t seed = 3;
  std::string domain_tag = "a";
  Id first_image_id = 1;

  void check() const;  // throws Error{Config}
};

// Throws Error{Precondition} naming the image when an object cannot be
// placed under the overlap cap after a bounded number of attempts.
Dataset generate_scenes(const SceneConfig& cfg);

// Removes the named categories and all their instances.
Dataset strip_categories(const Dataset& d, const std::set<std::string>& names);

// A noisy stand-in for a trained detector. Each hidden object of a
// requested category is found with probability recall (times the
// degradation factor on images of another domain), its box jittered by
// jitter_sigma relative to its size, and scored
// clip(score_base + score_iou_weight * IoU + score_noise * N(0,1)).
// Per image, Poisson(fp_per_image) background boxes are added with scores
// clip(fp_score_mean + fp_score_sigma * N(0,1)).
struct DetectorModel {
  double recall = 0.9;
  std::map<std::string, double> per_category_recall;
  double jitter_sigma = 0.06;
  double score_base = 0.3;
  double score_iou_weight = 0.7;  // 0 decorrelates score from box quality
  double score_noise = 0.05;
  double fp_per_image = 0.5;
  double fp_score_mean = 0.3;
  double fp_score_sigma = 0.15;
  double cross_domain_degradation = 0.85;
  std::string domain_tag = "a";
  std::uint64_t seed = 3;

  double recall_for(const std::string& name) const;
  void check() const;  // throws Error{Config}
};

// Detections on `hidden`'s images, in `hidden`'s category ids, for the
// named categories only.
DetectionSet simulate_detector(const Dataset& hidden, const DetectorModel& model,
                               const std::vector<std::string>& categories);

enum class Variant { Naive, HardDistillation, DiscardUnsafe, SoftSig };

std::string_view to_string(Variant v);  // naive | hard | discard | softsig
Variant variant_from_string(std::string_view text);

// Probe boxes and logits used to report assignment and loss statistics.
struct ProbeConfig {
  double anchor_stride = 16.0;
  std::vector<double> anchor_sizes{32.0, 64.0, 128.0};
  std::vector<double> anchor_ratios{0.5, 1.0, 2.0};
  int rois_per_object = 4;
  int background_rois = 16;
  double roi_jitter = 0.15;
  double probe_logit = 2.0;
};

struct ExperimentConfig {
  std::uint64_t seed = 3;
  SceneConfig scene;  // n_images split between the two domains
  std::vector<std::string> categories_a;
  std::vector<std::string> categories_b;
  std::string domain_a = "a";
  std::string domain_b = "b";
  std::optional<SharedPolicy> shared_policy;
  DetectorModel detector_a;  // trained on A: predicts categories_a on B's images
  DetectorModel detector_b;  // trained on B: predicts categories_b on A's images
  SelectionConfig selection;
  AssignConfig assignment;
  ProbeConfig probe;
  std::vector<Variant> variants{Variant::Naive, Variant::HardDistillation,
                                Variant::DiscardUnsafe, Variant::SoftSig};
  int rounds = 1;
  std::vector<double> sweep_high;
};

// 200 images, six categories split 3/3, seed 3.
ExperimentConfig default_experiment();

struct EnrichmentQuality {
  std::size_t added = 0;    // predictions the arm uses as supervision
  std::size_t matched = 0;  // of those, matching a missing hidden object
  std::size_t missing = 0;  // hidden objects absent from human labels
  double precision = 0.0;   // percent; 0 when nothing was added
  double recall = 0.0;      // percent; 0 when nothing was missing
};

struct AssignmentStats {
  std::size_t anchors_positive = 0;
  std::size_t anchors_negative = 0;
  std::size_t anchors_undefined = 0;
  std::size_t rpn_sampled = 0;
  std::size_t rpn_sampled_undefined = 0;
  std::size_t rois_positive = 0;
  std::size_t rois_background = 0;
  std::size_t rois_unsafe = 0;
  std::size_t roi_sampled_positive = 0;
  std::size_t roi_sampled_negative = 0;
  std::size_t roi_sampled_unsafe = 0;
};

struct ProbeLoss {
  double categorical = 0.0;
  double binary = 0.0;
  double total = 0.0;
  std::size_t batches = 0;
};

struct ArmReport {
  Variant variant = Variant::Naive;
  MergedDataset merged;  // the arm's training targets
  EnrichmentQuality quality;
  EvalReport eval;       // targets scored as detections vs hidden truth
  AssignmentStats assignment;
  ProbeLoss loss;
};

struct SweepRow {
  double threshold_high = 0.0;
  std::map<Variant, double> map;
};

struct RoundReport {
  int round = 0;
  EnrichmentQuality quality;
  double map = 0.0;
  nlohmann::json selection;
};

struct ExperimentReport {
  std::uint64_t seed = 0;
  Dataset hidden;
  Dataset dataset_a;
  Dataset dataset_b;
  DetectionSet det_on_a;  // detector_b's output on A's images, B ids
  DetectionSet det_on_b;  // detector_a's output on B's images, A ids
  nlohmann::json selection;
  std::vector<ArmReport> arms;
  std::vector<SweepRow> sweep;
  std::vector<RoundReport> rounds;

  const ArmReport& arm(Variant v) const;
};

// Runs every configured arm end to end. Sub-seeds for scenes, detectors
// and sampling are all derived from cfg.seed; seeds inside the nested
// configs are ignored. Throws Error{Config} when the two category subsets
// overlap and no shared-category policy is given.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

// Training targets of a variant: ground truth only (naive), ground truth
// plus safe predictions (hard distillation), or everything (discard and
// softsig, which differ in how unsafe boxes are sampled and weighted).
Dataset variant_targets(const Dataset& enriched, Variant v);

// Targets scored as detections: human labels and safe predictions at 1.0,
// unsafe predictions at their own score when the arm learns from them
// (softsig only).
DetectionSet targets_as_detections(const Dataset& targets, Variant v);

EnrichmentQuality enrichment_quality(const Dataset& targets, Variant v, const Dataset& hidden,
                                     const std::set<std::string>& supervised_a,
                                     const std::set<std::string>& supervised_b,
                                     const std::vector<SourceSpan>& spans);

nlohmann::json to_json(const ExperimentReport& report, const ExperimentConfig& cfg);

}  // namespace omnia
