#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "omnia/annotations.hpp"
#include "omnia/selection.hpp"

namespace omnia {

enum class Side { A, B };

inline Side other(Side side) { return side == Side::A ? Side::B : Side::A; }
std::string_view to_string(Side side);  // "a" | "b"

// Union of two taxonomies keyed by canonical name. Merged ids are dense,
// 1..N in sorted-name order.
struct MergedTaxonomy {
  std::vector<Category> categories;
  std::map<Id, Id> remap_a;
  std::map<Id, Id> remap_b;
  std::set<std::string> shared;

  const std::map<Id, Id>& remap(Side side) const {
    return side == Side::A ? remap_a : remap_b;
  }
  // The side's own taxonomy: its original ids with canonical names.
  std::vector<Category> source_categories(Side side) const;
  const std::string& name_of(Id merged_id) const;
};

MergedTaxonomy build_taxonomy(const std::vector<Category>& cats_a,
                              const std::vector<Category>& cats_b);

// What to do with categories labeled by both datasets.
enum class SharedPolicy {
  KeepGroundTruth,  // keep both sides' human labels, never add predictions
  Reject,           // refuse to merge overlapping taxonomies
};

SharedPolicy shared_policy_from_string(std::string_view text);
std::string_view to_string(SharedPolicy policy);

// Throws Error{Config} when the policy forbids the taxonomy's overlap.
void check_shared_policy(const MergedTaxonomy& taxonomy, SharedPolicy policy);

struct EnrichedDataset {
  Dataset dataset;
  Side source = Side::A;
  double sampling_weight = 1.0;
  SelectionResult selection;
  std::size_t dropped_shared = 0;
};

// Remaps the dataset's ground truth into the merged taxonomy and appends
// the selected complementary predictions, restricted to categories the
// dataset does not label itself. `complementary` is expressed in the other
// side's original category ids. Input instances that are not ground truth
// are replaced by the fresh selection.
EnrichedDataset enrich(const Dataset& dataset, Side side,
                       const DetectionSet& complementary,
                       const MergedTaxonomy& taxonomy, const SelectionConfig& cfg);

struct SourceSpan {
  Side source = Side::A;
  Id first_image_id = 0;
  std::size_t image_count = 0;
  double sampling_weight = 1.0;
};

struct MergedDataset {
  Dataset dataset;
  std::vector<SourceSpan> sources;
};

// Concatenates the two enriched datasets with dense re-iding (A's images
// first). Each source gets weight |larger| / |this| so that both are drawn
// equally often per epoch.
MergedDataset merge(const EnrichedDataset& a, const EnrichedDataset& b);

// Annotation JSON plus a top-level "sources" array describing the spans
// and their sampling weights.
std::string serialize_merged(const MergedDataset& merged);

struct RoundDetections {
  DetectionSet on_a;  // predictions on A's images, in B's category ids
  DetectionSet on_b;  // predictions on B's images, in A's category ids
};

struct RoundResult {
  int round = 0;
  EnrichedDataset a;
  EnrichedDataset b;
  MergedDataset merged;
};

// Supplies the complementary detections of a round (1-based) given the
// results of all earlier rounds.
using DetectionSource =
    std::function<RoundDetections(int round, const std::vector<RoundResult>& previous)>;

// Repeats enrich + merge `rounds` times, each round with detections from
// `source` and the same selection config.
std::vector<RoundResult> iterate(const Dataset& a, const Dataset& b,
                                 const DetectionSource& source, int rounds,
                                 const SelectionConfig& cfg);

nlohmann::json round_stats(const RoundResult& round);

}  // namespace omnia
