#pragma once

#include <string>
#include <string_view>

#include "omnia/assignment.hpp"
#include "omnia/merging.hpp"
#include "omnia/selection.hpp"
#include "omnia/simulator.hpp"

namespace omnia {

// Settings of the `merge`, `select`, `iterate` and `assign` commands.
//
//   [selection]
//   threshold_low = 0.2
//   threshold_high = 0.9
//   dedup_iou = 0.7
//   [selection.per_category.car]
//   low = 0.3
//   high = 0.95
//
//   [merge]
//   shared_policy = "keep_ground_truth"   # or "reject"
//   rounds = 1
//
//   [assignment]
//   rpn_pos_iou = 0.7 ...  unsafe_sampling = "pooled"
struct PipelineConfig {
  SelectionConfig selection;
  AssignConfig assignment;
  SharedPolicy shared_policy = SharedPolicy::KeepGroundTruth;
  int rounds = 1;
};

// Both throw Error{Config} on TOML syntax errors, unknown keys, mistyped
// values and violated invariants.
PipelineConfig parse_pipeline_config(std::string_view toml_text);

// Experiment TOML; every key is optional and falls back to
// default_experiment(). Top level: seed, variants, rounds, sweep_high,
// shared_policy, domain_a, domain_b; tables [scene], [dataset_a],
// [dataset_b] (key `categories`), [detector_a], [detector_b],
// [selection], [assignment], [probe].
ExperimentConfig parse_experiment_config(std::string_view toml_text);

}  // namespace omnia
