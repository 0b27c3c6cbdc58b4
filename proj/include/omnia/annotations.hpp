#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "omnia/box.hpp"

namespace omnia {

using Id = std::int64_t;

struct Category {
  Id id = 0;
  std::string name;  // canonical lowercase

  friend bool operator==(const Category&, const Category&) = default;
};

enum class Origin { GroundTruth, SafePrediction, UnsafePrediction };

std::string_view to_string(Origin origin);  // "gt" | "safe" | "unsafe"
std::optional<Origin> origin_from_string(std::string_view text);

// Where an instance came from. Ground truth never carries a score;
// predictions carry one in (0, 1].
struct Provenance {
  Origin origin = Origin::GroundTruth;
  std::optional<double> score;

  static Provenance ground_truth() { return {}; }
  static Provenance safe(double s) { return {Origin::SafePrediction, s}; }
  static Provenance unsafe(double s) { return {Origin::UnsafePrediction, s}; }

  bool trusted() const { return origin != Origin::UnsafePrediction; }

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct Instance {
  Id id = 0;
  Id image_id = 0;
  Id category_id = 0;
  Box box;
  Provenance provenance;

  friend bool operator==(const Instance&, const Instance&) = default;
};

struct Image {
  Id id = 0;
  int width = 0;
  int height = 0;
  std::string domain_tag;

  friend bool operator==(const Image&, const Image&) = default;
};

struct Dataset {
  std::vector<Image> images;
  std::vector<Category> categories;
  std::vector<Instance> instances;

  const Image* find_image(Id id) const;
  const Category* find_category(Id id) const;
  const Category* find_category(std::string_view name) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// A raw scored detector output, before any selection.
struct Detection {
  Id image_id = 0;
  Id category_id = 0;
  Box box;
  double score = 0.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

using DetectionSet = std::vector<Detection>;

// Lowercases ASCII letters and trims surrounding whitespace.
std::string canonical_name(std::string_view name);

// Parses the annotation JSON format. Boxes are clamped to their image and
// a missing provenance means ground truth. Throws ParseError on malformed
// JSON, Error{Schema} on missing/mistyped fields, Error{Referential} on a
// dangling image or category id and Error{Geometry} on non-positive sizes.
Dataset parse_dataset(std::string_view text);

// Canonical JSON text; parse_dataset(serialize_dataset(d)) == d for any
// dataset that already satisfies validate().
std::string serialize_dataset(const Dataset& dataset);

// Parses a detection file (JSON array). Checks geometry and score range
// only; referential checks need the target images and taxonomy, see
// check_detections().
DetectionSet parse_detections(std::string_view text);
std::string serialize_detections(const DetectionSet& detections);

// Verifies every detection against an image list and a taxonomy and
// returns the detections clamped to their images. Throws Error{Referential}
// naming the first dangling id and Error{Geometry} for boxes that fall
// entirely outside their image.
DetectionSet check_detections(const DetectionSet& detections,
                              const std::vector<Image>& images,
                              const std::vector<Category>& categories);

// Human-readable description of each broken invariant; empty when the
// dataset is valid.
std::vector<std::string> validate(const Dataset& dataset);

// Instances grouped by image id, preserving input order within an image.
std::map<Id, std::vector<const Instance*>> group_by_image(
    const std::vector<Instance>& instances);

}  // namespace omnia
