#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "omnia/assignment.hpp"
#include "omnia/error.hpp"
#include "support.hpp"

using namespace omnia;
using namespace testing;

namespace {

const Box kRef{0, 0, 40, 40};

std::vector<AnchorLabel> labels_for(const Box& anchor, std::vector<Instance> instances) {
  const std::vector<Box> anchors{anchor};
  return assign_anchors(anchors, instances, {});
}

std::vector<AnchorLabel> make_labels(std::size_t pos, std::size_t neg, std::size_t undef) {
  std::vector<AnchorLabel> out;
  out.insert(out.end(), pos, AnchorLabel::Positive);
  out.insert(out.end(), neg, AnchorLabel::Negative);
  out.insert(out.end(), undef, AnchorLabel::Undefined);
  return out;
}

// Targets with the requested numbers of positive, background and unsafe ROIs.
RoiTargets make_targets(std::size_t pos, std::size_t bg, std::size_t unsafe_count) {
  RoiTargets t;
  t.num_categories = 2;
  auto add = [&](std::size_t n, std::size_t cls, bool mask) {
    for (std::size_t i = 0; i < n; ++i) {
      RoiTarget r;
      r.class_index = cls;
      r.mask = mask;
      r.weights.assign(3, 1);
      if (!mask) r.weights[0] = r.weights[2] = 0;
      t.rois.push_back(r);
    }
  };
  add(pos, 0, true);
  add(bg, 2, true);
  add(unsafe_count, 2, false);
  return t;
}

}  // namespace

TEST_SUITE("assignment") {

TEST_CASE("anchor rules") {
  SUBCASE("IoU 0.8 with ground truth is positive") {
    CHECK(labels_for(box_with_iou(kRef, 0.8), {gt(1, 1, 1, kRef)})[0] == AnchorLabel::Positive);
  }
  SUBCASE("a safe prediction counts as trusted") {
    CHECK(labels_for(box_with_iou(kRef, 0.8), {safe(1, 1, 1, kRef, 0.95)})[0] ==
          AnchorLabel::Positive);
  }
  SUBCASE("IoU 0.75 with only an unsafe prediction is undefined") {
    CHECK(labels_for(box_with_iou(kRef, 0.75), {unsafe(1, 1, 1, kRef, 0.5)})[0] ==
          AnchorLabel::Undefined);
  }
  SUBCASE("IoU 0.05 with everything is negative") {
    CHECK(labels_for(box_with_iou(kRef, 0.05),
                     {gt(1, 1, 1, kRef), unsafe(2, 1, 1, kRef, 0.5)})[0] == AnchorLabel::Negative);
  }
  SUBCASE("the ignore band between the thresholds is undefined") {
    CHECK(labels_for(box_with_iou(kRef, 0.5), {gt(1, 1, 1, kRef)})[0] == AnchorLabel::Undefined);
  }
  SUBCASE("a touch of an unsafe box at 0.3 blocks a negative") {
    CHECK(labels_for(box_with_iou(kRef, 0.3), {unsafe(1, 1, 1, kRef, 0.5)})[0] ==
          AnchorLabel::Undefined);
    CHECK(labels_for(box_with_iou(kRef, 0.29), {unsafe(1, 1, 1, kRef, 0.5)})[0] ==
          AnchorLabel::Negative);
  }
  SUBCASE("trusted positives win over unsafe overlap") {
    CHECK(labels_for(kRef, {gt(1, 1, 1, kRef), unsafe(2, 1, 1, kRef, 0.5)})[0] ==
          AnchorLabel::Positive);
  }
}

TEST_CASE("ROI targets") {
  const std::vector<Category> categories{{1, "car"}, {2, "truck"}};
  const AssignConfig cfg;

  SUBCASE("a ground-truth match is a supervised foreground target") {
    const std::vector<Category> fashion{{1, "dress"}};
    const std::vector<Box> rois{box_with_iou(kRef, 0.9)};
    const std::vector<Instance> inst{gt(4, 1, 1, kRef)};
    const auto t = assign_rois(rois, inst, fashion, cfg);
    CHECK(t.rois[0].class_index == 0);
    CHECK(t.rois[0].mask);
    CHECK(t.rois[0].regression_valid);
    CHECK(t.rois[0].weights == std::vector<std::uint8_t>{1, 1});
    CHECK(t.rois[0].matched_instance == 4);
  }
  SUBCASE("an unsafe match masks its category and background only") {
    const std::vector<Box> rois{box_with_iou(kRef, 0.6)};
    const std::vector<Instance> inst{unsafe(4, 1, 1, kRef, 0.5)};
    const auto t = assign_rois(rois, inst, categories, cfg);
    const RoiTarget& r = t.rois[0];
    CHECK_FALSE(r.mask);
    CHECK(r.class_index == t.background_index());
    CHECK(r.weights == std::vector<std::uint8_t>{0, 1, 0});
    CHECK_FALSE(r.regression_valid);
    CHECK(r.matched_origin == Origin::UnsafePrediction);
  }
  SUBCASE("the highest-IoU instance wins over an unsafe one") {
    const Box roi = kRef;
    // Ground truth at IoU 0.7 and an unsafe prediction at IoU 0.6.
    const std::vector<Instance> inst{unsafe(1, 1, 2, box_with_iou(kRef, 0.6), 0.5),
                                     gt(2, 1, 1, box_with_iou(kRef, 0.7))};
    const std::vector<Box> rois{roi};
    const auto t = assign_rois(rois, inst, categories, cfg);
    // Exhaustive oracle: best = argmax IoU over the two candidates.
    const std::size_t oracle = iou(roi, inst[0].box) > iou(roi, inst[1].box) ? 0 : 1;
    CHECK(t.rois[0].matched_instance == inst[oracle].id);
    CHECK(t.rois[0].mask);
    CHECK(t.rois[0].class_index == 0);
  }
  SUBCASE("IoU ties go to the lowest instance id") {
    const std::vector<Instance> inst{gt(9, 1, 2, kRef), gt(3, 1, 1, kRef)};
    const std::vector<Box> rois{kRef};
    CHECK(assign_rois(rois, inst, categories, cfg).rois[0].matched_instance == 3);
  }
  SUBCASE("unmatched ROIs are supervised background") {
    const std::vector<Box> rois{{80, 80, 10, 10}};
    const std::vector<Instance> inst{gt(1, 1, 1, kRef)};
    const auto t = assign_rois(rois, inst, categories, cfg);
    CHECK(t.rois[0].class_index == 2);
    CHECK(t.rois[0].mask);
    CHECK(t.rois[0].weights == std::vector<std::uint8_t>{1, 1, 1});
    CHECK_FALSE(t.rois[0].matched_instance);
  }
}

TEST_CASE("random ROI targets respect the mask and weight invariants") {
  rng::Engine gen = rng::engine(41, "roi");
  const std::vector<Category> categories{{1, "a"}, {2, "b"}, {3, "c"}};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Instance> inst;
    for (int k = 0; k < 5; ++k) {
      const Box b = random_box(gen);
      const Id cat = 1 + static_cast<Id>(rng::uniform(gen) * 3);
      const double u = rng::uniform(gen);
      inst.push_back(u < 0.4 ? gt(k, 1, cat, b)
                     : u < 0.6 ? safe(k, 1, cat, b, 0.95)
                               : unsafe(k, 1, cat, b, 0.5));
    }
    std::vector<Box> rois;
    for (int k = 0; k < 20; ++k) {
      const Box& base = inst[static_cast<std::size_t>(k % 5)].box;
      rois.push_back(k % 2 ? random_box(gen) : Box{base.x + 2, base.y + 1, base.w, base.h});
    }
    const auto t = assign_rois(rois, inst, categories, {});
    for (const RoiTarget& r : t.rois) {
      const auto zeros = std::count(r.weights.begin(), r.weights.end(), 0);
      if (!r.mask) {
        CHECK(zeros == 2);
        CHECK(r.weights[t.background_index()] == 0);
        CHECK(r.matched_origin == Origin::UnsafePrediction);
      } else {
        CHECK(zeros == 0);
      }
      if (r.regression_valid) CHECK(r.matched_origin != Origin::UnsafePrediction);
    }
  }
}

TEST_CASE("positive quota rounds up") {
  CHECK(positive_quota(124, 0.25) == 31);
  CHECK(positive_quota(256, 0.5) == 128);
  CHECK(positive_quota(10, 0.3) == 3);
  CHECK(positive_quota(10, 0.31) == 4);
}

TEST_CASE("RPN sampling: 200 positives and 2000 negatives give 128 + 128") {
  const auto labels = make_labels(200, 2000, 50);
  const Sample s = sample_anchors(labels, {}, 7);
  CHECK(s.positives.size() == 128);
  CHECK(s.negatives.size() == 128);
  for (std::size_t i : s.positives) CHECK(labels[i] == AnchorLabel::Positive);
  for (std::size_t i : s.negatives) CHECK(labels[i] == AnchorLabel::Negative);
  const auto all = s.all();
  CHECK(std::set<std::size_t>(all.begin(), all.end()).size() == 256);
}

TEST_CASE("RPN sampling tops up a short positive bucket with negatives") {
  const auto labels = make_labels(10, 2000, 0);
  const Sample s = sample_anchors(labels, {}, 7);
  CHECK(s.positives.size() == 10);
  CHECK(s.negatives.size() == 246);
  const auto few = make_labels(300, 20, 0);
  const Sample t = sample_anchors(few, {}, 7);
  CHECK(t.negatives.size() == 20);
  CHECK(t.positives.size() == 236);
}

TEST_CASE("undefined anchors are never sampled") {
  rng::Engine gen = rng::engine(43, "labels");
  std::vector<AnchorLabel> labels;
  for (int i = 0; i < 600; ++i) {
    const double u = rng::uniform(gen);
    labels.push_back(u < 0.1 ? AnchorLabel::Positive
                     : u < 0.5 ? AnchorLabel::Negative
                               : AnchorLabel::Undefined);
  }
  for (std::uint64_t seed = 0; seed < 1000; ++seed)
    for (std::size_t i : sample_anchors(labels, {}, seed).all())
      REQUIRE(labels[i] != AnchorLabel::Undefined);
}

TEST_CASE("ROI sampling") {
  SUBCASE("ample supply gives 31 positives of 124") {
    const auto t = make_targets(100, 300, 50);
    const Sample s = sample_rois(t, {}, 1);
    CHECK(s.positives.size() == 31);
    CHECK(s.negatives.size() == 93);
  }
  SUBCASE("10 positives are topped up with 114 from the pool") {
    const auto t = make_targets(10, 300, 50);
    const Sample s = sample_rois(t, {}, 1);
    CHECK(s.positives.size() == 10);
    CHECK(s.negatives.size() == 114);
  }
  SUBCASE("a starved pool is topped up with positives") {
    const auto t = make_targets(200, 10, 5);
    const Sample s = sample_rois(t, {}, 1);
    CHECK(s.negatives.size() == 15);
    CHECK(s.positives.size() == 109);
  }
  SUBCASE("too few ROIs overall takes everything") {
    const auto t = make_targets(3, 4, 2);
    CHECK(sample_rois(t, {}, 1).all().size() == 9);
  }
  SUBCASE("excluded unsafe ROIs never enter the batch") {
    AssignConfig cfg;
    cfg.unsafe_sampling = UnsafeSampling::Excluded;
    const auto t = make_targets(10, 20, 200);
    const Sample s = sample_rois(t, cfg, 1);
    CHECK(s.negatives.size() == 20);
    for (std::size_t i : s.all()) CHECK(t.rois[i].mask);
  }
  SUBCASE("pooled unsafe ROIs are drawn alongside background") {
    const auto t = make_targets(0, 0, 200);
    CHECK(sample_rois(t, {}, 1).negatives.size() == 124);
  }
  SUBCASE("nothing eligible is an error") {
    AssignConfig cfg;
    cfg.unsafe_sampling = UnsafeSampling::Excluded;
    CHECK_THROWS_AS(sample_rois(make_targets(0, 0, 3), cfg, 1), Error);
    CHECK_THROWS_AS(sample_rois(make_targets(0, 0, 0), {}, 1), Error);
  }
  SUBCASE("no unsafe ROIs behaves like plain positive/background sampling") {
    const auto t = make_targets(40, 200, 0);
    AssignConfig excluded;
    excluded.unsafe_sampling = UnsafeSampling::Excluded;
    const Sample pooled = sample_rois(t, {}, 5);
    const Sample plain = sample_rois(t, excluded, 5);
    CHECK(pooled.positives == plain.positives);
    CHECK(pooled.negatives == plain.negatives);
  }
}

TEST_CASE("sampling is deterministic per seed and varies across seeds") {
  const auto t = make_targets(100, 300, 50);
  const Sample a = sample_rois(t, {}, 99);
  const Sample b = sample_rois(t, {}, 99);
  const Sample c = sample_rois(t, {}, 100);
  CHECK(a.positives == b.positives);
  CHECK(a.negatives == b.negatives);
  CHECK((a.positives != c.positives || a.negatives != c.negatives));
}

TEST_CASE("ROI draws are close to uniform over the pool") {
  const auto t = make_targets(0, 40, 40);
  AssignConfig cfg;
  cfg.roi_batch = 8;
  std::vector<int> hits(t.rois.size(), 0);
  const int trials = 20000;
  for (int s = 0; s < trials; ++s)
    for (std::size_t i : sample_rois(t, cfg, static_cast<std::uint64_t>(s)).all()) ++hits[i];
  // Each ROI is drawn with probability 8/80; binomial sd ~ 42.
  for (int h : hits) CHECK(std::abs(h - trials / 10) < 250);
}

TEST_CASE("config validation") {
  AssignConfig cfg;
  CHECK_NOTHROW(cfg.check());
  cfg.rpn_neg_iou = 0.8;
  CHECK_THROWS_AS(cfg.check(), Error);
  cfg = {};
  cfg.roi_pos_fraction = 1.0;
  CHECK_THROWS_AS(cfg.check(), Error);
  cfg = {};
  cfg.roi_batch = 0;
  CHECK_THROWS_AS(cfg.check(), Error);
  CHECK(unsafe_sampling_from_string("excluded") == UnsafeSampling::Excluded);
  CHECK_THROWS_AS(unsafe_sampling_from_string("dropped"), Error);
}

TEST_CASE("grid anchors are centred on the grid and clipped") {
  const std::vector<double> sizes{16.0};
  const std::vector<double> ratios{1.0};
  const auto anchors = grid_anchors(32, 32, 16, sizes, ratios);
  REQUIRE(anchors.size() == 4);
  CHECK(anchors[0] == Box{0, 0, 16, 16});
  CHECK(anchors[3] == Box{16, 16, 16, 16});
}

TEST_CASE("assignment dump matches the golden file") {
  // One 64x64 image: a ground-truth car, a safe truck and an unsafe car.
  const std::vector<Category> categories{{1, "car"}, {2, "truck"}};
  const std::vector<Instance> inst{gt(1, 1, 1, {0, 0, 32, 32}), safe(2, 1, 2, {32, 32, 32, 32}, 0.95),
                                   unsafe(3, 1, 1, {32, 0, 32, 32}, 0.5)};
  const std::vector<double> sizes{32.0};
  const std::vector<double> ratios{1.0};
  const auto anchors = grid_anchors(64, 64, 32, sizes, ratios);
  AssignConfig cfg;
  cfg.rpn_batch = 6;
  cfg.roi_batch = 4;
  const auto labels = assign_anchors(anchors, inst, cfg);
  const Sample anchor_sample = sample_anchors(labels, cfg, rng::derive(3, "rpn", 1));
  const std::vector<Box> rois{{0, 0, 32, 32}, {2, 2, 32, 32}, {32, 32, 30, 30}, {34, 2, 30, 30},
                              {40, 40, 8, 8}, {0, 40, 20, 20}};
  const RoiTargets targets = assign_rois(rois, inst, categories, cfg);
  const Sample roi_sample = sample_rois(targets, cfg, rng::derive(3, "roi", 1));
  const auto dump = assignment_dump(1, anchors, labels, anchor_sample, rois, targets, roi_sample);

  // Hand-checked facts, independent of the golden file.
  // The four anchors are the car, the unsafe car, an empty cell, the truck.
  REQUIRE(anchors.size() == 4);
  CHECK(labels == std::vector<AnchorLabel>{AnchorLabel::Positive, AnchorLabel::Undefined,
                                           AnchorLabel::Negative, AnchorLabel::Positive});
  CHECK(anchor_sample.all() == std::vector<std::size_t>{0, 2, 3});
  CHECK(targets.rois[3].unsafe());
  CHECK(targets.rois[2].class_index == 1);
  CHECK(targets.rois[4].class_index == 2);
  CHECK(roi_sample.positives.size() == 1);

  std::ifstream in(OMNIA_GOLDEN_DIR "/assignment_small.json");
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(nlohmann::json::parse(ss.str()) == dump);
}

}  // TEST_SUITE
