#include <doctest.h>

#include <cmath>

#include "omnia/error.hpp"
#include "omnia/metrics.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace omnia;
using namespace testing;

namespace {

std::vector<Instance> truth_of(const Dataset& d, Id category) {
  std::vector<Instance> out;
  for (const Instance& i : d.instances)
    if (i.category_id == category && i.provenance.origin == Origin::GroundTruth) out.push_back(i);
  return out;
}

// A random single-category instance: up to `max_gt` boxes over two images
// and up to `max_dets` detections, many of them near a ground-truth box.
std::pair<Dataset, DetectionSet> random_instance(rng::Engine& gen, int max_gt, int max_dets) {
  Dataset d = make_dataset({"car"}, 2);
  const int n_gt = 1 + static_cast<int>(rng::uniform(gen) * max_gt);
  for (int k = 0; k < n_gt; ++k)
    d.instances.push_back(gt(k + 1, 1 + static_cast<Id>(rng::uniform(gen) * 2), 1, random_box(gen)));
  DetectionSet dets;
  const int n_det = static_cast<int>(rng::uniform(gen) * (max_dets + 1));
  for (int k = 0; k < n_det; ++k) {
    // Coarse scores so that ties occur.
    const double score = 0.1 * (1 + static_cast<int>(rng::uniform(gen) * 10));
    if (rng::uniform(gen) < 0.7) {
      const Instance& t = d.instances[static_cast<std::size_t>(rng::uniform(gen) * n_gt)];
      const double s = 0.15 * rng::normal(gen);
      dets.push_back({t.image_id, 1, {t.box.x + s * t.box.w, t.box.y, t.box.w, t.box.h}, score});
    } else {
      dets.push_back({1 + static_cast<Id>(rng::uniform(gen) * 2), 1, random_box(gen), score});
    }
  }
  return {d, dets};
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("perfect detections give AP 100 and oLRP 0") {
  Dataset d = make_dataset({"car", "dress"}, 2);
  d.instances = {gt(1, 1, 1, {1, 1, 10, 10}), gt(2, 2, 1, {20, 20, 5, 5}),
                 gt(3, 1, 2, {40, 40, 10, 20})};
  DetectionSet dets;
  for (const Instance& i : d.instances) dets.push_back({i.image_id, i.category_id, i.box, 1.0});
  CHECK(average_precision(dets, d, 1) == 100.0);
  CHECK(mean_ap(dets, d) == 100.0);
  CHECK(olrp(dets, d, 1)->olrp == 0.0);
  CHECK(molrp(dets, d) == 0.0);
}

TEST_CASE("no detections give AP 0 and oLRP 100") {
  Dataset d = make_dataset({"car"});
  d.instances = {gt(1, 1, 1, {1, 1, 10, 10})};
  CHECK(average_precision({}, d, 1) == 0.0);
  const auto r = olrp({}, d, 1);
  REQUIRE(r);
  CHECK(r->olrp == 100.0);
  CHECK(r->fn == 1);
}

TEST_CASE("hand-enumerated PR curve: TP, FP, TP over two ground truths") {
  Dataset d = make_dataset({"car"});
  d.instances = {gt(1, 1, 1, {0, 0, 10, 10}), gt(2, 1, 1, {50, 50, 10, 10})};
  const DetectionSet dets{{1, 1, {0, 0, 10, 10}, 0.9},
                          {1, 1, {80, 0, 10, 10}, 0.8},
                          {1, 1, {50, 50, 10, 10}, 0.7}};
  // PR points: (0.5, 1), (0.5, 1/2), (1, 2/3); envelope 1 and 2/3.
  const double expected = 100.0 * (0.5 * 1.0 + 0.5 * (2.0 / 3.0));
  CHECK(average_precision(dets, d, 1) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(expected == doctest::Approx(83.33).epsilon(1e-4));
  CHECK(average_precision(dets, d, 1) == oracle::exhaustive_ap(dets, truth_of(d, 1)));
}

TEST_CASE("one ground truth matched at IoU 0.75 gives LRP 50") {
  Dataset d = make_dataset({"car"});
  const Box t{0, 0, 40, 20};
  d.instances = {gt(1, 1, 1, t)};
  const DetectionSet dets{{1, 1, box_with_iou(t, 0.75), 0.8}};
  const auto r = olrp(dets, d, 1, 0.5);
  REQUIRE(r);
  CHECK(std::abs(r->olrp - 50.0) < 1e-9);
  CHECK(r->tp == 1);
  CHECK(r->fp == 0);
  CHECK(r->fn == 0);
}

TEST_CASE("fast AP equals the exhaustive PR curve exactly") {
  rng::Engine gen = rng::engine(61, "ap");
  for (int trial = 0; trial < 1000; ++trial) {
    const auto [d, dets] = random_instance(gen, 4, 6);
    REQUIRE(average_precision(dets, d, 1) == oracle::exhaustive_ap(dets, truth_of(d, 1)));
  }
}

TEST_CASE("fast oLRP matches re-evaluating every threshold") {
  rng::Engine gen = rng::engine(62, "lrp");
  for (int trial = 0; trial < 1000; ++trial) {
    const auto [d, dets] = random_instance(gen, 4, 6);
    const auto r = olrp(dets, d, 1);
    REQUIRE(r);
    REQUIRE(r->olrp == doctest::Approx(oracle::exhaustive_olrp(dets, truth_of(d, 1))).epsilon(1e-12));
    CHECK(r->olrp >= 0.0);
    CHECK(r->olrp <= 100.0);
  }
}

TEST_CASE("AP ignores strictly monotone rescaling of scores") {
  rng::Engine gen = rng::engine(63, "monotone");
  for (int trial = 0; trial < 300; ++trial) {
    auto [d, dets] = random_instance(gen, 4, 8);
    const double before = average_precision(dets, d, 1);
    for (Detection& det : dets) det.score = std::pow(det.score, 3.0) * 0.5 + 0.01;
    CHECK(average_precision(dets, d, 1) == before);
  }
}

TEST_CASE("a lowest-scored false positive never raises AP") {
  rng::Engine gen = rng::engine(64, "lowfp");
  for (int trial = 0; trial < 300; ++trial) {
    auto [d, dets] = random_instance(gen, 4, 6);
    const double before = average_precision(dets, d, 1);
    const double lrp_before = olrp(dets, d, 1)->olrp;
    dets.push_back({1, 1, {90, 90, 5, 5}, 0.001});
    CHECK(average_precision(dets, d, 1) <= before);
    // The optimum can always ignore the extra detection.
    CHECK(olrp(dets, d, 1)->olrp == doctest::Approx(lrp_before));
  }
}

TEST_CASE("duplicates on one ground truth: one TP, the rest FP") {
  Dataset d = make_dataset({"car"});
  d.instances = {gt(1, 1, 1, {0, 0, 10, 10})};
  DetectionSet dets;
  for (int k = 0; k < 4; ++k) dets.push_back({1, 1, {0, 0, 10, 10}, 0.9 - 0.1 * k});
  const MatchResult m = match_category(dets, d, 1, 0.5);
  CHECK(std::count(m.true_positive.begin(), m.true_positive.end(), true) == 1);
  CHECK(m.true_positive[0]);
  CHECK(average_precision(dets, d, 1) == 100.0);
  const auto r = olrp(dets, d, 1);
  CHECK(r->fp == 0);
  CHECK(r->threshold == doctest::Approx(0.9));
}

TEST_CASE("equal scores keep insertion order") {
  Dataset d = make_dataset({"car"});
  d.instances = {gt(1, 1, 1, {0, 0, 10, 10})};
  const DetectionSet dets{{1, 1, {50, 50, 5, 5}, 0.5}, {1, 1, {0, 0, 10, 10}, 0.5}};
  CHECK(average_precision(dets, d, 1) == 50.0);
  const MatchResult m = match_category(dets, d, 1, 0.5);
  CHECK(m.order == std::vector<std::size_t>{0, 1});
}

TEST_CASE("only human labels count as evaluation truth") {
  Dataset d = make_dataset({"car"});
  d.instances = {gt(1, 1, 1, {0, 0, 10, 10}), safe(2, 1, 1, {50, 50, 10, 10}, 0.95)};
  const DetectionSet dets{{1, 1, {0, 0, 10, 10}, 0.9}};
  CHECK(average_precision(dets, d, 1) == 100.0);
}

TEST_CASE("means skip categories without ground truth") {
  Dataset d = make_dataset({"car", "dress", "tie"});
  d.instances = {gt(1, 1, 1, {0, 0, 10, 10}), gt(2, 1, 2, {50, 50, 10, 10})};
  const DetectionSet dets{{1, 1, {0, 0, 10, 10}, 0.9}, {1, 3, {20, 20, 5, 5}, 0.9}};
  const EvalReport r = evaluate(dets, d);
  CHECK(r.map == 50.0);
  CHECK(r.molrp == 50.0);
  CHECK(r.skipped == std::vector<std::string>{"tie"});
  CHECK(mean_ap({{1, 1, {0, 0, 10, 10}, 0.9}}, make_dataset({"car"})) == 0.0);
  const auto j = to_json(r);
  CHECK(j["categories"][2]["olrp"].is_null());
  CHECK(j["mAP"] == 50.0);
}

TEST_CASE("single category mean equals its AP") {
  rng::Engine gen = rng::engine(65, "single");
  const auto [d, dets] = random_instance(gen, 4, 6);
  CHECK(mean_ap(dets, d) == average_precision(dets, d, 1));
  CHECK(molrp(dets, d) == olrp(dets, d, 1)->olrp);
}

TEST_CASE("errors") {
  const Dataset d = make_dataset({"car"});
  CHECK_THROWS_AS(average_precision({}, d, 7), Error);
  CHECK_THROWS_AS(olrp({}, d, 1, 1.0), Error);
  CHECK_THROWS_AS(olrp({}, d, 1, 0.0), Error);
  CHECK_FALSE(olrp({}, d, 1).has_value());
  CHECK_THROWS_AS(evaluate({{1, 4, {1, 1, 1, 1}, 0.5}}, d), Error);
}

}  // TEST_SUITE
