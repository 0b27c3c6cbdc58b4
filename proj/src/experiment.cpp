#include <algorithm>
#include <cmath>

#include "omnia/error.hpp"
#include "omnia/rng.hpp"
#include "omnia/simulator.hpp"
#include "omnia/softsig.hpp"

namespace omnia {

namespace {

double percent(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

std::set<std::string> canonical_set(const std::vector<std::string>& names) {
  std::set<std::string> out;
  for (const std::string& n : names) out.insert(canonical_name(n));
  return out;
}

Dataset concat(Dataset first, const Dataset& second) {
  first.images.insert(first.images.end(), second.images.begin(), second.images.end());
  first.instances.insert(first.instances.end(), second.instances.begin(), second.instances.end());
  return first;
}

// Rewrites merged-taxonomy category ids and merged image ids into the
// hidden dataset's ids (images correspond by position).
struct HiddenIds {
  std::map<Id, Id> image;
  std::map<Id, Id> category;

  HiddenIds(const Dataset& merged, const Dataset& hidden) {
    if (merged.images.size() != hidden.images.size())
      throw Error(ErrorKind::Precondition, "merged and hidden image lists differ in size");
    for (std::size_t i = 0; i < hidden.images.size(); ++i)
      image[merged.images[i].id] = hidden.images[i].id;
    for (const Category& c : merged.categories) {
      const Category* h = hidden.find_category(c.name);
      if (!h) throw Error(ErrorKind::Referential, "category '" + c.name + "' not in hidden truth");
      category[c.id] = h->id;
    }
  }

  DetectionSet apply(DetectionSet dets) const {
    for (Detection& d : dets) {
      d.image_id = image.at(d.image_id);
      d.category_id = category.at(d.category_id);
    }
    return dets;
  }
};

bool scored_by(Variant v, Origin origin) {
  switch (origin) {
    case Origin::GroundTruth: return true;
    case Origin::SafePrediction: return v != Variant::Naive;
    case Origin::UnsafePrediction: return v == Variant::SoftSig;
  }
  return false;
}

struct ProbeContext {
  const ExperimentConfig& cfg;
  const Dataset& hidden;
  std::uint64_t probe_seed;
  std::uint64_t sampling_seed;
};

// Jittered copies of every hidden object plus uniformly placed boxes,
// with the hidden class column of each (background = num_categories).
struct ProbeRois {
  std::vector<Box> boxes;
  std::vector<std::size_t> truth_column;
};

ProbeRois probe_rois(const ProbeContext& ctx, const Image& image,
                     const std::vector<const Instance*>& truth,
                     const std::map<Id, std::size_t>& hidden_to_column,
                     std::size_t background) {
  const ProbeConfig& p = ctx.cfg.probe;
  rng::Engine gen = rng::engine(ctx.probe_seed, "rois", static_cast<std::uint64_t>(image.id));
  ProbeRois out;
  for (const Instance* inst : truth) {
    for (int k = 0; k < p.rois_per_object; ++k) {
      const double n1 = rng::normal(gen), n2 = rng::normal(gen);
      const double n3 = rng::normal(gen), n4 = rng::normal(gen);
      Box b{inst->box.x + p.roi_jitter * inst->box.w * n1,
            inst->box.y + p.roi_jitter * inst->box.h * n2,
            inst->box.w * std::exp(p.roi_jitter * n3), inst->box.h * std::exp(p.roi_jitter * n4)};
      b = clamp_to_image(b, image.width, image.height);
      if (b.valid()) out.boxes.push_back(b);
    }
  }
  for (int k = 0; k < p.background_rois; ++k) {
    const double w = (0.08 + 0.3 * rng::uniform(gen)) * image.width;
    const double h = (0.08 + 0.3 * rng::uniform(gen)) * image.height;
    out.boxes.push_back({rng::uniform(gen) * (image.width - w),
                         rng::uniform(gen) * (image.height - h), w, h});
  }
  for (const Box& b : out.boxes) {
    std::size_t column = background;
    double best = 0.0;
    for (const Instance* inst : truth) {
      const double overlap = iou(b, inst->box);
      if (overlap >= 0.5 && overlap > best) {
        best = overlap;
        column = hidden_to_column.at(inst->category_id);
      }
    }
    out.truth_column.push_back(column);
  }
  return out;
}

void probe_assignment(const ProbeContext& ctx, const Dataset& targets, Variant v,
                      AssignmentStats& stats, ProbeLoss& loss) {
  AssignConfig acfg = ctx.cfg.assignment;
  acfg.unsafe_sampling =
      v == Variant::DiscardUnsafe ? UnsafeSampling::Excluded : UnsafeSampling::Pooled;
  const double lambda = v == Variant::SoftSig ? 1.0 : 0.0;

  const HiddenIds ids(targets, ctx.hidden);
  std::map<Id, std::size_t> hidden_to_column;
  for (std::size_t c = 0; c < targets.categories.size(); ++c)
    hidden_to_column[ids.category.at(targets.categories[c].id)] = c;
  const std::size_t background = targets.categories.size();

  const auto target_by_image = group_by_image(targets.instances);
  const auto hidden_by_image = group_by_image(ctx.hidden.instances);
  std::map<std::pair<int, int>, std::vector<Box>> anchor_cache;

  double categorical = 0.0;
  double binary = 0.0;
  for (const Image& image : targets.images) {
    std::vector<Instance> instances;
    if (auto it = target_by_image.find(image.id); it != target_by_image.end())
      for (const Instance* inst : it->second) instances.push_back(*inst);

    auto& anchors = anchor_cache[{image.width, image.height}];
    if (anchors.empty())
      anchors = grid_anchors(image.width, image.height, ctx.cfg.probe.anchor_stride,
                             ctx.cfg.probe.anchor_sizes, ctx.cfg.probe.anchor_ratios);
    const auto labels = assign_anchors(anchors, instances, acfg);
    for (AnchorLabel l : labels) {
      if (l == AnchorLabel::Positive) ++stats.anchors_positive;
      else if (l == AnchorLabel::Negative) ++stats.anchors_negative;
      else ++stats.anchors_undefined;
    }
    const auto image_key = static_cast<std::uint64_t>(image.id);
    const Sample rpn = sample_anchors(labels, acfg, rng::derive(ctx.sampling_seed, "rpn", image_key));
    for (std::size_t i : rpn.all()) {
      ++stats.rpn_sampled;
      if (labels[i] == AnchorLabel::Undefined) ++stats.rpn_sampled_undefined;
    }

    const Id hidden_image = ids.image.at(image.id);
    static const std::vector<const Instance*> kNone;
    auto hit = hidden_by_image.find(hidden_image);
    const auto& truth = hit == hidden_by_image.end() ? kNone : hit->second;
    const ProbeRois probe = probe_rois(ctx, image, truth, hidden_to_column, background);
    if (probe.boxes.empty()) continue;

    const RoiTargets roi_targets = assign_rois(probe.boxes, instances, targets.categories, acfg);
    for (std::size_t i = 0; i < roi_targets.rois.size(); ++i) {
      if (roi_targets.positive(i)) ++stats.rois_positive;
      else if (roi_targets.rois[i].unsafe()) ++stats.rois_unsafe;
      else ++stats.rois_background;
    }
    const bool eligible = std::any_of(
        roi_targets.rois.begin(), roi_targets.rois.end(), [&](const RoiTarget& t) {
          return !t.unsafe() || acfg.unsafe_sampling == UnsafeSampling::Pooled;
        });
    if (!eligible) continue;
    const Sample roi = sample_rois(roi_targets, acfg, rng::derive(ctx.sampling_seed, "roi", image_key));
    stats.roi_sampled_positive += roi.positives.size();
    stats.roi_sampled_negative += roi.negatives.size();
    for (std::size_t i : roi.negatives)
      if (roi_targets.rois[i].unsafe()) ++stats.roi_sampled_unsafe;

    const std::vector<std::size_t> rows = roi.all();
    Matrix logits = Matrix::Zero(static_cast<Eigen::Index>(rows.size()),
                                 static_cast<Eigen::Index>(background + 1));
    for (std::size_t r = 0; r < rows.size(); ++r)
      logits(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(probe.truth_column[rows[r]])) =
          ctx.cfg.probe.probe_logit;
    const LossBatch batch = make_batch(roi_targets, rows, logits, lambda);
    categorical += categorical_loss(batch);
    binary += binary_loss(batch);
    ++loss.batches;
  }
  if (loss.batches > 0) {
    loss.categorical = categorical / static_cast<double>(loss.batches);
    loss.binary = binary / static_cast<double>(loss.batches);
    loss.total = loss.categorical + lambda * loss.binary;
  }
}

nlohmann::json quality_json(const EnrichmentQuality& q) {
  return {{"added", q.added},
          {"matched", q.matched},
          {"missing", q.missing},
          {"precision", q.precision},
          {"recall", q.recall}};
}

}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Naive: return "naive";
    case Variant::HardDistillation: return "hard";
    case Variant::DiscardUnsafe: return "discard";
    case Variant::SoftSig: return "softsig";
  }
  return "naive";
}

Variant variant_from_string(std::string_view text) {
  if (text == "naive") return Variant::Naive;
  if (text == "hard") return Variant::HardDistillation;
  if (text == "discard") return Variant::DiscardUnsafe;
  if (text == "softsig") return Variant::SoftSig;
  throw Error(ErrorKind::Config,
              "unknown variant '" + std::string(text) + "' (expected naive|hard|discard|softsig)");
}

ExperimentConfig default_experiment() {
  ExperimentConfig cfg;
  cfg.seed = 3;
  cfg.scene.n_images = 200;
  cfg.scene.taxonomy = {"bag", "dress", "footwear", "car", "person", "truck"};
  cfg.categories_a = {"bag", "dress", "footwear"};
  cfg.categories_b = {"car", "person", "truck"};
  cfg.detector_a.domain_tag = cfg.domain_a;
  cfg.detector_b.domain_tag = cfg.domain_b;
  cfg.rounds = 2;
  cfg.sweep_high = {0.5, 0.6, 0.7, 0.8, 0.9, 0.95};
  return cfg;
}

const ArmReport& ExperimentReport::arm(Variant v) const {
  for (const ArmReport& a : arms)
    if (a.variant == v) return a;
  throw Error(ErrorKind::Precondition, "variant '" + std::string(to_string(v)) + "' was not run");
}

Dataset variant_targets(const Dataset& enriched, Variant v) {
  Dataset out = enriched;
  std::erase_if(out.instances, [v](const Instance& inst) {
    switch (inst.provenance.origin) {
      case Origin::GroundTruth: return false;
      case Origin::SafePrediction: return v == Variant::Naive;
      case Origin::UnsafePrediction:
        return v == Variant::Naive || v == Variant::HardDistillation;
    }
    return false;
  });
  return out;
}

DetectionSet targets_as_detections(const Dataset& targets, Variant v) {
  DetectionSet out;
  for (const Instance& inst : targets.instances) {
    if (!scored_by(v, inst.provenance.origin)) continue;
    const double score =
        inst.provenance.origin == Origin::UnsafePrediction ? *inst.provenance.score : 1.0;
    out.push_back({inst.image_id, inst.category_id, inst.box, score});
  }
  return out;
}

EnrichmentQuality enrichment_quality(const Dataset& targets, Variant v, const Dataset& hidden,
                                     const std::set<std::string>& supervised_a,
                                     const std::set<std::string>& supervised_b,
                                     const std::vector<SourceSpan>& spans) {
  const HiddenIds ids(targets, hidden);
  std::map<Id, Side> side_of;  // hidden image id -> side
  for (const SourceSpan& s : spans)
    for (std::size_t k = 0; k < s.image_count; ++k)
      side_of[ids.image.at(s.first_image_id + static_cast<Id>(k))] = s.source;

  // Hidden objects the human labels of their side do not cover.
  Dataset missing;
  missing.images = hidden.images;
  missing.categories = hidden.categories;
  for (const Instance& inst : hidden.instances) {
    const std::string& name = hidden.find_category(inst.category_id)->name;
    const auto& supervised = side_of.at(inst.image_id) == Side::A ? supervised_a : supervised_b;
    if (!supervised.count(name)) missing.instances.push_back(inst);
  }

  DetectionSet added;
  for (const Instance& inst : targets.instances) {
    if (inst.provenance.origin == Origin::GroundTruth || !scored_by(v, inst.provenance.origin))
      continue;
    added.push_back({inst.image_id, inst.category_id, inst.box, *inst.provenance.score});
  }
  added = ids.apply(std::move(added));

  EnrichmentQuality q;
  q.added = added.size();
  q.missing = missing.instances.size();
  for (const Category& c : hidden.categories) {
    const MatchResult m = match_category(added, missing, c.id, 0.5);
    q.matched += static_cast<std::size_t>(
        std::count(m.true_positive.begin(), m.true_positive.end(), true));
  }
  q.precision = percent(q.matched, q.added);
  q.recall = percent(q.matched, q.missing);
  return q;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  const std::set<std::string> names_a = canonical_set(cfg.categories_a);
  const std::set<std::string> names_b = canonical_set(cfg.categories_b);
  const std::set<std::string> scene_names = canonical_set(cfg.scene.taxonomy);
  for (const auto* names : {&names_a, &names_b})
    for (const std::string& n : *names)
      if (!scene_names.count(n))
        throw Error(ErrorKind::Config, "category '" + n + "' is not part of the scene taxonomy");
  std::set<std::string> overlap;
  std::set_intersection(names_a.begin(), names_a.end(), names_b.begin(), names_b.end(),
                        std::inserter(overlap, overlap.begin()));
  if (!overlap.empty() && !cfg.shared_policy)
    throw Error(ErrorKind::Config, "category subsets share '" + *overlap.begin() +
                                       "' but no shared-category policy is configured");
  if (cfg.rounds < 1) throw Error(ErrorKind::Config, "rounds must be at least 1");
  cfg.selection.check();
  cfg.assignment.check();

  ExperimentReport report;
  report.seed = cfg.seed;

  SceneConfig scene_a = cfg.scene;
  scene_a.n_images = cfg.scene.n_images / 2;
  scene_a.domain_tag = cfg.domain_a;
  scene_a.seed = rng::derive(cfg.seed, "scene.a");
  scene_a.first_image_id = 1;
  SceneConfig scene_b = cfg.scene;
  scene_b.n_images = cfg.scene.n_images - scene_a.n_images;
  scene_b.domain_tag = cfg.domain_b;
  scene_b.seed = rng::derive(cfg.seed, "scene.b");
  scene_b.first_image_id = static_cast<Id>(scene_a.n_images) + 1;

  const Dataset hidden_a = generate_scenes(scene_a);
  const Dataset hidden_b = generate_scenes(scene_b);
  report.hidden = concat(hidden_a, hidden_b);

  std::set<std::string> not_a = scene_names;
  std::set<std::string> not_b = scene_names;
  for (const std::string& n : names_a) not_a.erase(n);
  for (const std::string& n : names_b) not_b.erase(n);
  report.dataset_a = strip_categories(hidden_a, not_a);
  report.dataset_b = strip_categories(hidden_b, not_b);

  DetectorModel detector_a = cfg.detector_a;
  detector_a.seed = rng::derive(cfg.seed, "detector.a");
  DetectorModel detector_b = cfg.detector_b;
  detector_b.seed = rng::derive(cfg.seed, "detector.b");

  // Stripping keeps the surviving category ids, so hidden ids are already
  // each side's own ids.
  const std::vector<std::string> list_a(names_a.begin(), names_a.end());
  const std::vector<std::string> list_b(names_b.begin(), names_b.end());
  report.det_on_b = simulate_detector(hidden_b, detector_a, list_a);
  report.det_on_a = simulate_detector(hidden_a, detector_b, list_b);

  const MergedTaxonomy taxonomy =
      build_taxonomy(report.dataset_a.categories, report.dataset_b.categories);
  check_shared_policy(taxonomy, cfg.shared_policy.value_or(SharedPolicy::KeepGroundTruth));

  const ProbeContext ctx{cfg, report.hidden, rng::derive(cfg.seed, "probe"),
                         rng::derive(cfg.seed, "sampling")};

  auto enrich_both = [&](const SelectionConfig& sel, const DetectionSet& on_a,
                         const DetectionSet& on_b) {
    RoundResult r;
    r.a = enrich(report.dataset_a, Side::A, on_a, taxonomy, sel);
    r.b = enrich(report.dataset_b, Side::B, on_b, taxonomy, sel);
    r.merged = merge(r.a, r.b);
    return r;
  };
  auto arm_map = [&](const MergedDataset& merged, Variant v) {
    const Dataset targets = variant_targets(merged.dataset, v);
    const HiddenIds ids(targets, report.hidden);
    return evaluate(ids.apply(targets_as_detections(targets, v)), report.hidden);
  };

  const RoundResult base = enrich_both(cfg.selection, report.det_on_a, report.det_on_b);
  report.selection = {{"a", selection_stats(base.a.selection)},
                      {"b", selection_stats(base.b.selection)}};

  for (Variant v : cfg.variants) {
    ArmReport arm;
    arm.variant = v;
    arm.merged = base.merged;
    arm.merged.dataset = variant_targets(base.merged.dataset, v);
    arm.quality = enrichment_quality(arm.merged.dataset, v, report.hidden, names_a, names_b,
                                     base.merged.sources);
    arm.eval = arm_map(base.merged, v);
    probe_assignment(ctx, arm.merged.dataset, v, arm.assignment, arm.loss);
    report.arms.push_back(std::move(arm));
  }

  for (double high : cfg.sweep_high) {
    SelectionConfig sel = cfg.selection;
    sel.threshold_high = high;
    sel.check();
    const RoundResult r = enrich_both(sel, report.det_on_a, report.det_on_b);
    SweepRow row;
    row.threshold_high = high;
    for (Variant v : cfg.variants) row.map[v] = arm_map(r.merged, v).map;
    report.sweep.push_back(std::move(row));
  }

  if (cfg.rounds > 1) {
    // Later rounds stand in for the merged model's predictions: it has seen
    // both domains, so the cross-domain loss shrinks by the fraction of
    // missing objects the previous round recovered. The detector seeds are
    // kept across rounds so that only the model quality changes.
    DetectionSource source = [&](int round, const std::vector<RoundResult>& previous) {
      if (round == 1) return RoundDetections{report.det_on_a, report.det_on_b};
      const RoundResult& last = previous.back();
      const double recovered =
          enrichment_quality(last.merged.dataset, Variant::SoftSig, report.hidden, names_a,
                             names_b, last.merged.sources)
              .recall /
          100.0;
      DetectorModel next_a = detector_a;
      DetectorModel next_b = detector_b;
      for (DetectorModel* m : {&next_a, &next_b})
        m->cross_domain_degradation += (1.0 - m->cross_domain_degradation) * recovered;
      return RoundDetections{simulate_detector(hidden_a, next_b, list_b),
                             simulate_detector(hidden_b, next_a, list_a)};
    };
    const auto rounds = iterate(report.dataset_a, report.dataset_b, source, cfg.rounds,
                                cfg.selection);
    for (const RoundResult& r : rounds) {
      RoundReport rr;
      rr.round = r.round;
      rr.quality = enrichment_quality(r.merged.dataset, Variant::SoftSig, report.hidden,
                                      names_a, names_b, r.merged.sources);
      rr.map = arm_map(r.merged, Variant::SoftSig).map;
      rr.selection = round_stats(r);
      report.rounds.push_back(std::move(rr));
    }
  }
  return report;
}

nlohmann::json to_json(const ExperimentReport& report, const ExperimentConfig& cfg) {
  using nlohmann::json;
  json arms = json::array();
  for (const ArmReport& a : report.arms) {
    const AssignmentStats& s = a.assignment;
    arms.push_back(
        {{"variant", to_string(a.variant)},
         {"enrichment", quality_json(a.quality)},
         {"eval", to_json(a.eval)},
         {"assignment",
          {{"anchors", {{"positive", s.anchors_positive},
                        {"negative", s.anchors_negative},
                        {"undefined", s.anchors_undefined}}},
           {"rpn_sampled", s.rpn_sampled},
           {"rpn_sampled_undefined", s.rpn_sampled_undefined},
           {"rois", {{"positive", s.rois_positive},
                     {"background", s.rois_background},
                     {"unsafe", s.rois_unsafe}}},
           {"roi_sampled", {{"positive", s.roi_sampled_positive},
                            {"negative", s.roi_sampled_negative},
                            {"unsafe", s.roi_sampled_unsafe}}}}},
         {"probe_loss", {{"categorical", a.loss.categorical},
                         {"binary", a.loss.binary},
                         {"total", a.loss.total},
                         {"batches", a.loss.batches}}}});
  }
  json sweep = json::array();
  for (const SweepRow& row : report.sweep) {
    json r = {{"threshold_high", row.threshold_high}};
    for (const auto& [v, map] : row.map) r[std::string(to_string(v))] = map;
    sweep.push_back(std::move(r));
  }
  json rounds = json::array();
  for (const RoundReport& r : report.rounds)
    rounds.push_back({{"round", r.round},
                      {"enrichment", quality_json(r.quality)},
                      {"mAP", r.map},
                      {"selection", r.selection}});

  json variants = json::array();
  for (Variant v : cfg.variants) variants.push_back(to_string(v));
  return {{"seed", report.seed},
          {"config",
           {{"n_images", cfg.scene.n_images},
            {"categories_a", cfg.categories_a},
            {"categories_b", cfg.categories_b},
            {"threshold_low", cfg.selection.threshold_low},
            {"threshold_high", cfg.selection.threshold_high},
            {"dedup_iou", cfg.selection.dedup_iou},
            {"rounds", cfg.rounds},
            {"variants", std::move(variants)}}},
          {"hidden", {{"images", report.hidden.images.size()},
                      {"instances", report.hidden.instances.size()}}},
          {"selection", report.selection},
          {"arms", std::move(arms)},
          {"sweep", std::move(sweep)},
          {"rounds", std::move(rounds)}};
}

}  // namespace omnia
