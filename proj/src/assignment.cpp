#include "omnia/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "omnia/error.hpp"
#include "omnia/rng.hpp"

namespace omnia {

namespace {

bool in_unit(double v) { return v > 0.0 && v <= 1.0; }

// k indices drawn uniformly without replacement (partial Fisher-Yates),
// returned in ascending order.
std::vector<std::size_t> draw(std::vector<std::size_t> pool, std::size_t k,
                              rng::Engine& gen) {
  k = std::min(k, pool.size());
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t span = pool.size() - i;
    const auto j = i + static_cast<std::size_t>(rng::uniform(gen) * static_cast<double>(span));
    std::swap(pool[i], pool[std::min(j, pool.size() - 1)]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

Sample split_batch(const std::vector<std::size_t>& pos, const std::vector<std::size_t>& neg,
                   std::size_t batch, double pos_fraction, std::uint64_t seed) {
  std::size_t take_pos = std::min(pos.size(), positive_quota(batch, pos_fraction));
  const std::size_t take_neg = std::min(neg.size(), batch - take_pos);
  if (take_pos + take_neg < batch) take_pos = std::min(pos.size(), batch - take_neg);

  rng::Engine gen(seed);
  Sample s;
  s.positives = draw(pos, take_pos, gen);
  s.negatives = draw(neg, take_neg, gen);
  return s;
}

}  // namespace

UnsafeSampling unsafe_sampling_from_string(std::string_view text) {
  if (text == "pooled") return UnsafeSampling::Pooled;
  if (text == "excluded") return UnsafeSampling::Excluded;
  throw Error(ErrorKind::Config,
              "unsafe_sampling must be pooled|excluded, got '" + std::string(text) + "'");
}

std::string_view to_string(UnsafeSampling mode) {
  return mode == UnsafeSampling::Pooled ? "pooled" : "excluded";
}

std::string_view to_string(AnchorLabel label) {
  switch (label) {
    case AnchorLabel::Positive: return "positive";
    case AnchorLabel::Negative: return "negative";
    case AnchorLabel::Undefined: return "undefined";
  }
  return "undefined";
}

void AssignConfig::check() const {
  if (!(0.0 < rpn_neg_iou && rpn_neg_iou <= rpn_pos_iou && rpn_pos_iou <= 1.0))
    throw Error(ErrorKind::Config, "assignment: need 0 < rpn_neg_iou <= rpn_pos_iou <= 1");
  if (!in_unit(roi_pos_iou) || !in_unit(undefined_iou))
    throw Error(ErrorKind::Config, "assignment: roi_pos_iou and undefined_iou must lie in (0, 1]");
  if (!(roi_pos_fraction > 0.0 && roi_pos_fraction < 1.0 && rpn_pos_fraction > 0.0 &&
        rpn_pos_fraction < 1.0))
    throw Error(ErrorKind::Config, "assignment: positive fractions must lie in (0, 1)");
  if (rpn_batch == 0 || roi_batch == 0)
    throw Error(ErrorKind::Config, "assignment: batch sizes must be positive");
}

std::size_t positive_quota(std::size_t batch, double fraction) {
  return static_cast<std::size_t>(std::ceil(static_cast<double>(batch) * fraction - 1e-9));
}

std::vector<AnchorLabel> assign_anchors(std::span<const Box> anchors,
                                        std::span<const Instance> instances,
                                        const AssignConfig& cfg) {
  std::vector<AnchorLabel> labels;
  labels.reserve(anchors.size());
  for (const Box& anchor : anchors) {
    double trusted = 0.0;
    double unsafe = 0.0;
    for (const Instance& inst : instances) {
      const double overlap = iou(anchor, inst.box);
      if (inst.provenance.trusted())
        trusted = std::max(trusted, overlap);
      else
        unsafe = std::max(unsafe, overlap);
    }
    if (trusted >= cfg.rpn_pos_iou)
      labels.push_back(AnchorLabel::Positive);
    else if (unsafe >= cfg.undefined_iou)
      labels.push_back(AnchorLabel::Undefined);
    else if (trusted < cfg.rpn_neg_iou)
      labels.push_back(AnchorLabel::Negative);
    else
      labels.push_back(AnchorLabel::Undefined);
  }
  return labels;
}

RoiTargets assign_rois(std::span<const Box> rois, std::span<const Instance> instances,
                       std::span<const Category> categories, const AssignConfig& cfg) {
  std::map<Id, std::size_t> column;
  for (std::size_t c = 0; c < categories.size(); ++c) column[categories[c].id] = c;

  RoiTargets out;
  out.num_categories = categories.size();
  const std::size_t width = categories.size() + 1;
  out.rois.reserve(rois.size());

  for (const Box& roi : rois) {
    const Instance* best = nullptr;
    double best_iou = 0.0;
    for (const Instance& inst : instances) {
      const double overlap = iou(roi, inst.box);
      if (overlap < cfg.roi_pos_iou) continue;
      if (!best || overlap > best_iou || (overlap == best_iou && inst.id < best->id)) {
        best = &inst;
        best_iou = overlap;
      }
    }

    RoiTarget t;
    t.class_index = out.background_index();
    t.weights.assign(width, 1);
    if (best) {
      auto col = column.find(best->category_id);
      if (col == column.end())
        throw Error(ErrorKind::Referential, "instance " + std::to_string(best->id) +
                                                " has a category outside the taxonomy");
      t.matched_instance = best->id;
      t.matched_origin = best->provenance.origin;
      if (best->provenance.trusted()) {
        t.class_index = col->second;
        t.regression_valid = true;
      } else {
        t.mask = false;
        t.weights[col->second] = 0;
        t.weights[out.background_index()] = 0;
      }
    }
    out.rois.push_back(std::move(t));
  }
  return out;
}

std::vector<std::size_t> Sample::all() const {
  std::vector<std::size_t> out;
  std::merge(positives.begin(), positives.end(), negatives.begin(), negatives.end(),
             std::back_inserter(out));
  return out;
}

Sample sample_anchors(std::span<const AnchorLabel> labels, const AssignConfig& cfg,
                      std::uint64_t seed) {
  std::vector<std::size_t> pos;
  std::vector<std::size_t> neg;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == AnchorLabel::Positive) pos.push_back(i);
    else if (labels[i] == AnchorLabel::Negative) neg.push_back(i);
  }
  return split_batch(pos, neg, cfg.rpn_batch, cfg.rpn_pos_fraction, seed);
}

Sample sample_rois(const RoiTargets& targets, const AssignConfig& cfg, std::uint64_t seed) {
  std::vector<std::size_t> pos;
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < targets.rois.size(); ++i) {
    if (targets.positive(i))
      pos.push_back(i);
    else if (targets.rois[i].mask || cfg.unsafe_sampling == UnsafeSampling::Pooled)
      rest.push_back(i);
  }
  if (pos.empty() && rest.empty())
    throw Error(ErrorKind::Precondition, "no ROI is eligible for sampling");
  return split_batch(pos, rest, cfg.roi_batch, cfg.roi_pos_fraction, seed);
}

nlohmann::json assignment_dump(Id image_id, std::span<const Box> anchors,
                               std::span<const AnchorLabel> labels,
                               const Sample& anchor_sample, std::span<const Box> rois,
                               const RoiTargets& targets, const Sample& roi_sample) {
  using nlohmann::json;
  auto box_json = [](const Box& b) { return json::array({b.x, b.y, b.w, b.h}); };

  json anchor_list = json::array();
  for (std::size_t i = 0; i < anchors.size(); ++i)
    anchor_list.push_back({{"bbox", box_json(anchors[i])}, {"label", to_string(labels[i])}});

  json roi_list = json::array();
  for (std::size_t i = 0; i < rois.size(); ++i) {
    const RoiTarget& t = targets.rois[i];
    json r = {{"bbox", box_json(rois[i])},
              {"class_index", t.class_index},
              {"mask", t.mask ? 1 : 0},
              {"weights", t.weights},
              {"regression_valid", t.regression_valid ? 1 : 0}};
    if (t.matched_instance) {
      r["matched_instance_id"] = *t.matched_instance;
      r["matched_provenance"] = to_string(*t.matched_origin);
    }
    roi_list.push_back(std::move(r));
  }

  return {{"image_id", image_id},
          {"anchors", std::move(anchor_list)},
          {"rpn_sample", anchor_sample.all()},
          {"rois", std::move(roi_list)},
          {"background_index", targets.background_index()},
          {"roi_sample", roi_sample.all()}};
}

std::vector<Box> grid_anchors(double width, double height, double stride,
                              std::span<const double> sizes,
                              std::span<const double> aspect_ratios) {
  std::vector<Box> out;
  for (double cy = stride / 2; cy < height; cy += stride) {
    for (double cx = stride / 2; cx < width; cx += stride) {
      for (double size : sizes) {
        for (double ratio : aspect_ratios) {
          const double w = size / std::sqrt(ratio);
          const double h = size * std::sqrt(ratio);
          Box b = clamp_to_image({cx - w / 2, cy - h / 2, w, h}, width, height);
          if (b.valid()) out.push_back(b);
        }
      }
    }
  }
  return out;
}

}  // namespace omnia
