#include "omnia/selection.hpp"

#include <cmath>

#include "omnia/error.hpp"

namespace omnia {

namespace {

void check_pair(const Thresholds& t, const std::string& where) {
  if (!(std::isfinite(t.low) && std::isfinite(t.high) && 0.0 <= t.low &&
        t.low < t.high && t.high <= 1.0))
    throw Error(ErrorKind::Config,
                where + ": thresholds must satisfy 0 <= low < high <= 1");
}

}  // namespace

Thresholds SelectionConfig::thresholds_for(const std::string& category_name) const {
  if (auto it = per_category.find(category_name); it != per_category.end())
    return it->second;
  return {threshold_low, threshold_high};
}

void SelectionConfig::check() const {
  check_pair({threshold_low, threshold_high}, "selection");
  for (const auto& [name, t] : per_category) check_pair(t, "selection." + name);
  if (!(dedup_iou > 0.0 && dedup_iou <= 1.0))
    throw Error(ErrorKind::Config, "selection: dedup_iou must lie in (0, 1]");
}

SelectionResult select(const DetectionSet& detections, const Dataset& target,
                       const std::vector<Category>& categories,
                       const SelectionConfig& cfg) {
  cfg.check();

  std::map<Id, const std::string*> names;
  for (const Category& c : categories) names[c.id] = &c.name;

  std::map<Id, std::vector<const Box*>> human_boxes;
  for (const Image& im : target.images) human_boxes[im.id];
  for (const Instance& inst : target.instances)
    if (inst.provenance.origin == Origin::GroundTruth)
      human_boxes[inst.image_id].push_back(&inst.box);

  SelectionResult out;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const Detection& det = detections[i];
    auto boxes = human_boxes.find(det.image_id);
    if (boxes == human_boxes.end())
      throw Error(ErrorKind::Referential,
                  "detection " + std::to_string(i) + " references image_id " +
                      std::to_string(det.image_id) + " absent from the target dataset");
    auto name = names.find(det.category_id);
    if (name == names.end())
      throw Error(ErrorKind::Referential,
                  "detection " + std::to_string(i) + " references unknown category_id " +
                      std::to_string(det.category_id));
    BucketCounts& counts = out.per_category[*name->second];

    bool duplicate = false;
    for (const Box* gt : boxes->second) {
      if (iou(det.box, *gt) > cfg.dedup_iou) {
        duplicate = true;
        break;
      }
    }
    if (duplicate) {
      ++out.discarded_dedup;
      ++counts.discarded_dedup;
      continue;
    }

    const Thresholds t = cfg.thresholds_for(*name->second);
    Instance inst{static_cast<Id>(i), det.image_id, det.category_id, det.box, {}};
    if (det.score <= t.low) {
      ++out.discarded_low;
      ++counts.discarded_low;
    } else if (det.score > t.high) {
      inst.provenance = Provenance::safe(det.score);
      out.safe.push_back(inst);
      ++counts.safe;
    } else {
      inst.provenance = Provenance::unsafe(det.score);
      out.unsafe.push_back(inst);
      ++counts.unsafe;
    }
  }
  return out;
}

nlohmann::json selection_stats(const SelectionResult& result) {
  auto counts_json = [](const BucketCounts& c) {
    return nlohmann::json{{"safe", c.safe},
                          {"unsafe", c.unsafe},
                          {"discarded_low", c.discarded_low},
                          {"discarded_dedup", c.discarded_dedup}};
  };
  nlohmann::json out = counts_json(result.totals());
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [name, c] : result.per_category) per[name] = counts_json(c);
  out["per_category"] = std::move(per);
  return out;
}

}  // namespace omnia
