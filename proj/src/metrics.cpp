#include "omnia/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "omnia/error.hpp"

namespace omnia {

namespace {

void require_category(const Dataset& gt, Id category_id) {
  if (!gt.find_category(category_id))
    throw Error(ErrorKind::Referential,
                "category " + std::to_string(category_id) + " is not in the evaluation taxonomy");
}

}  // namespace

MatchResult match_category(const DetectionSet& dets, const Dataset& gt, Id category_id,
                           double iou_thresh) {
  std::map<Id, std::vector<const Box*>> truth;
  MatchResult out;
  for (const Instance& inst : gt.instances) {
    if (inst.category_id != category_id || inst.provenance.origin != Origin::GroundTruth)
      continue;
    truth[inst.image_id].push_back(&inst.box);
    ++out.ground_truth;
  }
  std::map<Id, std::vector<bool>> taken;
  for (const auto& [image, boxes] : truth) taken[image].assign(boxes.size(), false);

  for (std::size_t i = 0; i < dets.size(); ++i)
    if (dets[i].category_id == category_id) out.order.push_back(i);
  std::stable_sort(out.order.begin(), out.order.end(), [&](std::size_t l, std::size_t r) {
    return dets[l].score > dets[r].score;
  });

  for (std::size_t i : out.order) {
    const Detection& det = dets[i];
    auto it = truth.find(det.image_id);
    std::size_t best = 0;
    double best_iou = -1.0;
    if (it != truth.end()) {
      std::vector<bool>& used = taken[det.image_id];
      for (std::size_t g = 0; g < it->second.size(); ++g) {
        if (used[g]) continue;
        const double overlap = iou(det.box, *it->second[g]);
        if (overlap >= iou_thresh && overlap > best_iou) {
          best = g;
          best_iou = overlap;
        }
      }
      if (best_iou >= 0.0) used[best] = true;
    }
    out.true_positive.push_back(best_iou >= 0.0);
    out.matched_iou.push_back(best_iou >= 0.0 ? best_iou : 0.0);
  }
  return out;
}

double average_precision(const DetectionSet& dets, const Dataset& gt, Id category_id,
                         double iou_thresh) {
  require_category(gt, category_id);
  const MatchResult m = match_category(dets, gt, category_id, iou_thresh);
  if (m.ground_truth == 0 || m.order.empty()) return 0.0;

  const std::size_t n = m.order.size();
  std::vector<double> precision(n);
  std::vector<std::size_t> tp_count(n);
  std::size_t tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    tp += m.true_positive[k] ? 1 : 0;
    tp_count[k] = tp;
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
  }
  for (std::size_t k = n - 1; k > 0; --k)
    precision[k - 1] = std::max(precision[k - 1], precision[k]);

  // Recall steps are 1/G, so the area is sum(envelope at each new TP) / G.
  double area = 0.0;
  std::size_t previous = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (tp_count[k] != previous) area += precision[k];
    previous = tp_count[k];
  }
  return 100.0 * area / static_cast<double>(m.ground_truth);
}

std::optional<LrpResult> olrp(const DetectionSet& dets, const Dataset& gt, Id category_id,
                              double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw Error(ErrorKind::Config, "LRP tau must lie in (0, 1)");
  require_category(gt, category_id);
  const MatchResult m = match_category(dets, gt, category_id, tau);
  if (m.ground_truth == 0) return std::nullopt;

  const auto g = static_cast<double>(m.ground_truth);
  LrpResult best;
  best.olrp = 1.0;
  best.fn = m.ground_truth;
  best.threshold = 1.0;

  std::size_t tp = 0;
  double localisation = 0.0;
  const std::size_t n = m.order.size();
  for (std::size_t k = 0; k < n; ++k) {
    if (m.true_positive[k]) {
      ++tp;
      localisation += (1.0 - m.matched_iou[k]) / (1.0 - tau);
    }
    // A score threshold keeps every tied detection, so only evaluate at the
    // last member of a run of equal scores.
    if (k + 1 < n && dets[m.order[k + 1]].score == dets[m.order[k]].score) continue;
    const std::size_t fp = (k + 1) - tp;
    const std::size_t fn = m.ground_truth - tp;
    const double lrp = (localisation + static_cast<double>(fp + fn)) /
                       (static_cast<double>(k + 1) + g - static_cast<double>(tp));
    if (lrp < best.olrp) {
      best = {lrp, dets[m.order[k]].score, tp, fp, fn};
    }
  }
  best.olrp *= 100.0;
  return best;
}

double mean_ap(const DetectionSet& dets, const Dataset& gt, double iou_thresh) {
  return evaluate(dets, gt, iou_thresh, 0.5).map;
}

double molrp(const DetectionSet& dets, const Dataset& gt, double tau) {
  return evaluate(dets, gt, 0.5, tau).molrp;
}

EvalReport evaluate(const DetectionSet& dets, const Dataset& gt, double iou_thresh,
                    double tau) {
  for (const Detection& det : dets) require_category(gt, det.category_id);

  EvalReport report;
  double ap_sum = 0.0;
  double lrp_sum = 0.0;
  std::size_t evaluated = 0;
  for (const Category& c : gt.categories) {
    CategoryReport cr;
    cr.category_id = c.id;
    cr.name = c.name;
    cr.ap = average_precision(dets, gt, c.id, iou_thresh);
    auto lrp = olrp(dets, gt, c.id, tau);
    cr.gt = static_cast<std::size_t>(std::count_if(
        gt.instances.begin(), gt.instances.end(), [&](const Instance& inst) {
          return inst.category_id == c.id && inst.provenance.origin == Origin::GroundTruth;
        }));
    if (lrp) {
      cr.olrp = lrp->olrp;
      cr.tp = lrp->tp;
      cr.fp = lrp->fp;
      cr.fn = lrp->fn;
      ap_sum += cr.ap;
      lrp_sum += lrp->olrp;
      ++evaluated;
    } else {
      report.skipped.push_back(c.name);
    }
    report.categories.push_back(std::move(cr));
  }
  if (evaluated > 0) {
    report.map = ap_sum / static_cast<double>(evaluated);
    report.molrp = lrp_sum / static_cast<double>(evaluated);
  }
  return report;
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json cats = nlohmann::json::array();
  for (const CategoryReport& c : report.categories) {
    nlohmann::json j = {{"category_id", c.category_id},
                        {"name", c.name},
                        {"gt", c.gt},
                        {"ap", c.ap},
                        {"tp", c.tp},
                        {"fp", c.fp},
                        {"fn", c.fn}};
    j["olrp"] = c.olrp ? nlohmann::json(*c.olrp) : nlohmann::json(nullptr);
    cats.push_back(std::move(j));
  }
  return {{"categories", std::move(cats)},
          {"mAP", report.map},
          {"MoLRP", report.molrp},
          {"skipped", report.skipped}};
}

}  // namespace omnia
