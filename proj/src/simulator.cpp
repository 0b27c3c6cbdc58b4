#include "omnia/simulator.hpp"

#include <algorithm>
#include <cmath>

#include "omnia/error.hpp"
#include "omnia/rng.hpp"

namespace omnia {

namespace {

constexpr int kPlacementAttempts = 500;

bool probability(double p) { return p >= 0.0 && p <= 1.0; }

double clip_score(double s) { return std::clamp(s, 0.001, 1.0); }

Box jitter_box(const Box& b, double sigma, rng::Engine& gen) {
  const double n1 = rng::normal(gen);
  const double n2 = rng::normal(gen);
  const double n3 = rng::normal(gen);
  const double n4 = rng::normal(gen);
  return {b.x + sigma * b.w * n1, b.y + sigma * b.h * n2, b.w * std::exp(sigma * n3),
          b.h * std::exp(sigma * n4)};
}

}  // namespace

void SceneConfig::check() const {
  if (width <= 0 || height <= 0) throw Error(ErrorKind::Config, "scene: image size must be positive");
  if (min_objects < 0 || max_objects < min_objects || max_objects >= 1000)
    throw Error(ErrorKind::Config, "scene: need 0 <= min_objects <= max_objects < 1000");
  if (!(min_box > 0.0 && max_box >= min_box))
    throw Error(ErrorKind::Config, "scene: need 0 < min_box <= max_box");
  if (!(overlap_cap >= 0.0 && overlap_cap < 1.0))
    throw Error(ErrorKind::Config, "scene: overlap_cap must lie in [0, 1)");
  if (taxonomy.empty() && max_objects > 0 && n_images > 0)
    throw Error(ErrorKind::Config, "scene: taxonomy must not be empty");
  std::set<std::string> names;
  for (const std::string& n : taxonomy)
    if (canonical_name(n).empty() || !names.insert(canonical_name(n)).second)
      throw Error(ErrorKind::Config, "scene: taxonomy names must be unique and non-empty");
}

Dataset generate_scenes(const SceneConfig& cfg) {
  cfg.check();
  Dataset d;
  for (std::size_t c = 0; c < cfg.taxonomy.size(); ++c)
    d.categories.push_back({static_cast<Id>(c + 1), canonical_name(cfg.taxonomy[c])});

  const double max_w = std::min(cfg.max_box, static_cast<double>(cfg.width));
  const double max_h = std::min(cfg.max_box, static_cast<double>(cfg.height));
  const double min_w = std::min(cfg.min_box, max_w);
  const double min_h = std::min(cfg.min_box, max_h);

  for (std::size_t i = 0; i < cfg.n_images; ++i) {
    const Id image_id = cfg.first_image_id + static_cast<Id>(i);
    d.images.push_back({image_id, cfg.width, cfg.height, cfg.domain_tag});
    rng::Engine gen = rng::engine(cfg.seed, "scene", static_cast<std::uint64_t>(image_id));

    const int span = cfg.max_objects - cfg.min_objects + 1;
    const int count = cfg.min_objects + static_cast<int>(rng::uniform(gen) * span);
    std::vector<Box> placed;
    for (int k = 0; k < count; ++k) {
      bool ok = false;
      Box box;
      for (int attempt = 0; attempt < kPlacementAttempts && !ok; ++attempt) {
        const double w = min_w + rng::uniform(gen) * (max_w - min_w);
        const double h = min_h + rng::uniform(gen) * (max_h - min_h);
        box = {rng::uniform(gen) * (cfg.width - w), rng::uniform(gen) * (cfg.height - h), w, h};
        ok = std::all_of(placed.begin(), placed.end(),
                         [&](const Box& other) { return iou(box, other) <= cfg.overlap_cap; });
      }
      if (!ok)
        throw Error(ErrorKind::Precondition,
                    "cannot place object " + std::to_string(k) + " on image " +
                        std::to_string(image_id) + " under the overlap cap");
      placed.push_back(box);
      const auto category = static_cast<std::size_t>(
          rng::uniform(gen) * static_cast<double>(cfg.taxonomy.size()));
      d.instances.push_back({image_id * 1000 + k + 1, image_id,
                             d.categories[std::min(category, cfg.taxonomy.size() - 1)].id, box,
                             Provenance::ground_truth()});
    }
  }
  return d;
}

Dataset strip_categories(const Dataset& d, const std::set<std::string>& names) {
  Dataset out;
  out.images = d.images;
  std::set<Id> removed;
  for (const Category& c : d.categories) {
    if (names.count(c.name))
      removed.insert(c.id);
    else
      out.categories.push_back(c);
  }
  for (const Instance& inst : d.instances)
    if (!removed.count(inst.category_id)) out.instances.push_back(inst);
  return out;
}

double DetectorModel::recall_for(const std::string& name) const {
  auto it = per_category_recall.find(name);
  return it == per_category_recall.end() ? recall : it->second;
}

void DetectorModel::check() const {
  bool ok = probability(recall) && probability(cross_domain_degradation) &&
            jitter_sigma >= 0.0 && score_noise >= 0.0 && fp_per_image >= 0.0 &&
            fp_score_sigma >= 0.0;
  for (const auto& [name, r] : per_category_recall) ok = ok && probability(r);
  if (!ok)
    throw Error(ErrorKind::Config,
                "detector: probabilities must lie in [0, 1] and spreads must be non-negative");
}

DetectionSet simulate_detector(const Dataset& hidden, const DetectorModel& model,
                               const std::vector<std::string>& categories) {
  model.check();
  std::map<Id, std::string> requested;
  std::vector<Id> requested_ids;
  for (const std::string& name : categories) {
    const Category* c = hidden.find_category(canonical_name(name));
    if (!c) throw Error(ErrorKind::Referential, "detector category '" + name + "' not in scene");
    requested[c->id] = c->name;
    requested_ids.push_back(c->id);
  }

  const auto by_image = group_by_image(hidden.instances);
  DetectionSet out;
  for (const Image& image : hidden.images) {
    rng::Engine gen = rng::engine(model.seed, "detector", static_cast<std::uint64_t>(image.id));
    const double domain_factor =
        image.domain_tag == model.domain_tag ? 1.0 : model.cross_domain_degradation;
    const double width = image.width;
    const double height = image.height;

    if (auto it = by_image.find(image.id); it != by_image.end()) {
      for (const Instance* truth : it->second) {
        // Draw the full set of variates for every object so that changing
        // recall never shifts the stream of the others.
        const double u = rng::uniform(gen);
        const Box jittered = jitter_box(truth->box, model.jitter_sigma, gen);
        const double noise = rng::normal(gen);
        auto name = requested.find(truth->category_id);
        if (name == requested.end()) continue;
        if (u >= model.recall_for(name->second) * domain_factor) continue;
        const Box box = clamp_to_image(jittered, width, height);
        if (!box.valid()) continue;
        const double score = clip_score(model.score_base +
                                        model.score_iou_weight * iou(box, truth->box) +
                                        model.score_noise * noise);
        out.push_back({image.id, truth->category_id, box, score});
      }
    }

    if (requested_ids.empty()) continue;
    const int false_positives = rng::poisson(gen, model.fp_per_image);
    for (int k = 0; k < false_positives; ++k) {
      const auto pick = static_cast<std::size_t>(rng::uniform(gen) *
                                                 static_cast<double>(requested_ids.size()));
      const double w = (0.08 + 0.25 * rng::uniform(gen)) * width;
      const double h = (0.08 + 0.25 * rng::uniform(gen)) * height;
      const Box box{rng::uniform(gen) * (width - w), rng::uniform(gen) * (height - h), w, h};
      const double score = clip_score(model.fp_score_mean + model.fp_score_sigma * rng::normal(gen));
      out.push_back({image.id, requested_ids[std::min(pick, requested_ids.size() - 1)], box, score});
    }
  }
  return out;
}

}  // namespace omnia
