#include "omnia/merging.hpp"

#include <algorithm>

#include "omnia/error.hpp"

namespace omnia {

std::string_view to_string(Side side) { return side == Side::A ? "a" : "b"; }

std::vector<Category> MergedTaxonomy::source_categories(Side side) const {
  std::vector<Category> out;
  for (const auto& [old_id, new_id] : remap(side))
    out.push_back({old_id, name_of(new_id)});
  return out;
}

const std::string& MergedTaxonomy::name_of(Id merged_id) const {
  if (merged_id < 1 || merged_id > static_cast<Id>(categories.size()))
    throw Error(ErrorKind::Referential,
                "unknown merged category id " + std::to_string(merged_id));
  return categories[static_cast<std::size_t>(merged_id - 1)].name;
}

MergedTaxonomy build_taxonomy(const std::vector<Category>& cats_a,
                              const std::vector<Category>& cats_b) {
  std::set<std::string> names_a;
  std::set<std::string> names_b;
  for (const Category& c : cats_a) names_a.insert(canonical_name(c.name));
  for (const Category& c : cats_b) names_b.insert(canonical_name(c.name));

  MergedTaxonomy t;
  std::set<std::string> all = names_a;
  all.insert(names_b.begin(), names_b.end());
  std::map<std::string, Id> new_ids;
  Id next = 1;
  for (const std::string& name : all) {
    new_ids[name] = next;
    t.categories.push_back({next, name});
    ++next;
  }
  std::set_intersection(names_a.begin(), names_a.end(), names_b.begin(), names_b.end(),
                        std::inserter(t.shared, t.shared.begin()));
  for (const Category& c : cats_a) t.remap_a[c.id] = new_ids.at(canonical_name(c.name));
  for (const Category& c : cats_b) t.remap_b[c.id] = new_ids.at(canonical_name(c.name));
  return t;
}

SharedPolicy shared_policy_from_string(std::string_view text) {
  if (text == "keep_ground_truth") return SharedPolicy::KeepGroundTruth;
  if (text == "reject") return SharedPolicy::Reject;
  throw Error(ErrorKind::Config, "unknown shared-category policy '" + std::string(text) +
                                     "' (expected keep_ground_truth|reject)");
}

std::string_view to_string(SharedPolicy policy) {
  return policy == SharedPolicy::KeepGroundTruth ? "keep_ground_truth" : "reject";
}

void check_shared_policy(const MergedTaxonomy& taxonomy, SharedPolicy policy) {
  if (policy == SharedPolicy::Reject && !taxonomy.shared.empty())
    throw Error(ErrorKind::Config, "taxonomies share '" + *taxonomy.shared.begin() +
                                       "' but the shared-category policy is reject");
}

EnrichedDataset enrich(const Dataset& dataset, Side side,
                       const DetectionSet& complementary,
                       const MergedTaxonomy& taxonomy, const SelectionConfig& cfg) {
  const auto& own_remap = taxonomy.remap(side);
  const auto& other_remap = taxonomy.remap(other(side));
  for (const Category& c : dataset.categories)
    if (!own_remap.count(c.id))
      throw Error(ErrorKind::Precondition, "category " + std::to_string(c.id) +
                                               " has no entry in the merged taxonomy");

  const std::vector<Category> other_categories = taxonomy.source_categories(other(side));
  const DetectionSet checked = check_detections(complementary, dataset.images, other_categories);

  EnrichedDataset out;
  out.source = side;

  DetectionSet candidates;
  candidates.reserve(checked.size());
  for (const Detection& det : checked) {
    if (taxonomy.shared.count(taxonomy.name_of(other_remap.at(det.category_id))))
      ++out.dropped_shared;
    else
      candidates.push_back(det);
  }
  out.selection = select(candidates, dataset, other_categories, cfg);

  Dataset& d = out.dataset;
  d.images = dataset.images;
  d.categories = taxonomy.categories;
  Id max_id = 0;
  for (const Instance& inst : dataset.instances) {
    max_id = std::max(max_id, inst.id);
    if (inst.provenance.origin != Origin::GroundTruth) continue;
    Instance gt = inst;
    gt.category_id = own_remap.at(inst.category_id);
    d.instances.push_back(gt);
  }

  std::vector<Instance> predictions = out.selection.safe;
  predictions.insert(predictions.end(), out.selection.unsafe.begin(),
                     out.selection.unsafe.end());
  std::sort(predictions.begin(), predictions.end(),
            [](const Instance& l, const Instance& r) { return l.id < r.id; });
  for (Instance inst : predictions) {
    inst.id = ++max_id;
    inst.category_id = other_remap.at(inst.category_id);
    d.instances.push_back(inst);
  }

  if (auto problems = validate(d); !problems.empty())
    throw Error(ErrorKind::Schema, "enriched dataset invalid: " + problems.front());
  return out;
}

MergedDataset merge(const EnrichedDataset& a, const EnrichedDataset& b) {
  if (a.dataset.categories != b.dataset.categories)
    throw Error(ErrorKind::Precondition,
                "cannot merge datasets enriched against different taxonomies");

  MergedDataset out;
  out.dataset.categories = a.dataset.categories;
  const std::size_t larger = std::max(a.dataset.images.size(), b.dataset.images.size());

  Id next_image = 1;
  Id next_instance = 1;
  for (const EnrichedDataset* part : {&a, &b}) {
    SourceSpan span;
    span.source = part->source;
    span.first_image_id = next_image;
    span.image_count = part->dataset.images.size();
    span.sampling_weight =
        span.image_count == 0 ? 1.0
                              : static_cast<double>(larger) / static_cast<double>(span.image_count);
    out.sources.push_back(span);

    std::map<Id, Id> image_ids;
    for (Image im : part->dataset.images) {
      image_ids[im.id] = next_image;
      im.id = next_image++;
      out.dataset.images.push_back(std::move(im));
    }
    for (Instance inst : part->dataset.instances) {
      inst.id = next_instance++;
      inst.image_id = image_ids.at(inst.image_id);
      out.dataset.instances.push_back(inst);
    }
  }
  return out;
}

std::string serialize_merged(const MergedDataset& merged) {
  nlohmann::json root = nlohmann::json::parse(serialize_dataset(merged.dataset));
  nlohmann::json sources = nlohmann::json::array();
  for (const SourceSpan& s : merged.sources)
    sources.push_back({{"source", to_string(s.source)},
                       {"first_image_id", s.first_image_id},
                       {"image_count", s.image_count},
                       {"sampling_weight", s.sampling_weight}});
  root["sources"] = std::move(sources);
  return root.dump(2) + "\n";
}

std::vector<RoundResult> iterate(const Dataset& a, const Dataset& b,
                                 const DetectionSource& source, int rounds,
                                 const SelectionConfig& cfg) {
  if (rounds < 1)
    throw Error(ErrorKind::Precondition, "iterate needs at least one round");
  const MergedTaxonomy taxonomy = build_taxonomy(a.categories, b.categories);

  std::vector<RoundResult> results;
  for (int round = 1; round <= rounds; ++round) {
    RoundDetections dets = source(round, results);
    RoundResult r;
    r.round = round;
    r.a = enrich(a, Side::A, dets.on_a, taxonomy, cfg);
    r.b = enrich(b, Side::B, dets.on_b, taxonomy, cfg);
    r.merged = merge(r.a, r.b);
    r.a.sampling_weight = r.merged.sources[0].sampling_weight;
    r.b.sampling_weight = r.merged.sources[1].sampling_weight;
    results.push_back(std::move(r));
  }
  return results;
}

nlohmann::json round_stats(const RoundResult& round) {
  auto side_json = [](const EnrichedDataset& e) {
    nlohmann::json s = selection_stats(e.selection);
    s["dropped_shared"] = e.dropped_shared;
    s["sampling_weight"] = e.sampling_weight;
    return s;
  };
  return {{"round", round.round}, {"a", side_json(round.a)}, {"b", side_json(round.b)}};
}

}  // namespace omnia
