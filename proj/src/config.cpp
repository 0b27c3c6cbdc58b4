#include "omnia/config.hpp"

#include <set>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "omnia/error.hpp"

namespace omnia {

namespace {

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorKind::Config, what); }

// Reads keys from one table and rejects any key that was never asked for.
class Reader {
 public:
  Reader(const toml::table* table, std::string path) : table_(table), path_(std::move(path)) {}

  bool present() const { return table_ != nullptr; }

  template <typename T>
  void read(const char* key, T& out) {
    const toml::node* node = lookup(key);
    if (!node) return;
    auto value = node->value<T>();
    if (!value) config_error(where(key) + " has the wrong type");
    out = *value;
  }

  void read(const char* key, std::size_t& out) {
    std::int64_t v = static_cast<std::int64_t>(out);
    read(key, v);
    if (v < 0) config_error(where(key) + " must be non-negative");
    out = static_cast<std::size_t>(v);
  }

  void read(const char* key, int& out) {
    std::int64_t v = out;
    read(key, v);
    out = static_cast<int>(v);
  }

  template <typename T>
  void read_list(const char* key, std::vector<T>& out) {
    const toml::node* node = lookup(key);
    if (!node) return;
    const toml::array* arr = node->as_array();
    if (!arr) config_error(where(key) + " must be an array");
    out.clear();
    for (const toml::node& item : *arr) {
      auto value = item.value<T>();
      if (!value) config_error(where(key) + " has an element of the wrong type");
      out.push_back(*value);
    }
  }

  Reader sub(const char* key) {
    const toml::node* node = lookup(key);
    if (!node) return Reader(nullptr, where(key));
    if (!node->is_table()) config_error(where(key) + " must be a table");
    return Reader(node->as_table(), where(key));
  }

  const toml::table* table() const { return table_; }
  const std::string& path() const { return path_; }

  void mark_all() {
    if (table_)
      for (auto&& [k, v] : *table_) seen_.insert(std::string(k.str()));
  }

  void finish() const {
    if (!table_) return;
    for (auto&& [k, v] : *table_)
      if (!seen_.count(std::string(k.str())))
        config_error("unknown key '" + where(std::string(k.str()).c_str()) + "'");
  }

 private:
  const toml::node* lookup(const char* key) {
    if (!table_) return nullptr;
    seen_.insert(key);
    return table_->get(key);
  }

  std::string where(const char* key) const {
    return path_.empty() ? std::string(key) : path_ + "." + key;
  }

  const toml::table* table_;
  std::string path_;
  std::set<std::string> seen_;
};

toml::table parse_toml(std::string_view text) {
  try {
    return toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "malformed TOML: " << e.description() << " (line " << e.source().begin.line
       << ", column " << e.source().begin.column << ")";
    config_error(os.str());
  }
}

void read_selection(Reader r, SelectionConfig& cfg) {
  if (!r.present()) return;
  r.read("threshold_low", cfg.threshold_low);
  r.read("threshold_high", cfg.threshold_high);
  r.read("dedup_iou", cfg.dedup_iou);
  Reader per = r.sub("per_category");
  if (per.present()) {
    per.mark_all();
    for (auto&& [key, node] : *per.table()) {
      const std::string name = canonical_name(key.str());
      if (!node.is_table()) config_error(per.path() + "." + name + " must be a table");
      Reader t(node.as_table(), per.path() + "." + name);
      Thresholds th{cfg.threshold_low, cfg.threshold_high};
      t.read("low", th.low);
      t.read("high", th.high);
      t.finish();
      cfg.per_category[name] = th;
    }
    per.finish();
  }
  r.finish();
  cfg.check();
}

void read_assignment(Reader r, AssignConfig& cfg) {
  if (!r.present()) return;
  r.read("rpn_pos_iou", cfg.rpn_pos_iou);
  r.read("rpn_neg_iou", cfg.rpn_neg_iou);
  r.read("roi_pos_iou", cfg.roi_pos_iou);
  r.read("undefined_iou", cfg.undefined_iou);
  r.read("rpn_batch", cfg.rpn_batch);
  r.read("roi_batch", cfg.roi_batch);
  r.read("roi_pos_fraction", cfg.roi_pos_fraction);
  r.read("rpn_pos_fraction", cfg.rpn_pos_fraction);
  r.read("seed", cfg.seed);
  std::string sampling(to_string(cfg.unsafe_sampling));
  r.read("unsafe_sampling", sampling);
  cfg.unsafe_sampling = unsafe_sampling_from_string(sampling);
  r.finish();
  cfg.check();
}

void read_detector(Reader r, DetectorModel& m) {
  if (!r.present()) return;
  r.read("recall", m.recall);
  r.read("jitter_sigma", m.jitter_sigma);
  r.read("score_base", m.score_base);
  r.read("score_iou_weight", m.score_iou_weight);
  r.read("score_noise", m.score_noise);
  r.read("fp_per_image", m.fp_per_image);
  r.read("fp_score_mean", m.fp_score_mean);
  r.read("fp_score_sigma", m.fp_score_sigma);
  r.read("cross_domain_degradation", m.cross_domain_degradation);
  r.read("domain_tag", m.domain_tag);
  Reader per = r.sub("per_category_recall");
  if (per.present()) {
    per.mark_all();
    for (auto&& [key, node] : *per.table()) {
      auto value = node.value<double>();
      if (!value) config_error(per.path() + "." + std::string(key.str()) + " must be a number");
      m.per_category_recall[canonical_name(key.str())] = *value;
    }
    per.finish();
  }
  r.finish();
  m.check();
}

void read_scene(Reader r, SceneConfig& s) {
  if (!r.present()) return;
  r.read("n_images", s.n_images);
  r.read("width", s.width);
  r.read("height", s.height);
  r.read_list("taxonomy", s.taxonomy);
  r.read("min_objects", s.min_objects);
  r.read("max_objects", s.max_objects);
  r.read("min_box", s.min_box);
  r.read("max_box", s.max_box);
  r.read("overlap_cap", s.overlap_cap);
  r.finish();
  s.check();
}

void read_probe(Reader r, ProbeConfig& p) {
  if (!r.present()) return;
  r.read("anchor_stride", p.anchor_stride);
  r.read_list("anchor_sizes", p.anchor_sizes);
  r.read_list("anchor_ratios", p.anchor_ratios);
  r.read("rois_per_object", p.rois_per_object);
  r.read("background_rois", p.background_rois);
  r.read("roi_jitter", p.roi_jitter);
  r.read("probe_logit", p.probe_logit);
  r.finish();
  if (!(p.anchor_stride > 0.0) || p.rois_per_object < 0 || p.background_rois < 0 ||
      p.roi_jitter < 0.0)
    config_error("probe: stride must be positive and counts/jitter non-negative");
}

}  // namespace

PipelineConfig parse_pipeline_config(std::string_view toml_text) {
  const toml::table root = parse_toml(toml_text);
  Reader top(&root, "");
  PipelineConfig cfg;
  read_selection(top.sub("selection"), cfg.selection);
  read_assignment(top.sub("assignment"), cfg.assignment);
  Reader merge = top.sub("merge");
  if (merge.present()) {
    std::string policy(to_string(cfg.shared_policy));
    merge.read("shared_policy", policy);
    cfg.shared_policy = shared_policy_from_string(policy);
    merge.read("rounds", cfg.rounds);
    merge.finish();
    if (cfg.rounds < 1) config_error("merge.rounds must be at least 1");
  }
  top.finish();
  return cfg;
}

ExperimentConfig parse_experiment_config(std::string_view toml_text) {
  const toml::table root = parse_toml(toml_text);
  Reader top(&root, "");
  ExperimentConfig cfg = default_experiment();

  top.read("seed", cfg.seed);
  top.read("rounds", cfg.rounds);
  top.read("domain_a", cfg.domain_a);
  top.read("domain_b", cfg.domain_b);
  top.read_list("sweep_high", cfg.sweep_high);
  std::vector<std::string> variants;
  top.read_list("variants", variants);
  if (!variants.empty()) {
    cfg.variants.clear();
    for (const std::string& v : variants) cfg.variants.push_back(variant_from_string(v));
  }
  std::string policy;
  top.read("shared_policy", policy);
  if (!policy.empty()) cfg.shared_policy = shared_policy_from_string(policy);

  cfg.detector_a.domain_tag = cfg.domain_a;
  cfg.detector_b.domain_tag = cfg.domain_b;

  read_scene(top.sub("scene"), cfg.scene);
  for (auto [key, names] : {std::pair{"dataset_a", &cfg.categories_a},
                            std::pair{"dataset_b", &cfg.categories_b}}) {
    Reader r = top.sub(key);
    r.read_list("categories", *names);
    r.finish();
  }
  read_detector(top.sub("detector_a"), cfg.detector_a);
  read_detector(top.sub("detector_b"), cfg.detector_b);
  read_selection(top.sub("selection"), cfg.selection);
  read_assignment(top.sub("assignment"), cfg.assignment);
  read_probe(top.sub("probe"), cfg.probe);
  top.finish();
  if (cfg.rounds < 1) config_error("rounds must be at least 1");
  for (double high : cfg.sweep_high)
    if (!(high > cfg.selection.threshold_low && high <= 1.0))
      config_error("sweep_high values must lie in (threshold_low, 1]");
  return cfg;
}

}  // namespace omnia
