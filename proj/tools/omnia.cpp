// omnia — dataset merging, SoftSig loss checks and detection evaluation.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "omnia/annotations.hpp"
#include "omnia/assignment.hpp"
#include "omnia/config.hpp"
#include "omnia/error.hpp"
#include "omnia/gradcheck.hpp"
#include "omnia/merging.hpp"
#include "omnia/metrics.hpp"
#include "omnia/rng.hpp"
#include "omnia/selection.hpp"
#include "omnia/simulator.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace omnia;

namespace {

constexpr int kExitFailure = 1;  // a check ran and did not pass
constexpr int kExitError = 2;    // bad input, I/O or configuration

struct Global {
  std::uint64_t seed = 3;
  bool seed_given = false;
  std::string log_level;
  std::string output_dir;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path output_path(const Global& g, const std::string& path) {
  fs::path p(path);
  if (!g.output_dir.empty() && p.is_relative()) p = fs::path(g.output_dir) / p;
  return p;
}

void write_file(const Global& g, const std::string& path, const std::string& text) {
  const fs::path p = output_path(g, path);
  std::error_code ec;
  if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + p.string() + "'");
  out << text;
  if (!out) throw Error(ErrorKind::Io, "failed writing '" + p.string() + "'");
  spdlog::info("wrote {}", p.string());
}

void write_json(const Global& g, const std::string& path, const json& j) {
  write_file(g, path, j.dump(2) + "\n");
}

PipelineConfig load_pipeline(const std::string& path) {
  return path.empty() ? PipelineConfig{} : parse_pipeline_config(read_file(path));
}

DetectionSet load_detections(const std::string& path, const Dataset& on,
                             const std::vector<Category>& categories) {
  return check_detections(parse_detections(read_file(path)), on.images, categories);
}

// ---- select ---------------------------------------------------------------

struct SelectArgs {
  std::string dets, gt, taxonomy, config, out, stats;
};

void run_select(const Global& g, const SelectArgs& a) {
  const PipelineConfig cfg = load_pipeline(a.config);
  const Dataset target = parse_dataset(read_file(a.gt));
  // Detections may come from a detector with another taxonomy; the
  // selected predictions then keep that taxonomy's ids and names.
  const std::vector<Category> categories =
      a.taxonomy.empty() ? target.categories : parse_dataset(read_file(a.taxonomy)).categories;
  const DetectionSet dets = load_detections(a.dets, target, categories);
  const SelectionResult result = select(dets, target, categories, cfg.selection);

  // Ground truth plus the selected predictions, in detection order.
  Dataset out = target;
  if (!a.taxonomy.empty()) out.categories = categories;
  std::erase_if(out.instances,
                [](const Instance& i) { return i.provenance.origin != Origin::GroundTruth; });
  Id next = 0;
  for (const Instance& i : out.instances) next = std::max(next, i.id);
  std::vector<Instance> picked = result.safe;
  picked.insert(picked.end(), result.unsafe.begin(), result.unsafe.end());
  std::sort(picked.begin(), picked.end(),
            [](const Instance& l, const Instance& r) { return l.id < r.id; });
  for (Instance inst : picked) {
    inst.id = ++next;
    out.instances.push_back(inst);
  }
  spdlog::info("selected {} safe and {} unsafe of {} detections", result.safe.size(),
               result.unsafe.size(), dets.size());
  write_file(g, a.out, serialize_dataset(out));
  if (!a.stats.empty()) {
    json stats = selection_stats(result);
    stats["seed"] = g.seed;
    write_json(g, a.stats, stats);
  }
}

// ---- merge / iterate ------------------------------------------------------

struct MergeArgs {
  std::string a, b, config, out, stats;
  std::vector<std::string> det_on_a, det_on_b;
  int rounds = 0;  // 0: take the config's value
};

json merge_stats(const Global& g, const std::vector<RoundResult>& results,
                 const MergedTaxonomy& taxonomy) {
  json rounds = json::array();
  for (const RoundResult& r : results) rounds.push_back(round_stats(r));
  json shared = json::array();
  for (const std::string& s : taxonomy.shared) shared.push_back(s);
  return {{"seed", g.seed},
          {"categories", taxonomy.categories.size()},
          {"shared", std::move(shared)},
          {"rounds", std::move(rounds)}};
}

void run_merge(const Global& g, const MergeArgs& m, bool iterative) {
  const PipelineConfig cfg = load_pipeline(m.config);
  const Dataset a = parse_dataset(read_file(m.a));
  const Dataset b = parse_dataset(read_file(m.b));
  const MergedTaxonomy taxonomy = build_taxonomy(a.categories, b.categories);
  check_shared_policy(taxonomy, cfg.shared_policy);

  const int rounds = iterative ? (m.rounds > 0 ? m.rounds : cfg.rounds) : 1;
  if (rounds < 1) throw Error(ErrorKind::Precondition, "rounds must be at least 1");

  // Round k reads the k-th --det-on-a/--det-on-b file.
  DetectionSource source = [&](int round, const std::vector<RoundResult>&) {
    const auto k = static_cast<std::size_t>(round - 1);
    if (k >= m.det_on_a.size() || k >= m.det_on_b.size())
      throw Error(ErrorKind::Io, "no detection files given for round " + std::to_string(round));
    spdlog::info("round {}: {} and {}", round, m.det_on_a[k], m.det_on_b[k]);
    return RoundDetections{load_detections(m.det_on_a[k], a, b.categories),
                           load_detections(m.det_on_b[k], b, a.categories)};
  };
  const std::vector<RoundResult> results = iterate(a, b, source, rounds, cfg.selection);

  if (iterative && rounds > 1) {
    // One merged file per round: out.json -> out.round1.json, ...
    const fs::path out(m.out);
    for (const RoundResult& r : results) {
      fs::path p = out;
      p.replace_filename(out.stem().string() + ".round" + std::to_string(r.round) +
                         out.extension().string());
      write_file(g, p.string(), serialize_merged(r.merged));
    }
  }
  write_file(g, m.out, serialize_merged(results.back().merged));
  if (!m.stats.empty()) write_json(g, m.stats, merge_stats(g, results, taxonomy));
}

// ---- assign ---------------------------------------------------------------

struct AssignArgs {
  std::string dataset, rois, config, out;
  std::vector<Id> images;
  double stride = 16.0;
  std::vector<double> sizes{32.0, 64.0, 128.0};
  std::vector<double> ratios{0.5, 1.0, 2.0};
};

void run_assign(const Global& g, const AssignArgs& a) {
  AssignConfig cfg = load_pipeline(a.config).assignment;
  if (g.seed_given || a.config.empty()) cfg.seed = g.seed;
  const Dataset d = parse_dataset(read_file(a.dataset));
  const auto by_image = group_by_image(d.instances);
  std::map<Id, std::vector<Box>> roi_boxes;
  if (!a.rois.empty())
    for (const Detection& det : load_detections(a.rois, d, d.categories))
      roi_boxes[det.image_id].push_back(det.box);

  json dumps = json::array();
  for (const Image& image : d.images) {
    if (!a.images.empty() &&
        std::find(a.images.begin(), a.images.end(), image.id) == a.images.end())
      continue;
    std::vector<Instance> instances;
    if (auto it = by_image.find(image.id); it != by_image.end())
      for (const Instance* inst : it->second) instances.push_back(*inst);

    const auto key = static_cast<std::uint64_t>(image.id);
    const std::vector<Box> anchors =
        grid_anchors(image.width, image.height, a.stride, a.sizes, a.ratios);
    const auto labels = assign_anchors(anchors, instances, cfg);
    const Sample anchor_sample = sample_anchors(labels, cfg, rng::derive(cfg.seed, "rpn", key));

    const std::vector<Box>& rois = a.rois.empty() ? anchors : roi_boxes[image.id];
    const RoiTargets targets = assign_rois(rois, instances, d.categories, cfg);
    Sample roi_sample;
    if (!rois.empty()) roi_sample = sample_rois(targets, cfg, rng::derive(cfg.seed, "roi", key));
    dumps.push_back(
        assignment_dump(image.id, anchors, labels, anchor_sample, rois, targets, roi_sample));
  }
  json categories = json::array();
  for (const Category& c : d.categories) categories.push_back(c.name);
  write_json(g, a.out,
             {{"seed", cfg.seed},
              {"columns", std::move(categories)},
              {"unsafe_sampling", to_string(cfg.unsafe_sampling)},
              {"images", std::move(dumps)}});
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string dets, gt, out;
  double iou = 0.5;
  double tau = 0.5;
};

void run_eval(const Global& g, const EvalArgs& e) {
  const Dataset gt = parse_dataset(read_file(e.gt));
  const DetectionSet dets = load_detections(e.dets, gt, gt.categories);
  const EvalReport report = evaluate(dets, gt, e.iou, e.tau);
  spdlog::info("mAP {:.2f}, MoLRP {:.2f}", report.map, report.molrp);
  json j = to_json(report);
  j["seed"] = g.seed;
  j["iou_threshold"] = e.iou;
  j["tau"] = e.tau;
  if (e.out.empty())
    std::cout << j.dump(2) << "\n";
  else
    write_json(g, e.out, j);
}

// ---- gradcheck ------------------------------------------------------------

struct GradArgs {
  std::size_t trials = 100;
  double step = 1e-5;
  double tolerance = 1e-5;
};

int run_gradcheck(const Global& g, const GradArgs& a) {
  const GradientCheck r = gradient_check(g.seed, a.trials, a.step);
  const bool pass = r.max_relative_error < a.tolerance;
  const json j = {{"seed", g.seed},
                  {"trials", r.trials},
                  {"entries", r.entries},
                  {"step", a.step},
                  {"tolerance", a.tolerance},
                  {"max_relative_error", r.max_relative_error},
                  {"pass", pass}};
  std::cout << j.dump(2) << "\n";
  if (!g.output_dir.empty()) write_json(g, "gradcheck.json", j);
  return pass ? 0 : kExitFailure;
}

// ---- simulate -------------------------------------------------------------

struct SimulateArgs {
  std::string config, out, emit_dir;
};

void run_simulate(const Global& g, const SimulateArgs& s) {
  ExperimentConfig cfg =
      s.config.empty() ? default_experiment() : parse_experiment_config(read_file(s.config));
  if (g.seed_given || s.config.empty()) cfg.seed = g.seed;
  spdlog::info("running experiment with seed {}", cfg.seed);
  const ExperimentReport report = run_experiment(cfg);
  write_json(g, s.out, to_json(report, cfg));

  if (!s.emit_dir.empty()) {
    // The inputs of the experiment, for driving merge/eval by hand.
    const fs::path dir(s.emit_dir);
    write_file(g, (dir / "hidden.json").string(), serialize_dataset(report.hidden));
    write_file(g, (dir / "a.json").string(), serialize_dataset(report.dataset_a));
    write_file(g, (dir / "b.json").string(), serialize_dataset(report.dataset_b));
    write_file(g, (dir / "det_on_a.json").string(), serialize_detections(report.det_on_a));
    write_file(g, (dir / "det_on_b.json").string(), serialize_detections(report.det_on_b));
  }
}

// ---- plumbing -------------------------------------------------------------

void print_error(std::string_view kind, const std::string& message) {
  std::cerr << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << "\n";
}

void configure_logging(const Global& g) {
  auto logger = spdlog::stderr_color_mt("omnia");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  std::string level = g.log_level;
  if (level.empty())
    if (const char* env = std::getenv("OMNIA_LOG")) level = env;
  if (level.empty()) level = "warn";
  const auto parsed = spdlog::level::from_str(level);
  if (parsed == spdlog::level::off && level != "off")
    throw Error(ErrorKind::Config, "unknown log level '" + level + "'");
  spdlog::set_level(parsed);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Merge detection datasets with heterogeneous taxonomies, check the SoftSig "
               "loss and evaluate detections."};
  app.require_subcommand(1);

  Global g;
  app.add_option("--seed", g.seed, "Master seed, echoed in every report")
      ->default_val(3)
      ->each([&](const std::string&) { g.seed_given = true; });
  app.add_option("--log-level", g.log_level,
                 "trace|debug|info|warn|error|off (default: $OMNIA_LOG or warn)");
  app.add_option("--output-dir", g.output_dir, "Directory for relative output paths");

  SelectArgs sel;
  auto* select_cmd = app.add_subcommand("select", "Split detections into safe/unsafe/discarded");
  select_cmd->add_option("--dets", sel.dets, "Detection file")->required();
  select_cmd->add_option("--gt", sel.gt, "Annotation file of the target images")->required();
  select_cmd->add_option("--taxonomy", sel.taxonomy,
                         "Annotation file whose categories the detections use (default: --gt)");
  select_cmd->add_option("--config", sel.config, "Pipeline TOML");
  select_cmd->add_option("--out", sel.out, "Annotations plus selected predictions")->required();
  select_cmd->add_option("--stats", sel.stats, "Selection statistics JSON");

  MergeArgs mrg;
  auto* merge_cmd = app.add_subcommand("merge", "Enrich both datasets and merge them");
  merge_cmd->add_option("--a", mrg.a, "Dataset A")->required();
  merge_cmd->add_option("--b", mrg.b, "Dataset B")->required();
  merge_cmd->add_option("--det-on-a", mrg.det_on_a, "B's detector on A's images")
      ->required()
      ->expected(1);
  merge_cmd->add_option("--det-on-b", mrg.det_on_b, "A's detector on B's images")
      ->required()
      ->expected(1);
  merge_cmd->add_option("--config", mrg.config, "Pipeline TOML");
  merge_cmd->add_option("--out", mrg.out, "Merged annotation file")->required();
  merge_cmd->add_option("--stats", mrg.stats, "Merge statistics JSON");

  MergeArgs itr;
  auto* iterate_cmd = app.add_subcommand("iterate", "Repeat the merge with per-round detections");
  iterate_cmd->add_option("--a", itr.a, "Dataset A")->required();
  iterate_cmd->add_option("--b", itr.b, "Dataset B")->required();
  iterate_cmd->add_option("--det-on-a", itr.det_on_a, "Detections on A, one per round, in order")
      ->required();
  iterate_cmd->add_option("--det-on-b", itr.det_on_b, "Detections on B, one per round, in order")
      ->required();
  iterate_cmd->add_option("--rounds", itr.rounds, "Number of rounds (default: config)");
  iterate_cmd->add_option("--config", itr.config, "Pipeline TOML");
  iterate_cmd->add_option("--out", itr.out, "Final merged file; rounds go to <stem>.roundK")
      ->required();
  iterate_cmd->add_option("--stats", itr.stats, "Per-round statistics JSON");

  AssignArgs asg;
  auto* assign_cmd = app.add_subcommand("assign", "Dump anchor labels and ROI targets");
  assign_cmd->add_option("--dataset", asg.dataset, "Annotation file (may hold predictions)")
      ->required();
  assign_cmd->add_option("--rois", asg.rois, "ROI boxes as a detection file (default: anchors)");
  assign_cmd->add_option("--image", asg.images, "Restrict to these image ids");
  assign_cmd->add_option("--stride", asg.stride, "Anchor grid stride")->capture_default_str();
  assign_cmd->add_option("--sizes", asg.sizes, "Anchor sizes")->capture_default_str();
  assign_cmd->add_option("--ratios", asg.ratios, "Anchor aspect ratios h/w")->capture_default_str();
  assign_cmd->add_option("--config", asg.config, "Pipeline TOML ([assignment])");
  assign_cmd->add_option("--out", asg.out, "Assignment dump JSON")->required();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "AP@IoU and oLRP per category");
  eval_cmd->add_option("--dets", ev.dets, "Detection file")->required();
  eval_cmd->add_option("--gt", ev.gt, "Ground-truth annotation file")->required();
  eval_cmd->add_option("--iou", ev.iou, "IoU threshold for a true positive")->capture_default_str();
  eval_cmd->add_option("--tau", ev.tau, "LRP localisation threshold")->capture_default_str();
  eval_cmd->add_option("--out", ev.out, "Report JSON (default: stdout)");

  GradArgs gc;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the loss gradient");
  grad_cmd->add_option("--trials", gc.trials, "Random batches")->capture_default_str();
  grad_cmd->add_option("--step", gc.step, "Central-difference step")->capture_default_str();
  grad_cmd->add_option("--tolerance", gc.tolerance, "Max relative error")->capture_default_str();

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Run the synthetic experiment");
  sim_cmd->add_option("--config", sim.config, "Experiment TOML (default experiment if omitted)");
  sim_cmd->add_option("--out", sim.out, "Report JSON")->required();
  sim_cmd->add_option("--emit-dir", sim.emit_dir,
                      "Also write hidden/a/b datasets and the detection files here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return kExitError;
  }

  try {
    configure_logging(g);
    if (*select_cmd) run_select(g, sel);
    if (*merge_cmd) run_merge(g, mrg, false);
    if (*iterate_cmd) run_merge(g, itr, true);
    if (*assign_cmd) run_assign(g, asg);
    if (*eval_cmd) run_eval(g, ev);
    if (*grad_cmd) return run_gradcheck(g, gc);
    if (*sim_cmd) run_simulate(g, sim);
  } catch (const Error& e) {
    print_error(to_string(e.kind()), e.what());
    return kExitError;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return kExitError;
  }
  return 0;
}
