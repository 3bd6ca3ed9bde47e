#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>

#include <nlohmann/json.hpp>

#include "cxr/architecture.hpp"
#include "cxr/checkpoint.hpp"
#include "cxr/dataset.hpp"
#include "cxr/ensemble.hpp"
#include "cxr/error.hpp"
#include "cxr/explain.hpp"
#include "cxr/partition.hpp"
#include "cxr/synthetic.hpp"

namespace cxr::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Every setting is optional so that explicit flags, the config file and the
// built-in defaults can be layered in that order.
struct Settings {
  std::optional<fs::path> manifest, plan, out, run, models, image, colormap;
  std::optional<std::string> arch;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs, epochs, patience, batch_size, image_size, divisions, division,
      split, upscale, count;
  std::optional<double> learning_rate, alpha;
  std::optional<bool> augment, flip, quiet;
  std::optional<double> shear, zoom, rotation, width_shift, height_shift;
};

template <typename T>
void fill(std::optional<T>& slot, const std::optional<T>& fallback) {
  if (!slot) slot = fallback;
}

void merge(Settings& s, const Settings& f) {
  fill(s.manifest, f.manifest);
  fill(s.plan, f.plan);
  fill(s.out, f.out);
  fill(s.run, f.run);
  fill(s.models, f.models);
  fill(s.image, f.image);
  fill(s.colormap, f.colormap);
  fill(s.arch, f.arch);
  fill(s.seed, f.seed);
  fill(s.jobs, f.jobs);
  fill(s.epochs, f.epochs);
  fill(s.patience, f.patience);
  fill(s.batch_size, f.batch_size);
  fill(s.image_size, f.image_size);
  fill(s.divisions, f.divisions);
  fill(s.division, f.division);
  fill(s.split, f.split);
  fill(s.upscale, f.upscale);
  fill(s.count, f.count);
  fill(s.learning_rate, f.learning_rate);
  fill(s.alpha, f.alpha);
  fill(s.augment, f.augment);
  fill(s.flip, f.flip);
  fill(s.quiet, f.quiet);
  fill(s.shear, f.shear);
  fill(s.zoom, f.zoom);
  fill(s.rotation, f.rotation);
  fill(s.width_shift, f.width_shift);
  fill(s.height_shift, f.height_shift);
}

template <typename T>
void read_key(const json& j, const char* key, std::optional<T>& slot) {
  if (j.contains(key)) slot = j.at(key).get<T>();
}

void read_path(const json& j, const char* key, const fs::path& base, std::optional<fs::path>& slot) {
  if (!j.contains(key)) return;
  fs::path p = j.at(key).get<std::string>();
  slot = p.is_relative() ? base / p : p;
}

Settings load_config(const fs::path& path) {
  static const std::vector<std::string> known = {
      "manifest", "plan",       "out",        "run",      "models",       "image",
      "colormap", "arch",       "seed",       "jobs",     "epochs",       "patience",
      "batch_size", "image_size", "divisions", "division", "split",       "upscale",
      "count",    "learning_rate", "alpha",   "augment",  "flip",         "quiet",
      "augmentation"};
  Settings s;
  try {
    const json j = json::parse(read_file(path));
    if (!j.is_object()) throw DataError("top level must be an object");
    for (const auto& [key, value] : j.items()) {
      if (std::find(known.begin(), known.end(), key) == known.end()) {
        throw DataError("unknown key '" + key + "'");
      }
    }
    const fs::path base = path.parent_path();
    read_path(j, "manifest", base, s.manifest);
    read_path(j, "plan", base, s.plan);
    read_path(j, "out", base, s.out);
    read_path(j, "run", base, s.run);
    read_path(j, "models", base, s.models);
    read_path(j, "image", base, s.image);
    read_path(j, "colormap", base, s.colormap);
    read_key(j, "arch", s.arch);
    read_key(j, "seed", s.seed);
    read_key(j, "jobs", s.jobs);
    read_key(j, "epochs", s.epochs);
    read_key(j, "patience", s.patience);
    read_key(j, "batch_size", s.batch_size);
    read_key(j, "image_size", s.image_size);
    read_key(j, "divisions", s.divisions);
    read_key(j, "division", s.division);
    read_key(j, "split", s.split);
    read_key(j, "upscale", s.upscale);
    read_key(j, "count", s.count);
    read_key(j, "learning_rate", s.learning_rate);
    read_key(j, "alpha", s.alpha);
    read_key(j, "augment", s.augment);
    read_key(j, "flip", s.flip);
    read_key(j, "quiet", s.quiet);
    if (j.contains("augmentation")) {
      const json& a = j.at("augmentation");
      for (const auto& [key, value] : a.items()) {
        if (key != "shear" && key != "zoom" && key != "rotation" && key != "width_shift" &&
            key != "height_shift") {
          throw DataError("unknown augmentation key '" + key + "'");
        }
      }
      read_key(a, "shear", s.shear);
      read_key(a, "zoom", s.zoom);
      read_key(a, "rotation", s.rotation);
      read_key(a, "width_shift", s.width_shift);
      read_key(a, "height_shift", s.height_shift);
    }
  } catch (const json::exception& e) {
    throw DataError("config " + path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError("config " + path.string() + ": " + e.what());
  }
  return s;
}

template <typename T>
void option(CLI::App* app, const std::string& name, std::optional<T>& slot, const std::string& help) {
  app->add_option_function<T>(name, [&slot](const T& v) { slot = v; }, help);
}

template <typename T>
const T& need(const std::optional<T>& v, const std::string& flag) {
  if (!v) throw DataError("missing required setting " + flag);
  return *v;
}

struct Command {
  std::string name;
  Settings flags;
  std::optional<fs::path> config;
};

void add_config(CLI::App* app, Command& cmd) {
  app->add_option_function<std::string>(
      "--config", [&cmd](const std::string& v) { cmd.config = v; },
      "JSON settings file; explicit flags take precedence over it");
}

void add_training(CLI::App* app, Settings& s) {
  option(app, "--arch", s.arch, "architecture name, Arch1..Arch6");
  option(app, "--seed", s.seed, "experiment seed");
  option(app, "--epochs", s.epochs, "maximum epochs (default 150)");
  option(app, "--patience", s.patience, "early-stopping patience (default 15)");
  option(app, "--batch-size", s.batch_size, "mini-batch size (default 32)");
  option(app, "--lr", s.learning_rate, "Adam learning rate (default 1e-4)");
  option(app, "--image-size", s.image_size, "model input side in pixels (default 150)");
  app->add_flag_callback("--no-augment", [&s] { s.augment = false; }, "disable augmentation");
  app->add_flag_callback("--no-flip", [&s] { s.flip = false; }, "disable horizontal flips");
  app->add_flag_callback("--quiet", [&s] { s.quiet = true; }, "no progress lines on stderr");
}

ExperimentConfig experiment_config(const Settings& s, std::ostream& err) {
  ExperimentConfig cfg;
  cfg.seed = s.seed.value_or(0);
  cfg.jobs = s.jobs.value_or(1);
  cfg.image_size = s.image_size.value_or(kImageSize);
  if (s.epochs) cfg.training.max_epochs = *s.epochs;
  if (s.patience) cfg.training.patience = *s.patience;
  if (s.batch_size) cfg.training.batch_size = *s.batch_size;
  if (s.learning_rate) cfg.training.learning_rate = *s.learning_rate;
  if (!s.augment.value_or(true)) {
    cfg.augmentation.reset();
  } else {
    AugmentationConfig& a = *cfg.augmentation;
    if (s.shear) a.shear = *s.shear;
    if (s.zoom) a.zoom = *s.zoom;
    if (s.rotation) a.rotation = *s.rotation;
    if (s.width_shift) a.width_shift = *s.width_shift;
    if (s.height_shift) a.height_shift = *s.height_shift;
    a.horizontal_flip = s.flip.value_or(true);
    a.validate();
  }
  cfg.training.validate();
  if (!s.quiet.value_or(false)) {
    cfg.log = [&err](const std::string& line) { err << line << '\n' << std::flush; };
  }
  return cfg;
}

PartitionPlan load_matching_plan(const fs::path& path, const DatasetManifest& manifest) {
  PartitionPlan plan = load_plan(path);
  if (plan.item_count != manifest.size()) {
    throw DataError(path.string() + " covers " + std::to_string(plan.item_count) +
                    " items but the manifest lists " + std::to_string(manifest.size()));
  }
  return plan;
}

int cmd_synthgen(const Settings& s, std::ostream& out) {
  BlobDatasetConfig cfg;
  cfg.count = s.count.value_or(cfg.count);
  cfg.size = s.image_size.value_or(cfg.size);
  cfg.seed = s.seed.value_or(0);
  const fs::path dir = need(s.out, "--out");
  const DatasetManifest m = write_blob_dataset(cfg, dir);
  out << "wrote " << m.size() << " images and " << (dir / "manifest.csv").string() << '\n';
  return 0;
}

int cmd_split(const Settings& s, std::ostream& out) {
  const DatasetManifest manifest = load_manifest(need(s.manifest, "--manifest"));
  const fs::path path = need(s.out, "--out");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_plan(path, build_partition_plan(manifest, s.seed.value_or(0)));
  out << "wrote " << path.string() << '\n';
  return 0;
}

int cmd_train(const Settings& s, std::ostream& out, std::ostream& err) {
  const DatasetManifest manifest = load_manifest(need(s.manifest, "--manifest"));
  const PartitionPlan plan = load_matching_plan(need(s.plan, "--plan"), manifest);
  const ArchitectureSpec spec = architecture_by_name(need(s.arch, "--arch"));
  ExperimentConfig cfg = experiment_config(s, err);
  cfg.output_dir = need(s.out, "--out");
  const std::size_t d = s.division.value_or(1), sp = s.split.value_or(1);
  if (d < 1 || d > plan.divisions.size()) {
    throw DataError("--division must be 1.." + std::to_string(plan.divisions.size()));
  }
  const ManifestImageSource source(manifest, cfg.image_size, cfg.image_size);
  const MemberResult r = run_member(source, plan.divisions[d - 1], d, sp, spec, cfg);
  out << "division " << d << " split " << sp << ": best epoch " << r.history.best_epoch
      << ", test AUC " << format_number(r.metrics.auc) << ", TPR " << format_number(r.metrics.tpr)
      << '\n';
  return 0;
}

int cmd_experiment(const Settings& s, std::ostream& out, std::ostream& err) {
  const DatasetManifest manifest = load_manifest(need(s.manifest, "--manifest"));
  PartitionPlan plan = s.plan ? load_matching_plan(*s.plan, manifest)
                              : build_partition_plan(manifest, s.seed.value_or(0));
  if (s.divisions) {
    if (*s.divisions < 1 || *s.divisions > plan.divisions.size()) {
      throw DataError("--divisions must be 1.." + std::to_string(plan.divisions.size()));
    }
    plan.divisions.resize(*s.divisions);
  }
  const ArchitectureSpec spec = architecture_by_name(need(s.arch, "--arch"));
  ExperimentConfig cfg = experiment_config(s, err);
  cfg.output_dir = need(s.out, "--out");
  const ManifestImageSource source(manifest, cfg.image_size, cfg.image_size);
  const ExperimentReport report = run_experiment(source, spec, cfg, plan);
  out << report.to_table();
  return 0;
}

int cmd_evaluate(const Settings& s, std::ostream& out) {
  const fs::path run = need(s.run, "--run");
  const DatasetManifest manifest = load_manifest(need(s.manifest, "--manifest"));
  const PartitionPlan plan = load_matching_plan(s.plan.value_or(run / "plan.json"), manifest);
  // The stored checkpoints fix the input resolution.
  const Checkpoint first = load_checkpoint(run / "1" / "1" / "model.ckpt");
  const std::size_t size = first.model.input_shape().at(0);
  const ManifestImageSource source(manifest, size, size);
  const ExperimentReport report = evaluate_experiment(source, plan, run);
  const fs::path dir = s.out.value_or(run / "evaluation");
  fs::create_directories(dir);
  write_report(dir, report);
  out << report.to_table();
  return 0;
}

int cmd_explain(const Settings& s, std::ostream& out) {
  fs::path models;
  std::size_t division = 0;
  if (s.models) {
    models = *s.models;
  } else {
    division = s.division.value_or(1);
    models = need(s.run, "--run or --models") / std::to_string(division);
  }
  const Ensemble ensemble = load_ensemble(models, division);
  ExplainOptions opts;
  opts.upscale = s.upscale.value_or(1);
  opts.alpha = s.alpha.value_or(opts.alpha);
  opts.jobs = s.jobs.value_or(1);
  if (s.colormap) opts.colormap = Colormap::load(*s.colormap);
  const ExplainResult r = explain(ensemble, need(s.image, "--image"), need(s.out, "--out"), opts);
  out << "p_non_consolidation " << format_number(r.bundle.probabilities.p[0])
      << "\np_consolidation " << format_number(r.bundle.probabilities.p[1]) << '\n';
  for (const auto& p : r.images) out << p.string() << '\n';
  out << r.sidecar.string() << '\n';
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Ensemble CNN training, evaluation and saliency explanations", "cxrens"};
  app.require_subcommand(1);
  std::vector<std::unique_ptr<Command>> commands;
  auto sub = [&](const std::string& name, const std::string& help) {
    commands.push_back(std::make_unique<Command>());
    commands.back()->name = name;
    CLI::App* a = app.add_subcommand(name, help);
    add_config(a, *commands.back());
    return std::pair<CLI::App*, Settings*>{a, &commands.back()->flags};
  };

  {
    auto [a, s] = sub("synthgen", "write the synthetic blob dataset and its manifest");
    option(a, "--out", s->out, "output directory");
    option(a, "--count", s->count, "number of images (default 400)");
    option(a, "--image-size", s->image_size, "image side (default 150)");
    option(a, "--seed", s->seed, "generator seed");
  }
  {
    auto [a, s] = sub("split", "build the 5x5 stratified partition plan");
    option(a, "--manifest", s->manifest, "manifest CSV (path,label)");
    option(a, "--seed", s->seed, "plan seed");
    option(a, "--out", s->out, "plan file to write");
  }
  {
    auto [a, s] = sub("train", "train one ensemble member");
    option(a, "--manifest", s->manifest, "manifest CSV");
    option(a, "--plan", s->plan, "partition plan file");
    option(a, "--division", s->division, "division, 1-based (default 1)");
    option(a, "--split", s->split, "split, 1-based (default 1)");
    option(a, "--out", s->out, "run directory");
    add_training(a, *s);
  }
  {
    auto [a, s] = sub("experiment", "train and score five-member ensembles for every division");
    option(a, "--manifest", s->manifest, "manifest CSV");
    option(a, "--plan", s->plan, "partition plan file (built from --seed when absent)");
    option(a, "--divisions", s->divisions, "run only the first N divisions");
    option(a, "--jobs", s->jobs, "parallel member jobs (default 1)");
    option(a, "--out", s->out, "run directory");
    add_training(a, *s);
  }
  {
    auto [a, s] = sub("evaluate", "re-score the checkpoints of a finished experiment");
    option(a, "--manifest", s->manifest, "manifest CSV");
    option(a, "--plan", s->plan, "partition plan file (default <run>/plan.json)");
    option(a, "--run", s->run, "experiment directory");
    option(a, "--out", s->out, "report directory (default <run>/evaluation)");
  }
  {
    auto [a, s] = sub("explain", "write saliency heatmaps for one image");
    option(a, "--run", s->run, "experiment directory");
    option(a, "--division", s->division, "division of --run (default 1)");
    option(a, "--models", s->models, "directory holding 1..5/model.ckpt");
    option(a, "--image", s->image, "input image");
    option(a, "--out", s->out, "output directory");
    option(a, "--upscale", s->upscale, "integer nearest-neighbour upscale (default 1)");
    option(a, "--alpha", s->alpha, "overlay opacity (default 0.5)");
    option(a, "--colormap", s->colormap, "256-line r,g,b table (default built-in jet)");
    option(a, "--jobs", s->jobs, "parallel members (default 1)");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  for (auto& cmd : commands) {
    CLI::App* a = app.get_subcommand(cmd->name);
    if (!a->parsed()) continue;
    try {
      Settings s = cmd->flags;
      if (cmd->config) merge(s, load_config(*cmd->config));
      if (cmd->name == "synthgen") return cmd_synthgen(s, out);
      if (cmd->name == "split") return cmd_split(s, out);
      if (cmd->name == "train") return cmd_train(s, out, err);
      if (cmd->name == "experiment") return cmd_experiment(s, out, err);
      if (cmd->name == "evaluate") return cmd_evaluate(s, out);
      if (cmd->name == "explain") return cmd_explain(s, out);
    } catch (const std::exception& e) {
      err << "cxrens " << cmd->name << ": " << e.what() << '\n';
      return 1;
    }
  }
  return 2;
}

}  // namespace cxr::cli
