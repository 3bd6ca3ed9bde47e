#include "cxr/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <sstream>

#include "cxr/checkpoint.hpp"
#include "cxr/error.hpp"
#include "cxr/parallel.hpp"
#include "cxr/rng.hpp"

namespace cxr {

namespace fs = std::filesystem;

void Ensemble::validate() const {
  if (members.size() != kEnsembleSize) {
    throw DataError("ensemble needs " + std::to_string(kEnsembleSize) + " members, got " +
                    std::to_string(members.size()));
  }
  for (std::size_t i = 1; i < members.size(); ++i) {
    if (members[i].layers() != members[0].layers() ||
        members[i].input_shape() != members[0].input_shape()) {
      throw ShapeError("ensemble member " + std::to_string(i + 1) +
                       " has a different architecture from member 1");
    }
  }
}

std::vector<Prediction> average_predictions(std::span<const std::vector<Prediction>> per_member) {
  if (per_member.empty()) throw DataError("average_predictions: no members");
  const std::size_t n = per_member[0].size();
  for (const auto& m : per_member) {
    if (m.size() != n) throw ShapeError("average_predictions: members disagree on image count");
  }
  const double k = static_cast<double>(per_member.size());
  std::vector<Prediction> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 2; ++c) {
      double s = 0.0;
      for (const auto& m : per_member) s += m[i].p[c];
      out[i].p[c] = s / k;
    }
  }
  return out;
}

std::vector<Prediction> ensemble_predict(const Ensemble& ensemble, const Tensor<float>& images) {
  ensemble.validate();
  std::vector<std::vector<Prediction>> per_member;
  per_member.reserve(ensemble.members.size());
  for (const auto& m : ensemble.members) per_member.push_back(predict(m, images));
  return average_predictions(per_member);
}

Ensemble load_ensemble(const fs::path& division_dir, std::size_t division) {
  Ensemble ens;
  ens.division = division;
  for (std::size_t s = 1; s <= kEnsembleSize; ++s) {
    Checkpoint ck = load_checkpoint(division_dir / std::to_string(s) / "model.ckpt");
    if (s == 1) ens.architecture = ck.architecture;
    ens.members.push_back(std::move(ck.model));
    ens.member_seeds.push_back(ck.seed);
  }
  ens.validate();
  return ens;
}

MemberSeeds member_seeds(std::uint64_t experiment_seed, std::size_t division, std::size_t split) {
  const std::uint64_t base = derive_seed(experiment_seed, {division, split});
  return {derive_seed(base, {1}), derive_seed(base, {2}), derive_seed(base, {3})};
}

void ExperimentConfig::validate() const {
  training.validate();
  if (augmentation) augmentation->validate();
  if (image_size < 8) throw DataError("image size must be at least 8");
}

std::string MetricRow::model_name() const {
  return split == 0 ? std::string("ensemble") : "split" + std::to_string(split);
}

SummaryStat summarize(std::span<const double> values) {
  SummaryStat s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

std::vector<MetricRow> ExperimentReport::member_rows() const {
  std::vector<MetricRow> out;
  for (const auto& r : rows) {
    if (r.split != 0) out.push_back(r);
  }
  return out;
}

std::vector<MetricRow> ExperimentReport::ensemble_rows() const {
  std::vector<MetricRow> out;
  for (const auto& r : rows) {
    if (r.split == 0) out.push_back(r);
  }
  return out;
}

std::vector<DivisionSummary> ExperimentReport::divisions() const {
  std::vector<DivisionSummary> out;
  for (const auto& e : ensemble_rows()) {
    std::vector<double> aucs, tprs;
    for (const auto& r : rows) {
      if (r.division == e.division && r.split != 0) {
        aucs.push_back(r.auc);
        tprs.push_back(r.tpr);
      }
    }
    out.push_back({e.division, summarize(aucs), summarize(tprs), e.auc, e.tpr});
  }
  return out;
}

namespace {

template <typename F>
SummaryStat across_divisions(const std::vector<DivisionSummary>& divs, F pick) {
  std::vector<double> v;
  for (const auto& d : divs) v.push_back(pick(d));
  return summarize(v);
}

std::string optional_number(const std::optional<double>& v) {
  return v ? format_number(*v) : std::string();
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string plus_minus(const SummaryStat& s) {
  std::string out = fixed(s.mean, 4);
  if (s.stddev) out += " +/- " + fixed(*s.stddev, 4);
  return out;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace

SummaryStat ExperimentReport::average_member_auc() const {
  return across_divisions(divisions(), [](const DivisionSummary& d) { return d.member_auc.mean; });
}
SummaryStat ExperimentReport::average_member_tpr() const {
  return across_divisions(divisions(), [](const DivisionSummary& d) { return d.member_tpr.mean; });
}
SummaryStat ExperimentReport::average_ensemble_auc() const {
  return across_divisions(divisions(), [](const DivisionSummary& d) { return d.ensemble_auc; });
}
SummaryStat ExperimentReport::average_ensemble_tpr() const {
  return across_divisions(divisions(), [](const DivisionSummary& d) { return d.ensemble_tpr; });
}

std::string ExperimentReport::to_csv() const {
  std::string out = "division,model,auc,tpr\n";
  for (const auto& r : rows) {
    out += std::to_string(r.division) + "," + r.model_name() + "," + format_number(r.auc) + "," +
           format_number(r.tpr) + "\n";
  }
  return out;
}

std::string ExperimentReport::summary_csv() const {
  std::string out =
      "division,member_auc_mean,member_auc_std,member_tpr_mean,member_tpr_std,"
      "ensemble_auc,ensemble_auc_std,ensemble_tpr,ensemble_tpr_std\n";
  for (const auto& d : divisions()) {
    out += std::to_string(d.division) + "," + format_number(d.member_auc.mean) + "," +
           optional_number(d.member_auc.stddev) + "," + format_number(d.member_tpr.mean) + "," +
           optional_number(d.member_tpr.stddev) + "," + format_number(d.ensemble_auc) + ",," +
           format_number(d.ensemble_tpr) + ",\n";
  }
  const auto ma = average_member_auc(), mt = average_member_tpr();
  const auto ea = average_ensemble_auc(), et = average_ensemble_tpr();
  out += "average," + format_number(ma.mean) + "," + optional_number(ma.stddev) + "," +
         format_number(mt.mean) + "," + optional_number(mt.stddev) + "," + format_number(ea.mean) +
         "," + optional_number(ea.stddev) + "," + format_number(et.mean) + "," +
         optional_number(et.stddev) + "\n";
  return out;
}

std::string ExperimentReport::to_table() const {
  std::ostringstream os;
  const auto divs = divisions();
  os << architecture << " members (mean +/- sample std over splits)\n";
  os << pad("Partition", 12) << pad("AUC", 22) << "TPR\n";
  for (const auto& d : divs) {
    os << pad(std::to_string(d.division), 12) << pad(plus_minus(d.member_auc), 22)
       << plus_minus(d.member_tpr) << "\n";
  }
  os << pad("Average", 12) << pad(plus_minus(average_member_auc()), 22)
     << plus_minus(average_member_tpr()) << "\n\n";
  os << architecture << " ensembles\n";
  os << pad("Partition", 12) << pad("AUC", 22) << "TPR\n";
  for (const auto& d : divs) {
    os << pad(std::to_string(d.division), 12) << pad(fixed(d.ensemble_auc, 4), 22)
       << fixed(d.ensemble_tpr, 4) << "\n";
  }
  os << pad("Average", 12) << pad(plus_minus(average_ensemble_auc()), 22)
     << plus_minus(average_ensemble_tpr()) << "\n";
  return os.str();
}

std::vector<MetricRow> DivisionResult::rows() const {
  std::vector<MetricRow> out;
  for (const auto& m : members) out.push_back(m.metrics);
  out.push_back(ensemble_metrics);
  return out;
}

void write_report(const fs::path& dir, const ExperimentReport& report, const std::string& prefix) {
  fs::create_directories(dir);
  write_file_atomic(dir / (prefix + "report.csv"), report.to_csv());
  write_file_atomic(dir / (prefix + "summary.csv"), report.summary_csv());
  write_file_atomic(dir / (prefix + "report.txt"), report.to_table());
}

namespace {

MetricRow score(std::size_t division, std::size_t split, std::span<const Prediction> preds,
                std::span<const Label> labels) {
  const auto scores = consolidation_scores(preds);
  return {division, split, auc(roc_curve(scores, labels)), tpr_at_threshold(scores, labels)};
}

std::string metrics_csv(std::span<const MetricRow> rows) {
  std::string out = "model,auc,tpr\n";
  for (const auto& r : rows) {
    out += r.model_name() + "," + format_number(r.auc) + "," + format_number(r.tpr) + "\n";
  }
  return out;
}

[[noreturn]] void rethrow_tagged(const std::string& tag) {
  try {
    throw;
  } catch (const NumericError& e) {
    throw NumericError(tag + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(tag + ": " + e.what());
  } catch (const ShapeError& e) {
    throw ShapeError(tag + ": " + e.what());
  } catch (const IoError& e) {
    throw IoError(tag + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(tag + ": " + e.what());
  }
}

class Logger {
 public:
  explicit Logger(const ExperimentConfig& cfg) : sink_(cfg.log) {}
  void operator()(const std::string& line) const {
    if (!sink_) return;
    std::lock_guard lock(mutex_);
    sink_(line);
  }

 private:
  std::function<void(const std::string&)> sink_;
  mutable std::mutex mutex_;
};

MemberResult train_member(const ImageSource& source, const Division& division, std::size_t d,
                          std::size_t s, const ArchitectureSpec& spec, const EvalSet& test,
                          std::span<const Label> test_labels, const ExperimentConfig& cfg,
                          const Logger& log) {
  const std::string tag = "division " + std::to_string(d) + " split " + std::to_string(s);
  try {
    const std::size_t data_split = cfg.shared_member_seed ? 1 : s;
    if (division.splits.size() < data_split) throw DataError("plan has no such split");
    const TrainValSplit& tv = division.splits[data_split - 1];
    const MemberSeeds seeds = member_seeds(cfg.seed, d, data_split);

    NetworkShape shape = network_shape(spec);
    shape.height = shape.width = cfg.image_size;
    Model<float> model = build_network<float>(shape, seeds.init);

    BatchIterator batches(source, tv.train, cfg.training.batch_size, seeds.shuffle,
                          cfg.augmentation);
    const EvalSet validation = make_eval_set(source, tv.validation);
    if (validation.images.dim(1) != cfg.image_size || validation.images.dim(2) != cfg.image_size) {
      throw ShapeError("images are " + shape_string(validation.images.shape()) +
                       ", expected size " + std::to_string(cfg.image_size));
    }
    TrainingConfig tc = cfg.training;
    tc.seed = seeds.dropout;
    TrainResult trained = train(std::move(model), batches, validation, tc);

    MemberResult out;
    out.split = s;
    out.seed = seeds.init;
    out.model = std::move(trained.model);
    out.history = std::move(trained.history);
    out.test_predictions = predict(out.model, test.images);
    out.metrics = score(d, s, out.test_predictions, test_labels);
    log(tag + ": best epoch " + std::to_string(out.history.best_epoch) + " of " +
        std::to_string(out.history.epochs.size()) + ", test AUC " + format_number(out.metrics.auc));

    if (!cfg.output_dir.empty()) {
      const fs::path dir = cfg.output_dir / std::to_string(d) / std::to_string(s);
      fs::create_directories(dir);
      Checkpoint ck{out.model, spec.name, seeds.init, {}};
      ck.metadata["division"] = std::to_string(d);
      ck.metadata["split"] = std::to_string(s);
      ck.metadata["best_epoch"] = std::to_string(out.history.best_epoch);
      ck.metadata["experiment_seed"] = std::to_string(cfg.seed);
      save_checkpoint(dir / "model.ckpt", ck);
      write_file_atomic(dir / "history.csv", out.history.to_csv());
      const auto scores = consolidation_scores(out.test_predictions);
      write_file_atomic(dir / "roc.csv", format_roc_csv(roc_curve(scores, test_labels)));
      const MetricRow row = out.metrics;
      write_file_atomic(dir / "metrics.csv", metrics_csv(std::span(&row, 1)));
    }
    return out;
  } catch (...) {
    rethrow_tagged(tag);
  }
}

DivisionResult assemble_division(std::size_t d, const ArchitectureSpec& spec,
                                 std::vector<MemberResult> members, std::vector<Label> labels,
                                 const ExperimentConfig& cfg) {
  DivisionResult out;
  out.division = d;
  out.test_labels = std::move(labels);
  out.ensemble.architecture = spec.name;
  out.ensemble.division = d;
  std::vector<std::vector<Prediction>> per_member;
  for (auto& m : members) {
    out.ensemble.members.push_back(m.model);
    out.ensemble.member_seeds.push_back(m.seed);
    per_member.push_back(m.test_predictions);
  }
  out.members = std::move(members);
  out.ensemble.validate();
  out.ensemble_predictions = average_predictions(per_member);
  out.ensemble_metrics = score(d, 0, out.ensemble_predictions, out.test_labels);

  if (!cfg.output_dir.empty()) {
    const fs::path dir = cfg.output_dir / std::to_string(d);
    const auto scores = consolidation_scores(out.ensemble_predictions);
    write_file_atomic(dir / "ensemble_roc.csv", format_roc_csv(roc_curve(scores, out.test_labels)));
    write_file_atomic(dir / "metrics.csv", metrics_csv(out.rows()));
    std::string preds = "row,label";
    for (const auto& m : out.members) preds += ",p_split" + std::to_string(m.split);
    preds += ",p_ensemble\n";
    for (std::size_t i = 0; i < out.test_labels.size(); ++i) {
      preds += std::to_string(i) + "," + std::to_string(class_index(out.test_labels[i]));
      for (const auto& m : out.members) preds += "," + format_number(m.test_predictions[i].p[1]);
      preds += "," + format_number(out.ensemble_predictions[i].p[1]) + "\n";
    }
    write_file_atomic(dir / "test_predictions.csv", preds);
  }
  return out;
}

void check_division(const Division& division, std::size_t d) {
  if (division.splits.size() != kSplitsPerDivision) {
    throw DataError("division " + std::to_string(d) + " has " +
                    std::to_string(division.splits.size()) + " splits, expected " +
                    std::to_string(kSplitsPerDivision));
  }
}

}  // namespace

DivisionResult run_division(const ImageSource& source, const Division& division,
                            std::size_t division_index, const ArchitectureSpec& spec,
                            const ExperimentConfig& cfg) {
  cfg.validate();
  check_division(division, division_index);
  const Logger log(cfg);
  const EvalSet test = make_eval_set(source, division.test);
  std::vector<MemberResult> members(kEnsembleSize);
  parallel_for(kEnsembleSize, cfg.jobs, [&](std::size_t i) {
    members[i] = train_member(source, division, division_index, i + 1, spec, test, test.labels,
                              cfg, log);
  });
  return assemble_division(division_index, spec, std::move(members), test.labels, cfg);
}

MemberResult run_member(const ImageSource& source, const Division& division, std::size_t d,
                        std::size_t s, const ArchitectureSpec& spec, const ExperimentConfig& cfg) {
  cfg.validate();
  if (s < 1 || s > kEnsembleSize) {
    throw DataError("split must be 1.." + std::to_string(kEnsembleSize) + ", got " + std::to_string(s));
  }
  const Logger log(cfg);
  const EvalSet test = make_eval_set(source, division.test);
  return train_member(source, division, d, s, spec, test, test.labels, cfg, log);
}

ExperimentReport run_experiment(const ImageSource& source, const ArchitectureSpec& spec,
                                const ExperimentConfig& cfg, const PartitionPlan& plan) {
  cfg.validate();
  validate_plan(plan);
  if (plan.item_count != source.size()) {
    throw DataError("plan covers " + std::to_string(plan.item_count) + " items but the dataset has " +
                    std::to_string(source.size()));
  }
  for (std::size_t d = 0; d < plan.divisions.size(); ++d) check_division(plan.divisions[d], d + 1);

  const bool write = !cfg.output_dir.empty();
  const fs::path marker = cfg.output_dir / "INCOMPLETE";
  if (write) {
    fs::create_directories(cfg.output_dir);
    fs::remove(cfg.output_dir / "FAILED");
    write_file_atomic(marker, "experiment in progress or aborted; results are partial\n");
    save_plan(cfg.output_dir / "plan.json", plan);
  }
  try {
    const Logger log(cfg);
    const std::size_t nd = plan.divisions.size();
    std::vector<EvalSet> tests;
    tests.reserve(nd);
    for (const auto& division : plan.divisions) tests.push_back(make_eval_set(source, division.test));

    std::vector<MemberResult> members(nd * kEnsembleSize);
    parallel_for(members.size(), cfg.jobs, [&](std::size_t job) {
      const std::size_t d = job / kEnsembleSize, s = job % kEnsembleSize;
      members[job] = train_member(source, plan.divisions[d], d + 1, s + 1, spec, tests[d],
                                  tests[d].labels, cfg, log);
    });

    ExperimentReport report;
    report.architecture = spec.name;
    for (std::size_t d = 0; d < nd; ++d) {
      std::vector<MemberResult> group(std::make_move_iterator(members.begin() + d * kEnsembleSize),
                                      std::make_move_iterator(members.begin() + (d + 1) * kEnsembleSize));
      const DivisionResult result =
          assemble_division(d + 1, spec, std::move(group), tests[d].labels, cfg);
      for (const auto& row : result.rows()) report.rows.push_back(row);
    }
    if (write) {
      write_report(cfg.output_dir, report);
      fs::remove(marker);
    }
    return report;
  } catch (const std::exception& e) {
    if (write) write_file_atomic(cfg.output_dir / "FAILED", std::string(e.what()) + "\n");
    throw;
  }
}

ExperimentReport evaluate_experiment(const ImageSource& source, const PartitionPlan& plan,
                                     const fs::path& run_dir) {
  validate_plan(plan);
  ExperimentReport report;
  for (std::size_t d = 1; d <= plan.divisions.size(); ++d) {
    const Ensemble ens = load_ensemble(run_dir / std::to_string(d), d);
    if (d == 1) report.architecture = ens.architecture;
    const EvalSet test = make_eval_set(source, plan.divisions[d - 1].test);
    std::vector<std::vector<Prediction>> per_member;
    for (std::size_t s = 0; s < ens.members.size(); ++s) {
      per_member.push_back(predict(ens.members[s], test.images));
      report.rows.push_back(score(d, s + 1, per_member.back(), test.labels));
    }
    report.rows.push_back(score(d, 0, average_predictions(per_member), test.labels));
  }
  return report;
}

}  // namespace cxr
