#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cxr/architecture.hpp"
#include "cxr/augment.hpp"
#include "cxr/batch.hpp"
#include "cxr/metrics.hpp"
#include "cxr/model.hpp"
#include "cxr/partition.hpp"
#include "cxr/training.hpp"

namespace cxr {

inline constexpr std::size_t kEnsembleSize = 5;

struct Ensemble {
  std::string architecture;
  std::size_t division = 0;  // 1-based; 0 when not tied to a plan
  std::vector<Model<float>> members;
  std::vector<std::uint64_t> member_seeds;

  // Exactly kEnsembleSize members with identical layer stacks and input shapes.
  void validate() const;
};

// Element-wise mean of per-member predictions (any member count >= 1).
std::vector<Prediction> average_predictions(std::span<const std::vector<Prediction>> per_member);

// Throws DataError unless the ensemble has exactly five members.
std::vector<Prediction> ensemble_predict(const Ensemble& ensemble, const Tensor<float>& images);

// Members of division d (1-based) stored as <division_dir>/<s>/model.ckpt, s = 1..5.
Ensemble load_ensemble(const std::filesystem::path& division_dir, std::size_t division = 0);

struct MemberSeeds {
  std::uint64_t init;
  std::uint64_t shuffle;
  std::uint64_t dropout;
};

// Divisions and splits are 1-based here so a seed can be replayed from the
// directory layout alone.
MemberSeeds member_seeds(std::uint64_t experiment_seed, std::size_t division, std::size_t split);

struct ExperimentConfig {
  TrainingConfig training;  // training.seed is replaced by the member seed
  std::optional<AugmentationConfig> augmentation = AugmentationConfig{};
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::size_t image_size = kImageSize;  // must match the source images
  bool shared_member_seed = false;      // every member uses split 1 seeds and data
  std::filesystem::path output_dir;     // empty: nothing written
  std::function<void(const std::string&)> log;

  void validate() const;
};

struct MetricRow {
  std::size_t division = 0;  // 1-based
  std::size_t split = 0;     // 1-based member, 0 = ensemble
  double auc = 0.0;
  double tpr = 0.0;

  std::string model_name() const;  // "split<k>" or "ensemble"
  friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

struct SummaryStat {
  double mean = 0.0;
  std::optional<double> stddev;  // sample std; absent for fewer than two values
};

SummaryStat summarize(std::span<const double> values);

struct DivisionSummary {
  std::size_t division = 0;
  SummaryStat member_auc;
  SummaryStat member_tpr;
  double ensemble_auc = 0.0;
  double ensemble_tpr = 0.0;
};

struct ExperimentReport {
  std::string architecture;
  std::vector<MetricRow> rows;  // per division: members in split order, then the ensemble

  std::vector<MetricRow> member_rows() const;
  std::vector<MetricRow> ensemble_rows() const;
  std::vector<DivisionSummary> divisions() const;
  // Mean and std across divisions of the per-division member means.
  SummaryStat average_member_auc() const;
  SummaryStat average_member_tpr() const;
  SummaryStat average_ensemble_auc() const;
  SummaryStat average_ensemble_tpr() const;

  std::string to_csv() const;       // division,model,auc,tpr
  std::string summary_csv() const;  // one row per division plus "average"
  std::string to_table() const;     // member and ensemble tables, plain text
};

struct MemberResult {
  std::size_t split = 0;
  std::uint64_t seed = 0;
  Model<float> model;
  TrainingHistory history;
  std::vector<Prediction> test_predictions;
  MetricRow metrics;
};

struct DivisionResult {
  std::size_t division = 0;
  Ensemble ensemble;
  std::vector<MemberResult> members;
  std::vector<Label> test_labels;
  std::vector<Prediction> ensemble_predictions;
  MetricRow ensemble_metrics;

  std::vector<MetricRow> rows() const;
};

// Trains the five members of one division and scores them and their average
// on the division's test set. `division_index` is 1-based.
DivisionResult run_division(const ImageSource& source, const Division& division,
                            std::size_t division_index, const ArchitectureSpec& spec,
                            const ExperimentConfig& cfg);

// A single member (division d, split s; both 1-based) scored on the division's
// test set. Artifacts go to <output_dir>/<d>/<s>/ when an output directory is set.
MemberResult run_member(const ImageSource& source, const Division& division, std::size_t d,
                        std::size_t s, const ArchitectureSpec& spec, const ExperimentConfig& cfg);

// All divisions of the plan. With an output directory, an INCOMPLETE marker
// exists until every artifact is written; a failure leaves it in place next
// to FAILED holding the error text.
ExperimentReport run_experiment(const ImageSource& source, const ArchitectureSpec& spec,
                                const ExperimentConfig& cfg, const PartitionPlan& plan);

// Re-scores stored checkpoints under run_dir against the plan's test sets.
ExperimentReport evaluate_experiment(const ImageSource& source, const PartitionPlan& plan,
                                     const std::filesystem::path& run_dir);

// Files written for a finished experiment: report.csv, summary.csv, report.txt.
void write_report(const std::filesystem::path& dir, const ExperimentReport& report,
                  const std::string& prefix = "");

}  // namespace cxr
