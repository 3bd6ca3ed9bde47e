// Acceptance suite: one PASS/FAIL line per gating criterion. Exit status is
// nonzero when any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cli.hpp"
#include "cxr/architecture.hpp"
#include "cxr/checkpoint.hpp"
#include "cxr/ensemble.hpp"
#include "cxr/metrics.hpp"
#include "cxr/partition.hpp"
#include "cxr/saliency.hpp"
#include "cxr/synthetic.hpp"
#include "../support/gradcheck.hpp"
#include "../support/oracles.hpp"
#include "../support/plan_check.hpp"
#include "../support/tempdir.hpp"

namespace {

using namespace cxr;
using Clock = std::chrono::steady_clock;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---- 1. gradients ----------------------------------------------------------

// d logit_c / d input of the toy network against central differences.
double check_input_gradient(std::mt19937_64& rng) {
  Model<double> model = build_network<double>(testing::toy_shape(), rng());
  for (auto& p : model.parameters()) {
    for (auto& v : p.values()) v += std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
  }
  Tensor<double> x = testing::random_tensor<double>({12, 12, 1}, rng, 0.0, 2.0);
  const std::size_t c = rng() % 2;
  const Tensor<double> analytic = input_gradient(model, x, c);
  auto f = [&] {
    return forward<double>(model, x, Mode::inference, nullptr, nullptr, model.logits_end())[c];
  };
  return testing::relative_error(analytic, testing::numeric_gradient(x, f));
}

Outcome criterion_gradients() {
  const auto start = Clock::now();
  std::mt19937_64 rng(101);
  constexpr int kInstances = 100;
  constexpr double kTol = 1e-4;
  struct Check {
    std::string name;
    std::function<double()> run;
  };
  const std::vector<Check> checks = {
      {"conv_same", [&] { return testing::check_conv(rng, Padding::same); }},
      {"conv_valid", [&] { return testing::check_conv(rng, Padding::valid); }},
      {"relu", [&] { return testing::check_relu(rng); }},
      {"maxpool", [&] { return testing::check_maxpool(rng); }},
      {"dense", [&] { return testing::check_dense(rng); }},
      {"dropout", [&] { return testing::check_dropout(rng); }},
      {"softmax", [&] { return testing::check_softmax(rng); }},
      {"toy_model", [&] { return testing::check_model(rng); }},
      {"toy_input", [&] { return check_input_gradient(rng); }},
  };
  bool ok = true;
  std::ostringstream detail;
  for (const auto& check : checks) {
    double worst = 0.0;
    for (int i = 0; i < kInstances; ++i) worst = std::max(worst, check.run());
    ok = ok && worst < kTol;
    detail << check.name << "=" << fmt("%.1e", worst) << " ";
  }
  const double elapsed = seconds_since(start);
  ok = ok && elapsed < 120.0;
  detail << "(" << kInstances << " instances each, " << fmt("%.1f", elapsed) << " s)";
  return {ok, detail.str()};
}

// ---- 2. convolution oracle -------------------------------------------------

Outcome criterion_conv_oracle() {
  std::mt19937_64 rng(202);
  int mismatches = 0;
  for (int i = 0; i < 200; ++i) {
    const std::size_t k = testing::pick(rng, 1, 3);
    const Padding padding = i % 2 ? Padding::same : Padding::valid;
    const Shape in{testing::pick(rng, k, 8), testing::pick(rng, k, 8), testing::pick(rng, 1, 2)};
    const std::size_t co = testing::pick(rng, 1, 4);
    const auto x = testing::random_tensor<float>(in, rng);
    const auto kern = testing::random_tensor<float>({k, k, in[2], co}, rng);
    const auto b = testing::random_tensor<float>({co}, rng);
    if (conv2d_forward(x, kern, b, padding) != testing::conv_oracle(x, kern, b, padding)) ++mismatches;
  }
  return {mismatches == 0, std::to_string(mismatches) + " of 200 float32 instances differ bitwise"};
}

// ---- 3. AUC oracle ----------------------------------------------------------

Outcome criterion_auc() {
  std::mt19937_64 rng(303);
  double worst = 0.0;
  for (int i = 0; i < 500; ++i) {
    const std::size_t n = testing::pick(rng, 2, 200);
    std::vector<Label> labels(n);
    std::vector<double> scores(n);
    for (std::size_t j = 0; j < n; ++j) {
      labels[j] = j == 0 ? Label::consolidation
                : j == 1 ? Label::non_consolidation
                         : (rng() % 2 ? Label::consolidation : Label::non_consolidation);
      scores[j] = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      if (i % 2) scores[j] = std::round(scores[j] * 10.0) / 10.0;  // heavy ties
    }
    std::shuffle(labels.begin(), labels.end(), rng);
    const double a = auc(roc_curve(scores, labels));
    worst = std::max(worst, std::abs(a - testing::mann_whitney_auc(scores, labels)));
  }
  const std::vector<Label> labels{Label::non_consolidation, Label::non_consolidation,
                                  Label::consolidation, Label::consolidation};
  const std::vector<double> separated{0.1, 0.2, 0.8, 0.9};
  const std::vector<double> constant(4, 0.4);
  const double perfect = auc(roc_curve(separated, labels));
  const double flat = auc(roc_curve(constant, labels));
  const bool ok = worst <= 1e-9 && perfect == 1.0 && flat == 0.5;
  return {ok, "max |trapezoid - Mann-Whitney| = " + fmt("%.1e", worst) + " over 500; perfect = " +
                  fmt("%.3f", perfect) + ", constant = " + fmt("%.3f", flat)};
}

// ---- 4. partition invariants -----------------------------------------------

Outcome criterion_partition() {
  std::mt19937_64 rng(404);
  int failed = 0;
  double worst = 0.0;
  std::string first_failure;
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = testing::pick(rng, 20, 1000);
    const double ratio = std::uniform_real_distribution<double>(0.2, 0.8)(rng);
    const auto positives = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
    std::vector<Label> labels(n, Label::non_consolidation);
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(positives),
              Label::consolidation);
    std::shuffle(labels.begin(), labels.end(), rng);
    const auto check = testing::check_plan(build_partition_plan(labels, rng()), labels);
    worst = std::max(worst, check.worst_deviation);
    if (!check.ok()) {
      ++failed;
      if (first_failure.empty()) first_failure = check.failures.front();
    }
  }
  std::vector<Label> labels(950, Label::non_consolidation);
  std::fill(labels.begin(), labels.begin() + 403, Label::consolidation);
  const auto plan = build_partition_plan(labels, 7);
  bool test_sizes = true;
  for (const auto& d : plan.divisions) test_sizes = test_sizes && d.test.size() == 285;
  const bool ok = failed == 0 && test_sizes;
  std::string detail = std::to_string(failed) + " of 100 plans violate an invariant; worst class deviation " +
                       fmt("%.3f", worst) + " samples; 950 items -> |test| " +
                       std::to_string(plan.divisions.front().test.size());
  if (!first_failure.empty()) detail += "; first: " + first_failure;
  return {ok, detail};
}

// ---- 5. ensemble identities ------------------------------------------------

Outcome criterion_ensemble() {
  std::mt19937_64 rng(505);
  double worst_mean = 0.0, worst_sum = 0.0, worst_bound = 0.0;
  for (int i = 0; i < 200; ++i) {
    const std::size_t m = testing::pick(rng, 1, 20);
    std::vector<std::vector<Prediction>> members(kEnsembleSize, std::vector<Prediction>(m));
    for (auto& member : members) {
      for (auto& p : member) {
        const double q = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        p.p = {1.0 - q, q};
      }
    }
    const auto avg = average_predictions(members);
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t c = 0; c < 2; ++c) {
        double sum = 0.0, lo = 1.0, hi = 0.0;
        for (const auto& member : members) {
          sum += member[j].p[c];
          lo = std::min(lo, member[j].p[c]);
          hi = std::max(hi, member[j].p[c]);
        }
        worst_mean = std::max(worst_mean, std::abs(avg[j].p[c] - sum / kEnsembleSize));
        worst_bound = std::max({worst_bound, lo - avg[j].p[c], avg[j].p[c] - hi});
      }
      worst_sum = std::max(worst_sum, std::abs(avg[j].p[0] + avg[j].p[1] - 1.0));
    }
  }

  // The same identities through real networks.
  Ensemble ens;
  ens.architecture = "toy";
  for (std::size_t s = 0; s < kEnsembleSize; ++s) {
    ens.members.push_back(build_network<float>(testing::toy_shape(), 50 + s));
    ens.member_seeds.push_back(50 + s);
  }
  const auto images = testing::random_tensor<float>({6, 12, 12, 1}, rng, 0.0, 2.0);
  const auto combined = ensemble_predict(ens, images);
  for (std::size_t j = 0; j < combined.size(); ++j) {
    double sum = 0.0;
    for (const auto& member : ens.members) sum += predict(member, images)[j].p[1];
    worst_mean = std::max(worst_mean, std::abs(combined[j].p[1] - sum / kEnsembleSize));
    worst_sum = std::max(worst_sum, std::abs(combined[j].p[0] + combined[j].p[1] - 1.0));
  }

  double worst_std = 0.0;
  for (int i = 0; i < 100; ++i) {
    std::vector<Heatmap> maps(2);
    for (auto& h : maps) {
      h.height = 7;
      h.width = 5;
      h.values.resize(35);
      for (auto& v : h.values) v = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    }
    const auto stats = aggregate_heatmaps(maps);
    for (std::size_t k = 0; k < 35; ++k) {
      const double a = maps[0].values[k], b = maps[1].values[k];
      worst_std = std::max(worst_std, std::abs(stats.stddev.values[k] - std::abs(a - b) / std::sqrt(2.0)));
      worst_std = std::max(worst_std, std::abs(stats.mean.values[k] - (a + b) / 2.0));
    }
  }
  const bool ok = worst_mean <= 1e-6 && worst_sum <= 1e-6 && worst_bound <= 0.0 && worst_std <= 1e-6;
  return {ok, "mean err " + fmt("%.1e", worst_mean) + ", sum err " + fmt("%.1e", worst_sum) +
                  ", bound excess " + fmt("%.1e", std::max(0.0, worst_bound)) + ", n=2 std err " +
                  fmt("%.1e", worst_std)};
}

// ---- 6 + 7. synthetic blob task ---------------------------------------------

struct BlobRun {
  std::vector<BlobSample> samples;
  std::vector<std::size_t> test_indices;  // sample index of each test row
  DivisionResult result;
  double seconds = 0.0;
};

constexpr std::size_t kReps = 3;

std::size_t hardware_jobs() {
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

BlobRun run_blob(std::uint64_t seed) {
  BlobRun run;
  BlobDatasetConfig data;
  data.seed = seed;
  run.samples = make_blob_dataset(data);
  std::vector<GrayImage> images;
  std::vector<Label> labels;
  for (const auto& s : run.samples) {
    images.push_back(s.image);
    labels.push_back(s.label);
  }
  const InMemoryImageSource source(std::move(images), labels);
  const PartitionPlan plan = build_partition_plan(labels, seed);

  ExperimentConfig cfg;
  cfg.seed = seed;
  cfg.jobs = hardware_jobs();
  cfg.training.max_epochs = 6;
  cfg.training.patience = 3;
  cfg.augmentation->horizontal_flip = false;  // a mirrored blob swaps the label
  run.test_indices = plan.divisions.front().test;
  const auto start = Clock::now();
  run.result = run_division(source, plan.divisions.front(), 1, architecture_by_name("Arch4"), cfg);
  run.seconds = seconds_since(start);
  return run;
}

Outcome criterion_blob_task(const std::vector<BlobRun>& runs) {
  int performance_ok = 0, ordering_ok = 0;
  double wall = 0.0;
  std::ostringstream detail;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const auto& res = runs[r].result;
    double member_mean = 0.0;
    for (const auto& m : res.members) member_mean += m.metrics.auc;
    member_mean /= static_cast<double>(res.members.size());
    const double a = res.ensemble_metrics.auc, t = res.ensemble_metrics.tpr;
    performance_ok += a >= 0.95 && t >= 0.90;
    ordering_ok += a >= member_mean;
    wall += runs[r].seconds;
    detail << "rep" << r + 1 << ": AUC " << fmt("%.4f", a) << " TPR " << fmt("%.4f", t)
           << " member AUC " << fmt("%.4f", member_mean) << "; ";
  }
  // Members of a division train in parallel; with c >= 4 cores a division
  // costs ceil(5 / 4) = 2 member-times, i.e. 2/5 of a serial run.
  const std::size_t jobs = hardware_jobs();
  const double serial = wall * static_cast<double>(std::min(jobs, kEnsembleSize));
  const double estimate = jobs >= 4 ? wall : serial * 2.0 / 5.0;
  const bool fast = estimate < 600.0;
  detail << "wall " << fmt("%.0f", wall) << " s on " << jobs << " core(s)";
  if (jobs < 4) detail << ", 4-core estimate " << fmt("%.0f", estimate) << " s";
  const bool ok = performance_ok == static_cast<int>(runs.size()) && ordering_ok >= 2 && fast;
  return {ok, detail.str()};
}

// Share of the top-decile heatmap mass that lies in the blob's half.
double top_decile_share(const Heatmap& map, bool left_half) {
  std::vector<std::size_t> order(map.values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t k = (order.size() + 9) / 10;
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) { return map.values[a] > map.values[b]; });
  double total = 0.0, inside = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t col = order[i] % map.width;
    const double v = map.values[order[i]];
    total += v;
    if ((col < map.width / 2) == left_half) inside += v;
  }
  return total > 0.0 ? inside / total : 0.0;
}

Outcome criterion_saliency(const BlobRun& run) {
  const DivisionResult& res = run.result;
  // Gated on confident images; the share over every correct image is reported
  // as well so an empty confident set still says something.
  std::size_t qualifying = 0, localized = 0, correct = 0, correct_localized = 0;
  double share_sum = 0.0, correct_sum = 0.0;
  for (std::size_t row = 0; row < res.test_labels.size(); ++row) {
    const Prediction& p = res.ensemble_predictions[row];
    const std::size_t predicted = p.p[1] > p.p[0] ? 1 : 0;
    if (predicted != static_cast<std::size_t>(class_index(res.test_labels[row]))) continue;
    const BlobSample& sample = run.samples.at(run.test_indices.at(row));
    const auto bundle = ensemble_heatmaps(res.ensemble, normalize_mean(sample.image), hardware_jobs());
    const bool left = sample.center_x < static_cast<double>(sample.image.width) / 2.0;
    const double share = top_decile_share(bundle.classes[predicted].mean, left);
    ++correct;
    correct_localized += share >= 0.6;
    correct_sum += share;
    if (p.p[predicted] < 0.9) continue;
    ++qualifying;
    localized += share >= 0.6;
    share_sum += share;
  }
  const bool ok = qualifying > 0 && localized * 5 >= qualifying * 4;
  const double mean_share = qualifying ? share_sum / static_cast<double>(qualifying) : 0.0;
  const double mean_correct = correct ? correct_sum / static_cast<double>(correct) : 0.0;
  return {ok, std::to_string(localized) + " of " + std::to_string(qualifying) +
                  " confident correct test images localized (mean top-decile share " +
                  fmt("%.3f", mean_share) + "); all correct: " + std::to_string(correct_localized) +
                  " of " + std::to_string(correct) + ", mean share " + fmt("%.3f", mean_correct)};
}

// ---- 8. determinism ----------------------------------------------------------

std::vector<std::pair<fs::path, std::string>> csv_files(const fs::path& root) {
  std::vector<std::pair<fs::path, std::string>> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") {
      out.emplace_back(fs::relative(e.path(), root), read_file(e.path()));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

Outcome criterion_determinism() {
  testing::TempDir tmp("cxr_accept");
  std::ostringstream sink;
  auto cli = [&](std::vector<std::string> args) {
    if (cli::run(args, sink, sink) != 0) throw Error("cxrens failed: " + sink.str());
  };
  const std::string data = (tmp / "blob").string();
  cli({"synthgen", "--out", data, "--count", "60", "--image-size", "24", "--seed", "8"});
  const std::string manifest = data + "/manifest.csv";
  const std::vector<std::pair<std::string, std::string>> runs = {
      {"a", "1"}, {"b", "1"}, {"c", "3"}};
  for (const auto& [name, jobs] : runs) {
    cli({"experiment", "--manifest", manifest, "--arch", "Arch4", "--seed", "21", "--image-size",
         "24", "--epochs", "2", "--patience", "1", "--batch-size", "8", "--no-flip", "--quiet",
         "--jobs", jobs, "--out", (tmp / name).string()});
  }
  const auto a = csv_files(tmp / "a"), b = csv_files(tmp / "b"), c = csv_files(tmp / "c");
  const bool same = !a.empty() && a == b && a == c;
  const bool report = fs::exists(tmp / "a" / "report.csv") && fs::exists(tmp / "a" / "summary.csv");
  return {same && report, std::to_string(a.size()) +
                              " CSV files compared across jobs=1, jobs=1, jobs=3: " +
                              (same ? "byte-identical" : "differ")};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const std::string& title, const std::function<Outcome()>& run) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("criterion %d [PRIMARY] %s: %s (%s)\n", id, title.c_str(), o.pass ? "PASS" : "FAIL",
                o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "gradient correctness", criterion_gradients);
  report(2, "convolution oracle", criterion_conv_oracle);
  report(3, "AUC oracle", criterion_auc);
  report(4, "partition invariants", criterion_partition);
  report(5, "ensemble identities", criterion_ensemble);

  std::vector<BlobRun> runs;
  std::string blob_error;
  try {
    for (std::size_t r = 0; r < kReps; ++r) runs.push_back(run_blob(1000 + r));
  } catch (const std::exception& e) {
    blob_error = e.what();
  }
  report(6, "synthetic task performance", [&] {
    if (!blob_error.empty()) throw Error(blob_error);
    return criterion_blob_task(runs);
  });
  report(7, "saliency localization", [&] {
    if (runs.empty()) throw Error("no synthetic run available: " + blob_error);
    return criterion_saliency(runs.front());
  });
  report(8, "determinism across --jobs", criterion_determinism);

  std::printf("%s: %d criterion(s) failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
