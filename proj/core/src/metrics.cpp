#include "cxr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "cxr/error.hpp"

namespace cxr {
namespace {

void check_inputs(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) {
    throw DataError("metrics: " + std::to_string(scores.size()) + " scores vs " +
                    std::to_string(labels.size()) + " labels");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw NumericError("metrics: non-finite score");
  }
}

}  // namespace

RocCurve roc_curve(std::span<const double> scores, std::span<const Label> labels) {
  check_inputs(scores, labels);
  const auto positives = static_cast<std::size_t>(
      std::count(labels.begin(), labels.end(), Label::consolidation));
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw DataError("ROC is undefined unless both classes are present");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double threshold = scores[order[k]];
    while (k < order.size() && scores[order[k]] == threshold) {
      if (labels[order[k]] == Label::consolidation) ++tp; else ++fp;
      ++k;
    }
    curve.points.push_back({threshold, static_cast<double>(fp) / static_cast<double>(negatives),
                            static_cast<double>(tp) / static_cast<double>(positives)});
  }
  return curve;
}

double auc(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const RocPoint& a = curve.points[i - 1];
    const RocPoint& b = curve.points[i];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  return area;
}

double tpr_at_threshold(std::span<const double> scores, std::span<const Label> labels,
                        double threshold) {
  check_inputs(scores, labels);
  std::size_t positives = 0, hits = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != Label::consolidation) continue;
    ++positives;
    if (scores[i] >= threshold) ++hits;
  }
  if (positives == 0) throw DataError("TPR is undefined without positive samples");
  return static_cast<double>(hits) / static_cast<double>(positives);
}

double accuracy(std::span<const double> scores, std::span<const Label> labels, double threshold) {
  check_inputs(scores, labels);
  if (scores.empty()) throw DataError("accuracy of an empty set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (predicted == (labels[i] == Label::consolidation)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

std::string format_number(double value) {
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  if (std::isnan(value)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", value);
  return buf;
}

std::string format_roc_csv(const RocCurve& curve) {
  std::string out = "threshold,fpr,tpr\n";
  for (const auto& p : curve.points) {
    out += format_number(p.threshold) + "," + format_number(p.fpr) + "," + format_number(p.tpr) + "\n";
  }
  return out;
}

}  // namespace cxr
