#pragma once

#include <span>
#include <string>
#include <vector>

#include "cxr/dataset.hpp"

namespace cxr {

struct RocPoint {
  double threshold;  // predicted positive iff score >= threshold
  double fpr;
  double tpr;
};

// Points run from (0,0) to (1,1); FPR and TPR never decrease along the curve.
struct RocCurve {
  std::vector<RocPoint> points;
};

// Thresholds are the distinct scores in descending order after a +inf
// sentinel. Throws DataError unless both classes are present.
RocCurve roc_curve(std::span<const double> scores, std::span<const Label> labels);

// Trapezoidal area under the curve over FPR.
double auc(const RocCurve& curve);

// Fraction of positives with score >= threshold. Throws DataError without
// positives.
double tpr_at_threshold(std::span<const double> scores, std::span<const Label> labels,
                        double threshold = 0.5);

inline constexpr double kDecisionThreshold = 0.5;

// Fraction of samples whose class-1 score >= threshold matches the label.
double accuracy(std::span<const double> scores, std::span<const Label> labels,
                double threshold = kDecisionThreshold);

// CSV "threshold,fpr,tpr"; the sentinel threshold is written as "inf".
std::string format_roc_csv(const RocCurve& curve);

// Fixed-precision number formatting shared by every CSV writer.
std::string format_number(double value);

}  // namespace cxr
