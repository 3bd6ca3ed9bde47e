// Exhaustive PartitionPlan verification used by unit and acceptance tests.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "cxr/partition.hpp"

namespace cxr::testing {

struct PlanCheck {
  std::vector<std::string> failures;
  double worst_deviation = 0.0;  // samples, against the full-set class shares

  bool ok() const { return failures.empty(); }
};

inline std::array<std::size_t, 2> count_classes(const std::vector<std::size_t>& idx,
                                                const std::vector<Label>& labels) {
  std::array<std::size_t, 2> c{};
  for (std::size_t i : idx) ++c[static_cast<std::size_t>(class_index(labels[i]))];
  return c;
}

inline PlanCheck check_plan(const PartitionPlan& plan, const std::vector<Label>& labels) {
  PlanCheck out;
  auto fail = [&](const std::string& m) { out.failures.push_back(m); };
  const std::size_t n = labels.size();
  const auto global = count_classes([&] {
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    return all;
  }(), labels);
  auto stratified = [&](const std::vector<std::size_t>& subset, const std::string& what) {
    const auto c = count_classes(subset, labels);
    for (std::size_t k = 0; k < 2; ++k) {
      const double expected = static_cast<double>(subset.size()) * static_cast<double>(global[k]) /
                              static_cast<double>(n);
      const double dev = std::abs(static_cast<double>(c[k]) - expected);
      out.worst_deviation = std::max(out.worst_deviation, dev);
      if (dev > 1.0 + 1e-9) fail(what + " class " + std::to_string(k) + " deviates by " + std::to_string(dev));
    }
  };
  auto partition_of = [&](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b,
                          const std::set<std::size_t>& whole, const std::string& what) {
    std::set<std::size_t> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    if (sa.size() != a.size() || sb.size() != b.size()) fail(what + ": duplicate index");
    for (std::size_t i : sa) {
      if (sb.count(i)) fail(what + ": overlap at " + std::to_string(i));
    }
    std::set<std::size_t> u = sa;
    u.insert(sb.begin(), sb.end());
    if (u != whole) fail(what + ": union differs from parent");
  };

  if (plan.divisions.size() != 5) fail("expected 5 divisions");
  std::set<std::size_t> all;
  for (std::size_t i = 0; i < n; ++i) all.insert(i);
  for (std::size_t d = 0; d < plan.divisions.size(); ++d) {
    const auto& div = plan.divisions[d];
    const std::string where = "division " + std::to_string(d + 1);
    partition_of(div.construction, div.test, all, where);
    const double test_target = std::round(0.30 * static_cast<double>(n));
    if (std::abs(static_cast<double>(div.test.size()) - test_target) > 1.0) fail(where + ": |test| off");
    stratified(div.test, where + " test");
    stratified(div.construction, where + " construction");
    if (div.splits.size() != 5) fail(where + ": expected 5 splits");
    const std::set<std::size_t> cons(div.construction.begin(), div.construction.end());
    for (std::size_t s = 0; s < div.splits.size(); ++s) {
      const auto& sp = div.splits[s];
      const std::string w = where + " split " + std::to_string(s + 1);
      partition_of(sp.train, sp.validation, cons, w);
      const double val_target = std::round(0.20 * static_cast<double>(cons.size()));
      if (std::abs(static_cast<double>(sp.validation.size()) - val_target) > 1.0) fail(w + ": |validation| off");
      stratified(sp.train, w + " train");
      stratified(sp.validation, w + " validation");
      for (std::size_t t : div.test) {
        if (std::binary_search(sp.train.begin(), sp.train.end(), t) ||
            std::binary_search(sp.validation.begin(), sp.validation.end(), t)) {
          fail(w + ": test index leaks into train/validation");
          break;
        }
      }
    }
  }
  return out;
}

}  // namespace cxr::testing
