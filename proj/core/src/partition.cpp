#include "cxr/partition.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cxr/checkpoint.hpp"
#include "cxr/error.hpp"
#include "cxr/rng.hpp"

namespace cxr {

SplitResult stratified_split(std::span<const std::size_t> indices, std::span<const Label> labels,
                             double fraction, std::uint64_t seed,
                             std::optional<std::array<double, 2>> reference) {
  if (indices.size() != labels.size()) {
    throw DataError("stratified_split: " + std::to_string(indices.size()) + " indices vs " +
                    std::to_string(labels.size()) + " labels");
  }
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw DataError("stratified_split: fraction must lie in (0,1)");
  }
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    by_class[static_cast<std::size_t>(class_index(labels[i]))].push_back(indices[i]);
  }
  for (std::size_t c = 0; c < 2; ++c) {
    if (by_class[c].size() < 2) {
      throw DataError("stratified_split: class " + label_name(static_cast<Label>(c)) + " has " +
                      std::to_string(by_class[c].size()) + " member(s), need at least 2");
    }
  }

  const auto total = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(indices.size())));
  std::array<std::size_t, 2> take{};
  std::array<double, 2> remainder{};
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < 2; ++c) {
    const double quota = fraction * static_cast<double>(by_class[c].size());
    take[c] = static_cast<std::size_t>(std::floor(quota));
    remainder[c] = quota - static_cast<double>(take[c]);
    assigned += take[c];
  }
  std::array<std::size_t, 2> order{0, 1};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < total && k < order.size(); ++k) {
    ++take[order[k]];
    ++assigned;
  }
  if (reference) {
    // Round part_a's class-0 take toward the side the parent set already leans,
    // so part_b inherits a deviation of at most one sample as well.
    const double n = static_cast<double>(indices.size());
    const double target = static_cast<double>(total) * (*reference)[0];
    const double lean = static_cast<double>(by_class[0].size()) - n * (*reference)[0];
    std::size_t t0 = take[0];
    if (lean > 1e-9) t0 = static_cast<std::size_t>(std::ceil(target - 1e-9));
    else if (lean < -1e-9) t0 = static_cast<std::size_t>(std::floor(target + 1e-9));
    const std::size_t lo = total > by_class[1].size() ? total - by_class[1].size() : 0;
    t0 = std::clamp(t0, lo, std::min(by_class[0].size(), total));
    take = {t0, total - t0};
  }

  Rng rng(seed);
  SplitResult result;
  for (std::size_t c = 0; c < 2; ++c) {
    auto members = by_class[c];
    std::sort(members.begin(), members.end());
    std::shuffle(members.begin(), members.end(), rng);
    result.part_a.insert(result.part_a.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take[c]));
    result.part_b.insert(result.part_b.end(), members.begin() + static_cast<std::ptrdiff_t>(take[c]), members.end());
  }
  std::sort(result.part_a.begin(), result.part_a.end());
  std::sort(result.part_b.begin(), result.part_b.end());
  return result;
}

PartitionPlan build_partition_plan(std::span<const Label> labels, std::uint64_t seed,
                                   std::size_t divisions, std::size_t splits) {
  PartitionPlan plan;
  plan.seed = seed;
  plan.item_count = labels.size();
  std::vector<std::size_t> all(labels.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::array<double, 2> shares{};
  for (Label l : labels) shares[static_cast<std::size_t>(class_index(l))] += 1.0;
  for (double& v : shares) v /= static_cast<double>(std::max<std::size_t>(labels.size(), 1));
  for (std::size_t d = 0; d < divisions; ++d) {
    auto outer = stratified_split(all, labels, kConstructionFraction, derive_seed(seed, {d}));
    Division division;
    division.construction = std::move(outer.part_a);
    division.test = std::move(outer.part_b);
    std::vector<Label> construction_labels;
    for (std::size_t i : division.construction) construction_labels.push_back(labels[i]);
    for (std::size_t s = 0; s < splits; ++s) {
      auto inner = stratified_split(division.construction, construction_labels, kTrainFraction,
                                    derive_seed(seed, {d, s}), shares);
      division.splits.push_back({std::move(inner.part_a), std::move(inner.part_b)});
    }
    plan.divisions.push_back(std::move(division));
  }
  return plan;
}

PartitionPlan build_partition_plan(const DatasetManifest& manifest, std::uint64_t seed) {
  const auto labels = manifest.labels();
  return build_partition_plan(labels, seed);
}

namespace {

void require_disjoint_cover(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b,
                            const std::vector<std::size_t>& whole, const std::string& what) {
  std::vector<std::size_t> sa = a, sb = b, sw = whole;
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  std::sort(sw.begin(), sw.end());
  std::vector<std::size_t> overlap;
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(overlap));
  if (!overlap.empty()) {
    throw DataError(what + ": index " + std::to_string(overlap.front()) + " appears in both parts");
  }
  std::vector<std::size_t> merged;
  std::merge(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(merged));
  if (merged != sw) throw DataError(what + ": parts do not cover their parent set exactly");
}

}  // namespace

void validate_plan(const PartitionPlan& plan) {
  std::vector<std::size_t> all(plan.item_count);
  std::iota(all.begin(), all.end(), std::size_t{0});
  for (std::size_t d = 0; d < plan.divisions.size(); ++d) {
    const Division& div = plan.divisions[d];
    const std::string where = "division " + std::to_string(d + 1);
    require_disjoint_cover(div.construction, div.test, all, where);
    for (std::size_t s = 0; s < div.splits.size(); ++s) {
      require_disjoint_cover(div.splits[s].train, div.splits[s].validation, div.construction,
                             where + " split " + std::to_string(s + 1));
    }
  }
}

namespace {

void write_list(std::ostringstream& out, const std::vector<std::size_t>& values) {
  out << '[';
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out << ',';
    out << values[i];
  }
  out << ']';
}

}  // namespace

std::string serialize_plan(const PartitionPlan& plan) {
  std::ostringstream out;
  out << "{\n  \"format\": \"cxr-partition-plan\",\n  \"version\": 1,\n";
  out << "  \"seed\": " << plan.seed << ",\n  \"items\": " << plan.item_count << ",\n";
  out << "  \"divisions\": [\n";
  for (std::size_t d = 0; d < plan.divisions.size(); ++d) {
    const Division& div = plan.divisions[d];
    out << "    {\n      \"construction\": ";
    write_list(out, div.construction);
    out << ",\n      \"test\": ";
    write_list(out, div.test);
    out << ",\n      \"splits\": [\n";
    for (std::size_t s = 0; s < div.splits.size(); ++s) {
      out << "        {\"train\": ";
      write_list(out, div.splits[s].train);
      out << ",\n         \"validation\": ";
      write_list(out, div.splits[s].validation);
      out << '}' << (s + 1 < div.splits.size() ? "," : "") << '\n';
    }
    out << "      ]\n    }" << (d + 1 < plan.divisions.size() ? "," : "") << '\n';
  }
  out << "  ]\n}\n";
  return out.str();
}

PartitionPlan parse_plan(std::string_view text) {
  PartitionPlan plan;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format").get<std::string>() != "cxr-partition-plan") {
      throw DataError("not a partition plan file");
    }
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.item_count = j.at("items").get<std::size_t>();
    for (const auto& jd : j.at("divisions")) {
      Division div;
      div.construction = jd.at("construction").get<std::vector<std::size_t>>();
      div.test = jd.at("test").get<std::vector<std::size_t>>();
      for (const auto& js : jd.at("splits")) {
        div.splits.push_back({js.at("train").get<std::vector<std::size_t>>(),
                              js.at("validation").get<std::vector<std::size_t>>()});
      }
      plan.divisions.push_back(std::move(div));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed partition plan: ") + e.what());
  }
  validate_plan(plan);
  return plan;
}

void save_plan(const std::filesystem::path& path, const PartitionPlan& plan) {
  write_file_atomic(path, serialize_plan(plan));
}

PartitionPlan load_plan(const std::filesystem::path& path) {
  try {
    return parse_plan(read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace cxr
