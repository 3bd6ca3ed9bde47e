#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cxr/dataset.hpp"

namespace cxr {

inline constexpr std::size_t kDivisions = 5;
inline constexpr std::size_t kSplitsPerDivision = 5;
inline constexpr double kConstructionFraction = 0.70;
inline constexpr double kTrainFraction = 0.80;

struct SplitResult {
  std::vector<std::size_t> part_a;  // sorted ascending
  std::vector<std::size_t> part_b;  // sorted ascending
};

// Shuffles each class with a seeded RNG and sends round-ish(fraction * count)
// of it to part_a. Per-class takes are floors plus a largest-remainder
// correction (ties to the lower class) so |part_a| == round(fraction * n).
// labels[i] is the label of indices[i]. Throws DataError if a class has fewer
// than two members.
//
// With `reference` class shares (those of an enclosing set), the class-0 take
// is rounded in the direction the input already deviates from them, which
// keeps both parts within one sample per class of the reference proportions.
SplitResult stratified_split(std::span<const std::size_t> indices, std::span<const Label> labels,
                             double fraction, std::uint64_t seed,
                             std::optional<std::array<double, 2>> reference = std::nullopt);

struct TrainValSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;

  friend bool operator==(const TrainValSplit&, const TrainValSplit&) = default;
};

struct Division {
  std::vector<std::size_t> construction;
  std::vector<std::size_t> test;
  std::vector<TrainValSplit> splits;

  friend bool operator==(const Division&, const Division&) = default;
};

struct PartitionPlan {
  std::uint64_t seed = 0;
  std::size_t item_count = 0;
  std::vector<Division> divisions;

  friend bool operator==(const PartitionPlan&, const PartitionPlan&) = default;
};

// Divisions use derive_seed(seed, {d}); their splits derive_seed(seed, {d, s}).
PartitionPlan build_partition_plan(std::span<const Label> labels, std::uint64_t seed,
                                   std::size_t divisions = kDivisions,
                                   std::size_t splits = kSplitsPerDivision);
PartitionPlan build_partition_plan(const DatasetManifest& manifest, std::uint64_t seed);

// Checks disjointness/coverage of every division and split; throws DataError.
void validate_plan(const PartitionPlan& plan);

// JSON text, one index list per line; byte-identical for identical plans.
std::string serialize_plan(const PartitionPlan& plan);
PartitionPlan parse_plan(std::string_view text);
void save_plan(const std::filesystem::path& path, const PartitionPlan& plan);
PartitionPlan load_plan(const std::filesystem::path& path);

}  // namespace cxr
