#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lmc/dataset.hpp"

namespace lmc {

enum class ShiftKind { covariate_5050, label_imbalance, channel_domain };

std::string_view to_string(ShiftKind kind);
ShiftKind parse_shift_kind(std::string_view name);

struct ShiftSpec {
  ShiftKind kind = ShiftKind::covariate_5050;
  double x = 50.0;                 // percent, label-imbalance only
  std::vector<int> low_classes;    // subset A keeps x% of each
  std::vector<int> high_classes;   // subset A keeps (100 - x)% of each
  std::vector<int> channels_a;     // channel-domain: channels kept in subset A
  std::vector<int> channels_b;
  std::uint64_t split_seed = 0;

  void validate(int classes, int channels) const;
  bool operator==(const ShiftSpec&) const = default;
};

void to_json(nlohmann::json& j, const ShiftSpec& spec);
void from_json(const nlohmann::json& j, ShiftSpec& spec);

struct Partition {
  Dataset a;
  Dataset b;
  // Source row of every sample in a / b, ascending.
  std::vector<std::size_t> rows_a;
  std::vector<std::size_t> rows_b;
};

/// Number of samples of a class of size `n` that subset A receives when it keeps
/// `percent` of the class (round half up, so odd 50/50 splits favour A).
std::size_t subset_a_count(std::size_t n, double percent);

Partition partition(const Dataset& data, const ShiftSpec& spec);

/// CSV with columns index,subset,class; one row per (sample, subset) membership.
void write_partition_manifest(const Partition& part, const std::filesystem::path& path);

}  // namespace lmc
