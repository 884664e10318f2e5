#include "lmc/partition.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "lmc/errors.hpp"
#include "lmc/rng.hpp"

namespace lmc {

std::string_view to_string(ShiftKind kind) {
  switch (kind) {
    case ShiftKind::covariate_5050: return "covariate-5050";
    case ShiftKind::label_imbalance: return "label-imbalance";
    case ShiftKind::channel_domain: return "channel-domain";
  }
  return "unknown";
}

ShiftKind parse_shift_kind(std::string_view name) {
  if (name == "covariate-5050") return ShiftKind::covariate_5050;
  if (name == "label-imbalance") return ShiftKind::label_imbalance;
  if (name == "channel-domain") return ShiftKind::channel_domain;
  throw std::invalid_argument("unknown shift kind '" + std::string(name) + "'");
}

void ShiftSpec::validate(int classes, int channels) const {
  if (kind == ShiftKind::label_imbalance) {
    if (!(x > 0.0 && x < 100.0)) throw std::invalid_argument("imbalance percent x must lie in (0, 100)");
    std::set<int> seen;
    for (const auto* set : {&low_classes, &high_classes})
      for (int c : *set) {
        if (c < 0 || c >= classes) throw std::invalid_argument("class " + std::to_string(c) + " out of range");
        if (!seen.insert(c).second)
          throw std::invalid_argument("class " + std::to_string(c) + " appears in both class sets");
      }
    if (static_cast<int>(seen.size()) != classes)
      throw std::invalid_argument("low and high class sets must cover every class");
  }
  if (kind == ShiftKind::channel_domain) {
    if (channels_a.empty() || channels_b.empty())
      throw std::invalid_argument("channel-domain shift needs channels for both subsets");
    for (const auto* set : {&channels_a, &channels_b})
      for (int c : *set)
        if (c < 0 || c >= channels) throw std::invalid_argument("channel " + std::to_string(c) + " out of range");
  }
}

void to_json(nlohmann::json& j, const ShiftSpec& spec) {
  j = nlohmann::json{{"kind", std::string(to_string(spec.kind))},
                     {"x", spec.x},
                     {"low_classes", spec.low_classes},
                     {"high_classes", spec.high_classes},
                     {"channels_a", spec.channels_a},
                     {"channels_b", spec.channels_b},
                     {"split_seed", spec.split_seed}};
}

void from_json(const nlohmann::json& j, ShiftSpec& spec) {
  spec.kind = parse_shift_kind(j.at("kind").get<std::string>());
  spec.x = j.value("x", 50.0);
  spec.low_classes = j.value("low_classes", std::vector<int>{});
  spec.high_classes = j.value("high_classes", std::vector<int>{});
  spec.channels_a = j.value("channels_a", std::vector<int>{});
  spec.channels_b = j.value("channels_b", std::vector<int>{});
  spec.split_seed = j.value("split_seed", std::uint64_t{0});
}

std::size_t subset_a_count(std::size_t n, double percent) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * percent / 100.0 + 0.5));
}

namespace {

Dataset mask_channels(const Dataset& data, const std::vector<int>& keep) {
  Dataset out = data;
  const int spatial = data.info.height * data.info.width;
  for (int c = 0; c < data.info.channels; ++c) {
    if (std::find(keep.begin(), keep.end(), c) != keep.end()) continue;
    out.inputs.middleCols(static_cast<Eigen::Index>(c) * spatial, spatial).setZero();
  }
  return out;
}

}  // namespace

Partition partition(const Dataset& data, const ShiftSpec& spec) {
  spec.validate(data.info.classes, data.info.channels);
  Partition part;
  if (spec.kind == ShiftKind::channel_domain) {
    part.rows_a.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) part.rows_a[i] = i;
    part.rows_b = part.rows_a;
    part.a = mask_channels(data, spec.channels_a);
    part.b = mask_channels(data, spec.channels_b);
    part.a.info.name = data.info.name + "-A";
    part.b.info.name = data.info.name + "-B";
    return part;
  }
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(data.info.classes));
  for (std::size_t i = 0; i < data.size(); ++i)
    by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
  for (int c = 0; c < data.info.classes; ++c) {
    auto& rows = by_class[static_cast<std::size_t>(c)];
    double percent = 50.0;
    if (spec.kind == ShiftKind::label_imbalance) {
      const bool low = std::find(spec.low_classes.begin(), spec.low_classes.end(), c) != spec.low_classes.end();
      percent = low ? spec.x : 100.0 - spec.x;
    }
    Rng rng(derive_seed(spec.split_seed, static_cast<std::uint64_t>(c)));
    rng.shuffle(rows);
    const std::size_t take = subset_a_count(rows.size(), percent);
    part.rows_a.insert(part.rows_a.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(take));
    part.rows_b.insert(part.rows_b.end(), rows.begin() + static_cast<std::ptrdiff_t>(take), rows.end());
  }
  std::sort(part.rows_a.begin(), part.rows_a.end());
  std::sort(part.rows_b.begin(), part.rows_b.end());
  part.a = select_rows(data, part.rows_a);
  part.b = select_rows(data, part.rows_b);
  part.a.info.name = data.info.name + "-A";
  part.b.info.name = data.info.name + "-B";
  return part;
}

void write_partition_manifest(const Partition& part, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "index,subset,class\n";
  for (std::size_t i = 0; i < part.rows_a.size(); ++i)
    out << part.rows_a[i] << ",A," << part.a.labels[i] << '\n';
  for (std::size_t i = 0; i < part.rows_b.size(); ++i)
    out << part.rows_b[i] << ",B," << part.b.labels[i] << '\n';
}

}  // namespace lmc
