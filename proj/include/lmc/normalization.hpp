#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "lmc/dataset.hpp"

namespace lmc {

enum class NormKind { center, unit_range };

std::string_view to_string(NormKind kind);
NormKind parse_norm_kind(std::string_view name);

/// center: per-channel (x - mean) / std, std taken as 1 for a constant channel.
/// unit-range: (x - lo) / (hi - lo) over the dataset's nominal value range.
struct NormalizationScheme {
  NormKind kind = NormKind::unit_range;
  std::vector<double> mean;
  std::vector<double> scale;
  std::vector<bool> constant_channel;
  float lo = 0.0f;
  float hi = 1.0f;
};

/// Fit on training data only.
NormalizationScheme fit_normalizer(const Dataset& train, NormKind kind);
Dataset apply_normalizer(const NormalizationScheme& scheme, const Dataset& data);
void apply_normalizer_inplace(const NormalizationScheme& scheme, Dataset& data);

/// Per-channel mean of the stored values, in double precision.
std::vector<double> channel_means(const Dataset& data);

}  // namespace lmc
