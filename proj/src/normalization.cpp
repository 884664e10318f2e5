#include "lmc/normalization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lmc {

std::string_view to_string(NormKind kind) {
  return kind == NormKind::center ? "center" : "unit-range";
}

NormKind parse_norm_kind(std::string_view name) {
  if (name == "center") return NormKind::center;
  if (name == "unit-range") return NormKind::unit_range;
  throw std::invalid_argument("unknown normalization '" + std::string(name) + "'");
}

std::vector<double> channel_means(const Dataset& data) {
  const int spatial = data.info.height * data.info.width;
  std::vector<double> mean(static_cast<std::size_t>(data.info.channels), 0.0);
  for (Eigen::Index n = 0; n < data.inputs.rows(); ++n) {
    const float* row = data.inputs.row(n).data();
    for (int c = 0; c < data.info.channels; ++c)
      for (int p = 0; p < spatial; ++p) mean[static_cast<std::size_t>(c)] += row[c * spatial + p];
  }
  const double count = static_cast<double>(data.inputs.rows()) * spatial;
  for (auto& m : mean) m /= count;
  return mean;
}

NormalizationScheme fit_normalizer(const Dataset& train, NormKind kind) {
  NormalizationScheme s;
  s.kind = kind;
  if (kind == NormKind::unit_range) {
    if (!(train.value_max > train.value_min))
      throw std::invalid_argument("unit-range normalization needs a non-empty value range");
    s.lo = train.value_min;
    s.hi = train.value_max;
    return s;
  }
  if (train.size() == 0) throw std::invalid_argument("cannot fit a normalizer on an empty dataset");
  const int channels = train.info.channels;
  const int spatial = train.info.height * train.info.width;
  s.mean = channel_means(train);
  s.scale.assign(static_cast<std::size_t>(channels), 0.0);
  s.constant_channel.assign(static_cast<std::size_t>(channels), false);
  for (Eigen::Index n = 0; n < train.inputs.rows(); ++n) {
    const float* row = train.inputs.row(n).data();
    for (int c = 0; c < channels; ++c)
      for (int p = 0; p < spatial; ++p) {
        const double d = row[c * spatial + p] - s.mean[static_cast<std::size_t>(c)];
        s.scale[static_cast<std::size_t>(c)] += d * d;
      }
  }
  const double count = static_cast<double>(train.inputs.rows()) * spatial;
  for (int c = 0; c < channels; ++c) {
    auto& sc = s.scale[static_cast<std::size_t>(c)];
    sc = std::sqrt(sc / count);
    if (!(sc > 0.0)) {
      sc = 1.0;
      s.constant_channel[static_cast<std::size_t>(c)] = true;
    }
  }
  return s;
}

void apply_normalizer_inplace(const NormalizationScheme& scheme, Dataset& data) {
  if (scheme.kind == NormKind::unit_range) {
    const float lo = scheme.lo;
    const float width = scheme.hi - scheme.lo;
    data.inputs = ((data.inputs.array() - lo) / width).matrix();
    data.value_min = 0.0f;
    data.value_max = 1.0f;
    return;
  }
  const int channels = data.info.channels;
  if (scheme.mean.size() != static_cast<std::size_t>(channels))
    throw std::invalid_argument("normalizer was fitted for a different channel count");
  const int spatial = data.info.height * data.info.width;
  double lo = std::numeric_limits<double>::max(), hi = std::numeric_limits<double>::lowest();
  for (int c = 0; c < channels; ++c) {
    const double m = scheme.mean[static_cast<std::size_t>(c)];
    const double sc = scheme.scale[static_cast<std::size_t>(c)];
    lo = std::min(lo, (data.value_min - m) / sc);
    hi = std::max(hi, (data.value_max - m) / sc);
  }
  for (Eigen::Index n = 0; n < data.inputs.rows(); ++n) {
    float* row = data.inputs.row(n).data();
    for (int c = 0; c < channels; ++c) {
      const double m = scheme.mean[static_cast<std::size_t>(c)];
      const double sc = scheme.scale[static_cast<std::size_t>(c)];
      for (int p = 0; p < spatial; ++p) {
        float& v = row[c * spatial + p];
        v = static_cast<float>((static_cast<double>(v) - m) / sc);
      }
    }
  }
  data.value_min = static_cast<float>(lo);
  data.value_max = static_cast<float>(hi);
}

Dataset apply_normalizer(const NormalizationScheme& scheme, const Dataset& data) {
  Dataset out = data;
  apply_normalizer_inplace(scheme, out);
  return out;
}

}  // namespace lmc
