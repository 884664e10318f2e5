#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "lmc/model_spec.hpp"

namespace lmc {

/// Flattened model parameters in canonical block-major order:
/// for each block, weight then bias, then BN gamma and beta when present;
/// the classification head comes last. Storage is aligned so that vectorized
/// reductions take the same path on every run.
class ParamVector {
 public:
  using Storage = std::vector<float, Eigen::aligned_allocator<float>>;

  ParamVector() = default;
  explicit ParamVector(std::size_t n, float fill = 0.0f) : values_(n, fill) {}
  explicit ParamVector(Storage values) : values_(std::move(values)) {}
  explicit ParamVector(const std::vector<float>& values) : values_(values.begin(), values.end()) {}

  std::size_t size() const { return values_.size(); }
  float* data() { return values_.data(); }
  const float* data() const { return values_.data(); }
  float& operator[](std::size_t i) { return values_[i]; }
  float operator[](std::size_t i) const { return values_[i]; }
  std::span<float> span() { return values_; }
  std::span<const float> span() const { return values_; }
  const Storage& values() const { return values_; }
  Storage& values() { return values_; }

  bool operator==(const ParamVector&) const = default;

 private:
  Storage values_;
};

template <typename T>
struct BasicBnStats {
  std::vector<T> mean;
  std::vector<T> var;
  bool operator==(const BasicBnStats&) const = default;
};
using BnStats = BasicBnStats<float>;

struct TrainingMeta {
  std::uint64_t init_seed = 0;
  std::uint64_t noise_seed = 0;
  std::string subset = "init";
  int epoch = 0;
  int batch_size = 0;
  double learning_rate = 0.0;
  std::size_t dataset_size = 0;
  /// Free-form provenance: dataset, shift, normalization, alignment rule, ...
  nlohmann::json provenance = nlohmann::json::object();

  bool operator==(const TrainingMeta&) const = default;
};

void to_json(nlohmann::json& j, const TrainingMeta& meta);
void from_json(const nlohmann::json& j, TrainingMeta& meta);

struct Checkpoint {
  ModelSpec spec;
  ParamVector params;
  std::vector<BnStats> bn_stats;  // one entry per BN block, in block order
  TrainingMeta meta;

  /// Throws when the stored arrays disagree with the spec.
  void validate() const;

  bool operator==(const Checkpoint&) const = default;
};

}  // namespace lmc
