#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lmc/analysis.hpp"
#include "lmc/dataset.hpp"
#include "lmc/model_spec.hpp"
#include "lmc/normalization.hpp"
#include "lmc/partition.hpp"
#include "lmc/training.hpp"

namespace lmc {

inline constexpr int kConfigSchemaVersion = 1;

struct SyntheticConfig {
  int classes = 4;
  int per_class = 250;
  int test_per_class = 100;
  int dim = 16;
  double spread = 0.1;
  double radius = 1.0;
  std::uint64_t seed = 7;

  bool operator==(const SyntheticConfig&) const = default;
};

struct DatasetConfig {
  std::string name = "synthetic";  // mnist | cifar10 | synthetic
  std::string path;                // directory holding the raw files
  std::size_t per_class = 0;       // training subsample, first n per class; 0 keeps all
  std::size_t test_per_class = 0;
  SyntheticConfig synthetic;

  bool operator==(const DatasetConfig&) const = default;
};

/// Architecture only; input shape and class count come from the dataset.
struct ModelConfig {
  Architecture arch = Architecture::mlp;
  std::vector<int> widths{512};
  std::vector<bool> batch_norm;
  std::vector<int> strides;

  bool operator==(const ModelConfig&) const = default;
};

enum class Pairing { shifted, different_seeds };

struct TrainSection {
  int batch_size = 32;
  double learning_rate = 1e-3;
  int epochs = 5;
  int eval_every = 1;
  std::string noise_mode = "auto";  // auto | fixed | independent
  Pairing pairing = Pairing::shifted;

  bool operator==(const TrainSection&) const = default;
};

struct InterpolationConfig {
  std::vector<double> lambdas = uniform_grid(21);
  std::vector<BarrierVariant> variants = all_barrier_variants();
  BnPolicy bn_policy = BnPolicy::recompute;
  int bn_passes = 1;
  std::vector<std::string> sets{"test", "train-a", "train-b"};

  bool operator==(const InterpolationConfig&) const = default;
};

struct EnsembleConfig {
  std::vector<double> lambdas{0.0, 0.25, 0.5, 0.75, 1.0};
  int seed_models = 5;
  double lmc_threshold = 0.1;  // local-min test barrier above which a warning is emitted

  bool operator==(const EnsembleConfig&) const = default;
};

struct SweepConfig {
  std::vector<int> batch_sizes;        // empty: the training batch size only
  std::vector<double> learning_rates;  // empty: the training learning rate only

  bool operator==(const SweepConfig&) const = default;
};

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  std::string name = "experiment";
  DatasetConfig dataset;
  NormKind normalization = NormKind::center;
  ShiftSpec shift;
  ModelConfig model;
  TrainSection train;
  InterpolationConfig interpolation;
  EnsembleConfig ensemble;
  SweepConfig sweep;
  std::string output = "results";
  std::vector<std::uint64_t> seeds{1};

  bool operator==(const ExperimentConfig&) const = default;

  /// Pre-flight checks: values, enum names, and that dataset paths exist.
  void validate() const;
  NoiseMode resolved_noise_mode() const;
  ModelSpec model_spec(const DatasetInfo& data) const;
};

/// Parses and validates the schema; unknown keys are ConfigErrors naming their path.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const ExperimentConfig& config);

/// Normalized train/test data and the two training subsets for one experiment.
struct PreparedData {
  Dataset train;  // normalized full training set (union of the subsets)
  Dataset test;
  Partition part;
  NormalizationScheme scheme;
  Tensor bn_union;  // rows of both subsets, for BN recomputation

  const Dataset* set(std::string_view name) const;
};

PreparedData prepare_data(const ExperimentConfig& config);

/// Seeds used by one repeat of an experiment.
struct SeedPlan {
  std::uint64_t init_a = 0;
  std::uint64_t init_b = 0;
  std::uint64_t noise_a = 0;
  std::uint64_t noise_b = 0;
  std::string subset_b;  // "B", or "A-alt" when both models train on subset A
};

SeedPlan seed_plan(const ExperimentConfig& config, std::uint64_t seed);
std::uint64_t ensemble_member_seed(std::uint64_t seed, int k);

/// e.g. "mnist_covariate-5050_B32_lr0.001_init1_noise<n>_A.lmck"
std::string checkpoint_name(const ExperimentConfig& config, int batch_size, double learning_rate,
                            std::uint64_t init_seed, std::uint64_t noise_seed,
                            const std::string& subset);

/// One training repeat: paired fixed/independent-noise run on the two subsets, or
/// two different-seed runs on subset A.
RunRecord run_training(const ExperimentConfig& config, const PreparedData& data, std::uint64_t seed,
                       int batch_size, double learning_rate);

/// Checkpoint file names of the pair trained by run_training.
std::pair<std::string, std::string> pair_checkpoint_names(const ExperimentConfig& config, std::uint64_t seed,
                                                          int batch_size, double learning_rate);

/// Member `k` of the different-seed ensemble for repeat `seed`: a single run on
/// subset A from its own initialization and minibatch order.
RunRecord train_ensemble_member(const ExperimentConfig& config, const PreparedData& data, std::uint64_t seed,
                                int k, int batch_size, double learning_rate);

SweepOptions sweep_options(const ExperimentConfig& config, const PreparedData& data, int batch_size,
                           std::uint64_t seed);

std::vector<EvalSet> eval_sets(const ExperimentConfig& config, const PreparedData& data);

InterpolationCurve run_interpolation(const ExperimentConfig& config, const PreparedData& data,
                                     const Checkpoint& a, const Checkpoint& b, int batch_size,
                                     std::uint64_t seed);

std::vector<BarrierResult> all_barriers(const ExperimentConfig& config, const InterpolationCurve& curve);

}  // namespace lmc
