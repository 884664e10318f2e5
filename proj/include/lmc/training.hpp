#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lmc/checkpoint.hpp"
#include "lmc/dataset.hpp"

namespace lmc {

enum class NoiseMode { fixed, independent };

std::string_view to_string(NoiseMode mode);
NoiseMode parse_noise_mode(std::string_view name);

/// Minibatch order for both subsets of a paired run.
///
/// Fixed mode sorts each subset by (class, position within the subset) and drives
/// both with one shared per-epoch permutation of positions, so aligned batches hold
/// identical class multisets. When a class count differs by one between the
/// subsets (odd class sizes in a 50/50 split) the surplus sample of the larger
/// subset is left out of the schedule.
struct NoiseSchedule {
  NoiseMode mode = NoiseMode::fixed;
  std::uint64_t noise_seed = 0;
  int batch_size = 1;
  std::vector<std::vector<std::size_t>> epochs_a;  // per-epoch row sequence into subset A
  std::vector<std::vector<std::size_t>> epochs_b;
  std::size_t excluded_a = 0;  // samples never scheduled (fixed-mode trimming)
  std::size_t excluded_b = 0;

  int epochs() const { return static_cast<int>(epochs_a.size()); }
  std::size_t batches_a() const;
  std::size_t batches_b() const;
  /// Rows of batch `j` of `epoch`; a trailing partial batch is never produced.
  std::span<const std::size_t> batch_a(int epoch, std::size_t j) const;
  std::span<const std::size_t> batch_b(int epoch, std::size_t j) const;
  std::string alignment_rule() const;
};

/// Throws std::invalid_argument in fixed mode when the subsets' class counts differ
/// by more than one for any class.
NoiseSchedule build_noise_schedule(std::span<const int> labels_a, std::span<const int> labels_b,
                                   int classes, int batch_size, int epochs,
                                   std::uint64_t noise_seed, NoiseMode mode);

/// Permutation schedule for a single run (B-side left empty).
NoiseSchedule build_single_schedule(std::size_t size, int batch_size, int epochs,
                                    std::uint64_t noise_seed);

struct TrainConfig {
  int batch_size = 32;
  double learning_rate = 1e-3;
  int epochs = 1;
  std::uint64_t init_seed = 0;
  std::uint64_t noise_seed = 0;
  std::string normalization = "center";
  int eval_every = 1;  // epochs between evaluations; 0 evaluates only after the last epoch

  void validate(std::size_t subset_size) const;
};

struct MetricRow {
  int epoch = 0;
  std::string split;  // e.g. "a/train", "a/test", "b/train", "b/test"
  double loss = 0.0;
  double accuracy = 0.0;
};

struct RunRecord {
  std::vector<MetricRow> rows;
  Checkpoint final_a;
  std::optional<Checkpoint> final_b;

  std::vector<MetricRow> series(std::string_view split) const;
};

void write_run_record_csv(const RunRecord& record, const std::filesystem::path& path);

/// Trains two copies of `init`, model A on `a` and model B on `b`, following
/// `schedule` with plain SGD. `test` may be null.
RunRecord train_pair(const Checkpoint& init, const Dataset& a, const Dataset& b,
                     const Dataset* test, const TrainConfig& config,
                     const NoiseSchedule& schedule);

/// Trains one model on `subset` with its own permutation schedule seeded by `noise_seed`.
RunRecord train_single(const Checkpoint& init, const Dataset& subset, const Dataset* test,
                       const TrainConfig& config, std::uint64_t noise_seed);

}  // namespace lmc
