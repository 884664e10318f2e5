#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lmc/analysis.hpp"
#include "lmc/checkpoint.hpp"
#include "lmc/dataset.hpp"

namespace lmc {

/// Predicted classes of E models over M samples in one fixed order.
struct PredictionMatrix {
  std::vector<std::vector<int>> predictions;  // [model][sample]
  std::vector<int> labels;
  int classes = 0;
  std::vector<Tensor> probabilities;  // [model] M x K softmax rows; optional

  std::size_t models() const { return predictions.size(); }
  std::size_t samples() const { return labels.size(); }
  void validate() const;
};

/// One model per lambda, BN handled per `options`.
std::vector<Checkpoint> build_lmc_ensemble(const Checkpoint& a, const Checkpoint& b,
                                           std::span<const double> lambdas,
                                           const SweepOptions& options);

PredictionMatrix collect_predictions(std::span<const Checkpoint> models, const Dataset& test);

/// Fraction of samples where both predict the same wrong class.
double wrong_agreement(std::span<const int> pi, std::span<const int> pj, std::span<const int> labels);
/// Fraction of samples where the predictions differ and both are wrong.
double wrong_disagreement(std::span<const int> pi, std::span<const int> pj, std::span<const int> labels);

struct PairStats {
  std::size_t i = 0, j = 0;
  double wa = 0.0;
  double wd = 0.0;
  double correct_agree = 0.0;
  double one_correct = 0.0;  // disagreements where exactly one model is right
};

PairStats pair_stats(std::span<const int> pi, std::span<const int> pj, std::span<const int> labels);

/// Plurality vote per sample; ties go to the lowest class index.
std::vector<int> majority_vote(const PredictionMatrix& preds);
/// Argmax of the mean probability vector; needs probabilities.
std::vector<int> averaged_prediction(const PredictionMatrix& preds);

struct EnsembleReport {
  std::string kind;  // "lmc" or "different-seeds"
  std::size_t size = 0;
  double wa_mean = 0.0;
  double wd_mean = 0.0;
  double one_correct_mean = 0.0;
  double acc_majority = 0.0;
  double acc_avgpred = 0.0;  // NaN when probabilities are absent
  std::vector<PairStats> pairs;
};

/// Pairwise means over unordered pairs; throws for fewer than two models.
EnsembleReport ensemble_metrics(const PredictionMatrix& preds, const std::string& kind);

struct EnsembleComparison {
  double d_wa = 0.0;  // lmc minus different-seeds
  double d_wd = 0.0;
  double d_majority = 0.0;
  double d_avgpred = 0.0;
};

EnsembleComparison compare_ensembles(const EnsembleReport& lmc, const EnsembleReport& seeds);

/// Aggregates over several ensembles of one kind: the mean of per-ensemble means
/// and the mean over every pair pooled across ensembles.
struct EnsembleAggregate {
  std::string kind;
  std::size_t ensembles = 0;
  double wa_mean_of_means = 0.0;
  double wd_mean_of_means = 0.0;
  double wa_pooled = 0.0;
  double wd_pooled = 0.0;
  double acc_majority = 0.0;
  double acc_avgpred = 0.0;
};

EnsembleAggregate aggregate_reports(const std::vector<EnsembleReport>& reports);

/// Summary rows (kind, E, means, accuracies) followed by one audit row per pair.
void write_ensemble_csv(const std::vector<EnsembleReport>& reports, const std::filesystem::path& path);

}  // namespace lmc
