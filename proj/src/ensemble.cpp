#include "lmc/ensemble.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "lmc/csv.hpp"
#include "lmc/network.hpp"

namespace lmc {

void PredictionMatrix::validate() const {
  if (classes <= 0) throw std::invalid_argument("class count must be positive");
  for (std::size_t e = 0; e < predictions.size(); ++e) {
    if (predictions[e].size() != labels.size())
      throw std::invalid_argument("model " + std::to_string(e) + " has " +
                                  std::to_string(predictions[e].size()) + " predictions for " +
                                  std::to_string(labels.size()) + " samples");
    for (int p : predictions[e])
      if (p < 0 || p >= classes) throw std::invalid_argument("prediction outside [0, K)");
  }
  for (int y : labels)
    if (y < 0 || y >= classes) throw std::invalid_argument("label outside [0, K)");
  if (!probabilities.empty()) {
    if (probabilities.size() != predictions.size())
      throw std::invalid_argument("probabilities given for some models only");
    for (const auto& p : probabilities)
      if (p.rows() != static_cast<Eigen::Index>(labels.size()) || p.cols() != classes)
        throw std::invalid_argument("probability matrix has the wrong shape");
  }
}

std::vector<Checkpoint> build_lmc_ensemble(const Checkpoint& a, const Checkpoint& b,
                                           std::span<const double> lambdas,
                                           const SweepOptions& options) {
  if (!(a.spec == b.spec)) throw std::invalid_argument("checkpoints have different model specs");
  std::vector<Checkpoint> out;
  out.reserve(lambdas.size());
  for (double lam : lambdas) out.push_back(interpolated_model(a, b, lam, options));
  return out;
}

PredictionMatrix collect_predictions(std::span<const Checkpoint> models, const Dataset& test) {
  PredictionMatrix pm;
  pm.labels = test.labels;
  pm.classes = test.info.classes;
  for (const auto& m : models) {
    EvalResult r = evaluate(m, test.inputs, test.labels, {}, true);
    pm.predictions.push_back(std::move(r.predictions));
    pm.probabilities.push_back(std::move(r.probabilities));
  }
  return pm;
}

PairStats pair_stats(std::span<const int> pi, std::span<const int> pj, std::span<const int> labels) {
  if (pi.size() != labels.size() || pj.size() != labels.size())
    throw std::invalid_argument("prediction and label lengths differ");
  if (labels.empty()) throw std::invalid_argument("no samples");
  std::size_t wa = 0, wd = 0, ca = 0, oc = 0;
  for (std::size_t m = 0; m < labels.size(); ++m) {
    const bool ri = pi[m] == labels[m], rj = pj[m] == labels[m];
    if (pi[m] == pj[m]) {
      (ri ? ca : wa) += 1;
    } else if (!ri && !rj) {
      ++wd;
    } else {
      ++oc;
    }
  }
  const auto n = static_cast<double>(labels.size());
  PairStats s;
  s.wa = static_cast<double>(wa) / n;
  s.wd = static_cast<double>(wd) / n;
  s.correct_agree = static_cast<double>(ca) / n;
  s.one_correct = static_cast<double>(oc) / n;
  return s;
}

double wrong_agreement(std::span<const int> pi, std::span<const int> pj, std::span<const int> labels) {
  return pair_stats(pi, pj, labels).wa;
}

double wrong_disagreement(std::span<const int> pi, std::span<const int> pj, std::span<const int> labels) {
  return pair_stats(pi, pj, labels).wd;
}

std::vector<int> majority_vote(const PredictionMatrix& preds) {
  preds.validate();
  if (preds.models() == 0) throw std::invalid_argument("empty ensemble");
  std::vector<int> out(preds.samples());
  std::vector<int> votes(static_cast<std::size_t>(preds.classes));
  for (std::size_t m = 0; m < preds.samples(); ++m) {
    std::fill(votes.begin(), votes.end(), 0);
    for (const auto& p : preds.predictions) ++votes[static_cast<std::size_t>(p[m])];
    int best = 0;
    for (int k = 1; k < preds.classes; ++k)
      if (votes[static_cast<std::size_t>(k)] > votes[static_cast<std::size_t>(best)]) best = k;
    out[m] = best;
  }
  return out;
}

std::vector<int> averaged_prediction(const PredictionMatrix& preds) {
  preds.validate();
  if (preds.probabilities.empty()) throw std::invalid_argument("no probability vectors");
  std::vector<int> out(preds.samples());
  for (std::size_t m = 0; m < preds.samples(); ++m) {
    const auto row = static_cast<Eigen::Index>(m);
    int best = 0;
    double best_p = -1.0;
    for (int k = 0; k < preds.classes; ++k) {
      double sum = 0.0;
      for (const auto& p : preds.probabilities) sum += p(row, k);
      const double mean = sum / static_cast<double>(preds.models());
      if (mean > best_p) {
        best_p = mean;
        best = k;
      }
    }
    out[m] = best;
  }
  return out;
}

namespace {

double accuracy(const std::vector<int>& pred, const std::vector<int>& labels) {
  std::size_t hit = 0;
  for (std::size_t m = 0; m < labels.size(); ++m) hit += pred[m] == labels[m];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

}  // namespace

EnsembleReport ensemble_metrics(const PredictionMatrix& preds, const std::string& kind) {
  preds.validate();
  if (preds.models() < 2) throw std::invalid_argument("pairwise metrics need at least two models");
  EnsembleReport r;
  r.kind = kind;
  r.size = preds.models();
  for (std::size_t i = 0; i < r.size; ++i)
    for (std::size_t j = i + 1; j < r.size; ++j) {
      PairStats s = pair_stats(preds.predictions[i], preds.predictions[j], preds.labels);
      s.i = i;
      s.j = j;
      r.wa_mean += s.wa;
      r.wd_mean += s.wd;
      r.one_correct_mean += s.one_correct;
      r.pairs.push_back(s);
    }
  const auto np = static_cast<double>(r.pairs.size());
  r.wa_mean /= np;
  r.wd_mean /= np;
  r.one_correct_mean /= np;
  r.acc_majority = accuracy(majority_vote(preds), preds.labels);
  r.acc_avgpred = preds.probabilities.empty() ? std::numeric_limits<double>::quiet_NaN()
                                              : accuracy(averaged_prediction(preds), preds.labels);
  return r;
}

EnsembleComparison compare_ensembles(const EnsembleReport& lmc, const EnsembleReport& seeds) {
  return {lmc.wa_mean - seeds.wa_mean, lmc.wd_mean - seeds.wd_mean,
          lmc.acc_majority - seeds.acc_majority, lmc.acc_avgpred - seeds.acc_avgpred};
}

EnsembleAggregate aggregate_reports(const std::vector<EnsembleReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("no ensembles to aggregate");
  EnsembleAggregate a;
  a.kind = reports.front().kind;
  a.ensembles = reports.size();
  std::size_t pairs = 0;
  for (const auto& r : reports) {
    if (r.kind != a.kind) throw std::invalid_argument("cannot aggregate different ensemble kinds");
    a.wa_mean_of_means += r.wa_mean;
    a.wd_mean_of_means += r.wd_mean;
    a.acc_majority += r.acc_majority;
    a.acc_avgpred += r.acc_avgpred;
    for (const auto& p : r.pairs) {
      a.wa_pooled += p.wa;
      a.wd_pooled += p.wd;
    }
    pairs += r.pairs.size();
  }
  const auto n = static_cast<double>(reports.size());
  a.wa_mean_of_means /= n;
  a.wd_mean_of_means /= n;
  a.acc_majority /= n;
  a.acc_avgpred /= n;
  a.wa_pooled /= static_cast<double>(pairs);
  a.wd_pooled /= static_cast<double>(pairs);
  return a;
}

void write_ensemble_csv(const std::vector<EnsembleReport>& reports, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "kind,E,wa_mean,wd_mean,acc_majority,acc_avgpred,pair_i,pair_j,one_correct\n";
  for (std::size_t e = 0; e < reports.size(); ++e) {
    const auto& r = reports[e];
    out << r.kind << ',' << r.size << ',' << csv::format(r.wa_mean) << ',' << csv::format(r.wd_mean)
        << ',' << csv::format(r.acc_majority) << ',' << csv::format(r.acc_avgpred) << ",,,"
        << csv::format(r.one_correct_mean) << '\n';
    for (const auto& p : r.pairs)
      out << r.kind << "/pair," << r.size << ',' << csv::format(p.wa) << ',' << csv::format(p.wd)
          << ",,," << p.i << ',' << p.j << ',' << csv::format(p.one_correct) << '\n';
  }
  csv::write_atomic(path, out.str());
}

}  // namespace lmc
