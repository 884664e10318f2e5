#include "lmc/training.hpp"

#include <cmath>
#include <sstream>

#include "lmc/csv.hpp"
#include "lmc/errors.hpp"
#include "lmc/network.hpp"
#include "lmc/rng.hpp"

namespace lmc {

std::string_view to_string(NoiseMode mode) {
  return mode == NoiseMode::fixed ? "fixed" : "independent";
}

NoiseMode parse_noise_mode(std::string_view name) {
  if (name == "fixed") return NoiseMode::fixed;
  if (name == "independent") return NoiseMode::independent;
  throw std::invalid_argument("unknown noise mode '" + std::string(name) + "'");
}

std::size_t NoiseSchedule::batches_a() const {
  return epochs_a.empty() ? 0 : epochs_a.front().size() / static_cast<std::size_t>(batch_size);
}

std::size_t NoiseSchedule::batches_b() const {
  return epochs_b.empty() ? 0 : epochs_b.front().size() / static_cast<std::size_t>(batch_size);
}

std::span<const std::size_t> NoiseSchedule::batch_a(int epoch, std::size_t j) const {
  const auto& seq = epochs_a.at(static_cast<std::size_t>(epoch));
  if ((j + 1) * static_cast<std::size_t>(batch_size) > seq.size())
    throw std::out_of_range("batch " + std::to_string(j) + " beyond epoch " + std::to_string(epoch));
  return std::span<const std::size_t>(seq).subspan(j * static_cast<std::size_t>(batch_size),
                                                   static_cast<std::size_t>(batch_size));
}

std::span<const std::size_t> NoiseSchedule::batch_b(int epoch, std::size_t j) const {
  const auto& seq = epochs_b.at(static_cast<std::size_t>(epoch));
  if ((j + 1) * static_cast<std::size_t>(batch_size) > seq.size())
    throw std::out_of_range("batch " + std::to_string(j) + " beyond epoch " + std::to_string(epoch));
  return std::span<const std::size_t>(seq).subspan(j * static_cast<std::size_t>(batch_size),
                                                   static_cast<std::size_t>(batch_size));
}

std::string NoiseSchedule::alignment_rule() const {
  if (mode == NoiseMode::independent) return "independent-permutations";
  return "class-sorted-positions/shared-permutation";
}

namespace {

constexpr std::uint64_t kTagA = 0xA11CE;
constexpr std::uint64_t kTagB = 0xB0B;
constexpr std::uint64_t kTagShared = 0x5A5A;

std::vector<std::size_t> permuted(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return rng.permutation(n);
}

}  // namespace

NoiseSchedule build_noise_schedule(std::span<const int> labels_a, std::span<const int> labels_b,
                                   int classes, int batch_size, int epochs,
                                   std::uint64_t noise_seed, NoiseMode mode) {
  if (batch_size <= 0) throw std::invalid_argument("batch size must be positive");
  if (epochs < 0) throw std::invalid_argument("epoch count must be non-negative");
  NoiseSchedule s;
  s.mode = mode;
  s.noise_seed = noise_seed;
  s.batch_size = batch_size;
  if (mode == NoiseMode::independent) {
    for (int e = 0; e < epochs; ++e) {
      const auto ue = static_cast<std::uint64_t>(e);
      s.epochs_a.push_back(permuted(labels_a.size(), derive_seed(noise_seed ^ kTagA, ue)));
      s.epochs_b.push_back(permuted(labels_b.size(), derive_seed(noise_seed ^ kTagB, ue)));
    }
    return s;
  }
  std::vector<std::vector<std::size_t>> rows_a(static_cast<std::size_t>(classes));
  std::vector<std::vector<std::size_t>> rows_b(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < labels_a.size(); ++i) rows_a[static_cast<std::size_t>(labels_a[i])].push_back(i);
  for (std::size_t i = 0; i < labels_b.size(); ++i) rows_b[static_cast<std::size_t>(labels_b[i])].push_back(i);
  std::vector<std::size_t> sorted_a, sorted_b;
  for (int c = 0; c < classes; ++c) {
    const auto& ra = rows_a[static_cast<std::size_t>(c)];
    const auto& rb = rows_b[static_cast<std::size_t>(c)];
    const std::size_t hi = std::max(ra.size(), rb.size());
    const std::size_t common = std::min(ra.size(), rb.size());
    if (hi - common > 1)
      throw std::invalid_argument(
          "fixed SGD noise needs matching per-class counts; class " + std::to_string(c) + " has " +
          std::to_string(ra.size()) + " vs " + std::to_string(rb.size()) +
          " samples (use independent noise for label-imbalanced subsets)");
    sorted_a.insert(sorted_a.end(), ra.begin(), ra.begin() + static_cast<std::ptrdiff_t>(common));
    sorted_b.insert(sorted_b.end(), rb.begin(), rb.begin() + static_cast<std::ptrdiff_t>(common));
  }
  s.excluded_a = labels_a.size() - sorted_a.size();
  s.excluded_b = labels_b.size() - sorted_b.size();
  const std::size_t n = sorted_a.size();
  for (int e = 0; e < epochs; ++e) {
    const auto perm = permuted(n, derive_seed(noise_seed ^ kTagShared, static_cast<std::uint64_t>(e)));
    std::vector<std::size_t> ea(n), eb(n);
    for (std::size_t i = 0; i < n; ++i) {
      ea[i] = sorted_a[perm[i]];
      eb[i] = sorted_b[perm[i]];
    }
    s.epochs_a.push_back(std::move(ea));
    s.epochs_b.push_back(std::move(eb));
  }
  return s;
}

NoiseSchedule build_single_schedule(std::size_t size, int batch_size, int epochs,
                                    std::uint64_t noise_seed) {
  if (batch_size <= 0) throw std::invalid_argument("batch size must be positive");
  NoiseSchedule s;
  s.mode = NoiseMode::independent;
  s.noise_seed = noise_seed;
  s.batch_size = batch_size;
  for (int e = 0; e < epochs; ++e)
    s.epochs_a.push_back(permuted(size, derive_seed(noise_seed ^ kTagA, static_cast<std::uint64_t>(e))));
  return s;
}

void TrainConfig::validate(std::size_t subset_size) const {
  if (batch_size <= 0) throw std::invalid_argument("batch size must be positive");
  if (static_cast<std::size_t>(batch_size) > subset_size)
    throw std::invalid_argument("batch size " + std::to_string(batch_size) + " exceeds subset size " +
                                std::to_string(subset_size));
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (epochs < 0) throw std::invalid_argument("epoch count must be non-negative");
  if (eval_every < 0) throw std::invalid_argument("eval cadence must be non-negative");
}

std::vector<MetricRow> RunRecord::series(std::string_view split) const {
  std::vector<MetricRow> out;
  for (const auto& r : rows)
    if (r.split == split) out.push_back(r);
  return out;
}

void write_run_record_csv(const RunRecord& record, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "epoch,split,loss,accuracy\n";
  for (const auto& r : record.rows)
    out << r.epoch << ',' << r.split << ',' << csv::format(r.loss) << ',' << csv::format(r.accuracy) << '\n';
  csv::write_atomic(path, out.str());
}

namespace {

// One model's training state: checkpoint plus a reusable engine and buffers.
class Learner {
 public:
  Learner(const Checkpoint& init, const Dataset& data, float lr)
      : ckpt_(init), data_(data), engine_(init.spec), grad_(init.params.size()), lr_(lr) {}

  void step(std::span<const std::size_t> rows, int epoch, std::size_t batch) {
    x_.resize(static_cast<Eigen::Index>(rows.size()), data_.inputs.cols());
    labels_.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      x_.row(static_cast<Eigen::Index>(i)) = data_.inputs.row(static_cast<Eigen::Index>(rows[i]));
      labels_[i] = data_.labels[rows[i]];
    }
    const Tensor& logits = engine_.forward(ckpt_.params.span(), ckpt_.bn_stats, x_, Mode::train);
    const float loss = softmax_cross_entropy<float>(logits, labels_, &dlogits_);
    if (!std::isfinite(loss))
      throw NonFiniteLoss("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch) + " (subset " + ckpt_.meta.subset + ")",
                          epoch, static_cast<int>(batch));
    engine_.backward(ckpt_.params.span(), dlogits_, grad_.span());
    if (!ckpt_.bn_stats.empty()) update_running_stats(ckpt_.bn_stats, engine_.batch_stats());
    sgd_step_inplace(ckpt_.params, grad_, lr_);
  }

  Checkpoint& checkpoint() { return ckpt_; }

 private:
  Checkpoint ckpt_;
  const Dataset& data_;
  Engine<float> engine_;
  ParamVector grad_;
  float lr_;
  Tensor x_;
  Tensor dlogits_;
  std::vector<int> labels_;
};

void record_eval(RunRecord& rec, int epoch, const std::string& model, const Checkpoint& ckpt,
                 const Dataset& train, const Dataset* test) {
  const EvalResult tr = evaluate(ckpt, train.inputs, train.labels);
  rec.rows.push_back({epoch, model + "/train", tr.loss, tr.accuracy});
  if (test) {
    const EvalResult te = evaluate(ckpt, test->inputs, test->labels);
    rec.rows.push_back({epoch, model + "/test", te.loss, te.accuracy});
  }
}

bool should_eval(const TrainConfig& config, int epoch) {
  if (epoch == config.epochs) return true;
  return config.eval_every > 0 && epoch % config.eval_every == 0;
}

TrainingMeta make_meta(const Checkpoint& init, const TrainConfig& config, std::uint64_t noise_seed,
                       const std::string& subset, const Dataset& data, const NoiseSchedule& schedule) {
  TrainingMeta meta = init.meta;
  meta.init_seed = init.meta.init_seed;
  meta.noise_seed = noise_seed;
  meta.subset = subset;
  meta.epoch = 0;
  meta.batch_size = config.batch_size;
  meta.learning_rate = config.learning_rate;
  meta.dataset_size = data.size();
  meta.provenance["dataset"] = data.info.name;
  meta.provenance["normalization"] = config.normalization;
  meta.provenance["noise_mode"] = std::string(to_string(schedule.mode));
  meta.provenance["alignment_rule"] = schedule.alignment_rule();
  meta.provenance["optimizer"] = "sgd";
  return meta;
}

}  // namespace

RunRecord train_pair(const Checkpoint& init, const Dataset& a, const Dataset& b,
                     const Dataset* test, const TrainConfig& config,
                     const NoiseSchedule& schedule) {
  init.validate();
  config.validate(std::min(a.size(), b.size()));
  if (schedule.epochs() != config.epochs)
    throw std::invalid_argument("schedule covers " + std::to_string(schedule.epochs()) +
                                " epochs, config asks for " + std::to_string(config.epochs));
  if (schedule.batch_size != config.batch_size)
    throw std::invalid_argument("schedule batch size differs from config");
  if (config.epochs > 0 && (schedule.epochs_a.front().size() > a.size() ||
                            schedule.epochs_b.front().size() > b.size()))
    throw std::invalid_argument("schedule does not match the subsets");
  Checkpoint start_a = init, start_b = init;
  start_a.meta = make_meta(init, config, schedule.noise_seed, "A", a, schedule);
  start_b.meta = make_meta(init, config, schedule.noise_seed, "B", b, schedule);
  const auto lr = static_cast<float>(config.learning_rate);
  Learner la(start_a, a, lr), lb(start_b, b, lr);
  RunRecord rec;
  for (int e = 0; e < config.epochs; ++e) {
    const std::size_t na = schedule.batches_a(), nb = schedule.batches_b();
    for (std::size_t j = 0; j < std::max(na, nb); ++j) {
      if (j < na) la.step(schedule.batch_a(e, j), e + 1, j);
      if (j < nb) lb.step(schedule.batch_b(e, j), e + 1, j);
    }
    la.checkpoint().meta.epoch = e + 1;
    lb.checkpoint().meta.epoch = e + 1;
    if (should_eval(config, e + 1)) {
      record_eval(rec, e + 1, "a", la.checkpoint(), a, test);
      record_eval(rec, e + 1, "b", lb.checkpoint(), b, test);
    }
  }
  rec.final_a = std::move(la.checkpoint());
  rec.final_b = std::move(lb.checkpoint());
  return rec;
}

RunRecord train_single(const Checkpoint& init, const Dataset& subset, const Dataset* test,
                       const TrainConfig& config, std::uint64_t noise_seed) {
  init.validate();
  config.validate(subset.size());
  RunRecord rec;
  if (config.epochs == 0) {
    rec.final_a = init;
    return rec;
  }
  const NoiseSchedule schedule =
      build_single_schedule(subset.size(), config.batch_size, config.epochs, noise_seed);
  Checkpoint start = init;
  start.meta = make_meta(init, config, noise_seed, "single", subset, schedule);
  Learner learner(start, subset, static_cast<float>(config.learning_rate));
  for (int e = 0; e < config.epochs; ++e) {
    for (std::size_t j = 0; j < schedule.batches_a(); ++j) learner.step(schedule.batch_a(e, j), e + 1, j);
    learner.checkpoint().meta.epoch = e + 1;
    if (should_eval(config, e + 1)) record_eval(rec, e + 1, "a", learner.checkpoint(), subset, test);
  }
  rec.final_a = std::move(learner.checkpoint());
  return rec;
}

}  // namespace lmc
