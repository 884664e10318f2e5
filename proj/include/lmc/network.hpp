#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lmc/checkpoint.hpp"
#include "lmc/model_spec.hpp"

namespace lmc {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Tensor = Matrix<float>;

enum class Mode { train, eval };

inline constexpr double kBnMomentum = 0.1;
inline constexpr double kBnEpsilon = 1e-5;

/// A minibatch: one sample per row (features flattened as C x H x W).
struct Batch {
  Tensor inputs;
  std::vector<int> labels;

  void validate(const ModelSpec& spec) const;
};

/// Forward/backward engine over an externally owned parameter vector.
/// Holds activation caches, so one instance must not be shared across threads.
template <typename T>
class Engine {
 public:
  explicit Engine(const ModelSpec& spec);
  ~Engine();
  Engine(Engine&&) noexcept;
  Engine& operator=(Engine&&) noexcept;

  const ModelSpec& spec() const;

  /// Logits for `x`. Train mode normalizes with batch statistics (retrievable via
  /// batch_stats()); eval mode uses `running`.
  const Matrix<T>& forward(std::span<const T> params,
                           const std::vector<BasicBnStats<T>>& running, const Matrix<T>& x,
                           Mode mode);

  /// Accumulates dLoss/dparams into `grad` (which is overwritten) given dLoss/dlogits.
  /// Must follow a forward() call on the same inputs.
  void backward(std::span<const T> params, const Matrix<T>& dlogits, std::span<T> grad);

  /// Per-BN-block batch mean and unbiased batch variance from the last train forward.
  const std::vector<BasicBnStats<T>>& batch_stats() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Mean softmax cross-entropy; fills `dlogits` with its gradient when non-null.
template <typename T>
T softmax_cross_entropy(const Matrix<T>& logits, std::span<const int> labels,
                        Matrix<T>* dlogits);

template <typename T>
struct BasicLossAndGrad {
  T loss = 0;
  std::vector<T, Eigen::aligned_allocator<T>> grad;
  std::vector<BasicBnStats<T>> batch_stats;
};

/// Train-mode loss and gradient at an arbitrary precision. Running statistics are
/// only read for eval mode.
template <typename T>
BasicLossAndGrad<T> compute_loss_and_grad(const ModelSpec& spec, std::span<const T> params,
                                          const std::vector<BasicBnStats<T>>& running,
                                          const Matrix<T>& inputs, std::span<const int> labels,
                                          Mode mode = Mode::train);

struct LossAndGrad {
  double loss = 0.0;
  ParamVector grad;
  std::vector<BnStats> batch_stats;
};

Checkpoint init_model(const ModelSpec& spec, std::uint64_t seed);

/// Eval-mode logits; pure.
Tensor forward(const Checkpoint& ckpt, const Batch& batch);
/// In train mode BN uses batch statistics and the running statistics of `ckpt`
/// are updated by an exponential moving average.
Tensor forward(Checkpoint& ckpt, const Batch& batch, Mode mode);

/// Train-mode mean cross-entropy and gradient; does not touch running statistics.
/// Throws NonFiniteLoss.
LossAndGrad loss_and_grad(const Checkpoint& ckpt, const Batch& batch);

/// running = (1 - momentum) * running + momentum * batch.
void update_running_stats(std::vector<BnStats>& running, const std::vector<BnStats>& batch,
                          double momentum = kBnMomentum);

void sgd_step_inplace(ParamVector& params, const ParamVector& grad, float learning_rate);
Checkpoint sgd_step(const Checkpoint& ckpt, const ParamVector& grad, double learning_rate);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<int> predictions;
  Tensor probabilities;  // filled only when requested
};

/// Eval-mode metrics over the selected rows of `inputs` (all rows when `rows` is empty).
EvalResult evaluate(const Checkpoint& ckpt, const Tensor& inputs, std::span<const int> labels,
                    std::span<const std::size_t> rows = {}, bool keep_probabilities = false,
                    std::size_t chunk = 500);

struct BnRecompute {
  Checkpoint ckpt;
  bool applied = false;
  std::string warning;
};

/// Replaces running statistics by the cumulative average of train-mode batch
/// statistics over `passes` sweeps of the selected rows, parameters frozen.
BnRecompute recompute_bn_stats(const Checkpoint& ckpt, const Tensor& inputs,
                               std::span<const std::size_t> rows, int passes = 1,
                               std::size_t batch_size = 256);

/// Gathers rows (and labels) into a batch.
Batch gather_batch(const Tensor& inputs, std::span<const int> labels,
                   std::span<const std::size_t> rows);

}  // namespace lmc
