#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lmc/checkpoint.hpp"
#include "lmc/dataset.hpp"

namespace lmc {

enum class BnPolicy { none, recompute };
enum class BarrierVariant { frankle, local_min, entezari, normalized };

std::string_view to_string(BnPolicy policy);
BnPolicy parse_bn_policy(std::string_view name);
std::string_view to_string(BarrierVariant variant);
BarrierVariant parse_barrier_variant(std::string_view name);
const std::vector<BarrierVariant>& all_barrier_variants();

/// (1 - lambda) * a + lambda * b, evaluated in double and rounded once.
ParamVector interpolate(const ParamVector& a, const ParamVector& b, double lambda);

/// Interpolates parameters and BN running statistics; metadata is taken from `a`.
Checkpoint interpolate(const Checkpoint& a, const Checkpoint& b, double lambda);

/// `points` uniform values from 0 to 1 inclusive.
std::vector<double> uniform_grid(int points = 21);

struct EvalSet {
  std::string name;  // "test", "train-a", "train-b", ...
  const Dataset* data = nullptr;
};

struct SweepOptions {
  BnPolicy bn = BnPolicy::recompute;
  const Tensor* bn_inputs = nullptr;  // data for recomputation (union of the train subsets)
  std::size_t bn_batch = 32;
  int bn_passes = 1;
  std::uint64_t bn_seed = 0;  // order of recomputation batches
};

/// The model used at `lambda` under `options` (BN recomputed when requested and present).
Checkpoint interpolated_model(const Checkpoint& a, const Checkpoint& b, double lambda,
                              const SweepOptions& options);

struct CurveRow {
  double lambda = 0.0;
  std::string set;
  double loss = 0.0;
  double accuracy = 0.0;
  double angle_deg = 0.0;  // angle between theta_A and the interpolated parameters
  double manhattan = 0.0;  // L1 distance from theta_A
};

/// Loss and accuracy of one evaluation set along the grid.
struct Series {
  std::vector<double> lambdas;
  std::vector<double> loss;
  std::vector<double> accuracy;

  void validate() const;
};

struct InterpolationCurve {
  std::vector<CurveRow> rows;  // ordered by lambda, then by set in evaluation order
  BnPolicy bn_policy = BnPolicy::none;

  std::vector<std::string> sets() const;
  std::vector<double> lambdas() const;
  Series series(std::string_view set) const;
};

InterpolationCurve sweep(const Checkpoint& a, const Checkpoint& b, std::span<const double> grid,
                         std::span<const EvalSet> sets, const SweepOptions& options);

struct BarrierResult {
  BarrierVariant variant = BarrierVariant::frankle;
  std::string set;
  double value = 0.0;
  double lambda_star = 0.0;
  double delta = 0.0;  // accuracy at lambda_star minus the endpoint mean
};

/// Ties in the maximizing grid point go to the lower accuracy, then the smaller lambda.
BarrierResult barrier_frankle(const Series& s);
/// Peak over the flanking minima; zero when the maximum sits only at an endpoint.
/// Among tied interior peaks the one with the largest value wins, then the lower accuracy.
BarrierResult barrier_local_min(const Series& s);
BarrierResult barrier_entezari(const Series& s);
/// Frankle value over mean endpoint accuracy; throws when that mean is zero.
BarrierResult barrier_normalized(const Series& s);
BarrierResult barrier(const Series& s, BarrierVariant variant);
BarrierResult barrier(const InterpolationCurve& curve, std::string_view set, BarrierVariant variant);

/// Accuracy at the grid point `lambda_star` minus the endpoint mean.
double accuracy_delta(const Series& s, double lambda_star);

struct Similarity {
  double cosine = 0.0;
  double angle_deg = 0.0;
  double manhattan = 0.0;
  std::size_t param_count = 0;
};

/// Throws std::invalid_argument for a zero vector.
Similarity cosine_angle(std::span<const float> a, std::span<const float> b);
double manhattan(std::span<const float> a, std::span<const float> b);
Similarity similarity(const ParamVector& a, const ParamVector& b);

/// g = eps * (N / B - 1).
double noise_scale(double learning_rate, std::size_t dataset_size, std::size_t batch_size);

struct PolarPoint {
  double lambda = 0.0;
  double angle_deg = 0.0;
  double manhattan = 0.0;
};

/// Angle and L1 distance from theta_A to each interpolated point, evaluated in
/// closed form so both are exactly nondecreasing in lambda.
std::vector<PolarPoint> polar_trace(const ParamVector& a, const ParamVector& b,
                                    std::span<const double> grid);

void write_curve_csv(const InterpolationCurve& curve, const std::filesystem::path& path);
InterpolationCurve read_curve_csv(const std::filesystem::path& path);
void write_barrier_csv(const std::vector<BarrierResult>& results, const std::filesystem::path& path);
std::vector<BarrierResult> read_barrier_csv(const std::filesystem::path& path);

/// Row-wise concatenation, e.g. for BN recomputation over both subsets.
Tensor concat_rows(const Tensor& top, const Tensor& bottom);

}  // namespace lmc
