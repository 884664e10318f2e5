#include "lmc/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "lmc/csv.hpp"
#include "lmc/network.hpp"
#include "lmc/rng.hpp"

namespace lmc {

std::string_view to_string(BnPolicy policy) {
  return policy == BnPolicy::none ? "none" : "recompute";
}

BnPolicy parse_bn_policy(std::string_view name) {
  if (name == "none") return BnPolicy::none;
  if (name == "recompute") return BnPolicy::recompute;
  throw std::invalid_argument("unknown bn policy '" + std::string(name) + "'");
}

std::string_view to_string(BarrierVariant variant) {
  switch (variant) {
    case BarrierVariant::frankle: return "frankle";
    case BarrierVariant::local_min: return "local-min";
    case BarrierVariant::entezari: return "entezari";
    case BarrierVariant::normalized: return "normalized";
  }
  return "?";
}

BarrierVariant parse_barrier_variant(std::string_view name) {
  for (auto v : all_barrier_variants())
    if (to_string(v) == name) return v;
  throw std::invalid_argument("unknown barrier variant '" + std::string(name) + "'");
}

const std::vector<BarrierVariant>& all_barrier_variants() {
  static const std::vector<BarrierVariant> v{BarrierVariant::frankle, BarrierVariant::local_min,
                                             BarrierVariant::entezari, BarrierVariant::normalized};
  return v;
}

ParamVector interpolate(const ParamVector& a, const ParamVector& b, double lambda) {
  if (a.size() != b.size())
    throw std::invalid_argument("parameter length mismatch: " + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("interpolation coefficient outside [0,1]");
  ParamVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    out[i] = static_cast<float>((1.0 - lambda) * a[i] + lambda * static_cast<double>(b[i]));
  return out;
}

namespace {

std::vector<float> lerp(const std::vector<float>& a, const std::vector<float>& b, double lambda) {
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    out[i] = static_cast<float>((1.0 - lambda) * a[i] + lambda * static_cast<double>(b[i]));
  return out;
}

}  // namespace

Checkpoint interpolate(const Checkpoint& a, const Checkpoint& b, double lambda) {
  if (!(a.spec == b.spec)) throw std::invalid_argument("checkpoints have different model specs");
  Checkpoint out;
  out.spec = a.spec;
  out.meta = a.meta;
  out.params = interpolate(a.params, b.params, lambda);
  out.bn_stats.resize(a.bn_stats.size());
  for (std::size_t l = 0; l < a.bn_stats.size(); ++l) {
    out.bn_stats[l].mean = lerp(a.bn_stats[l].mean, b.bn_stats[l].mean, lambda);
    out.bn_stats[l].var = lerp(a.bn_stats[l].var, b.bn_stats[l].var, lambda);
  }
  return out;
}

std::vector<double> uniform_grid(int points) {
  if (points < 2) throw std::invalid_argument("a lambda grid needs at least two points");
  std::vector<double> g(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) g[static_cast<std::size_t>(i)] = static_cast<double>(i) / (points - 1);
  return g;
}

Checkpoint interpolated_model(const Checkpoint& a, const Checkpoint& b, double lambda,
                              const SweepOptions& options) {
  Checkpoint m = interpolate(a, b, lambda);
  if (options.bn == BnPolicy::recompute && m.spec.bn_layer_count() > 0) {
    if (!options.bn_inputs) throw std::invalid_argument("bn recompute requested without data");
    Rng rng(options.bn_seed);
    const auto order = rng.permutation(static_cast<std::size_t>(options.bn_inputs->rows()));
    m = recompute_bn_stats(m, *options.bn_inputs, order, options.bn_passes, options.bn_batch).ckpt;
  }
  return m;
}

std::vector<std::string> InterpolationCurve::sets() const {
  std::vector<std::string> out;
  for (const auto& r : rows)
    if (std::find(out.begin(), out.end(), r.set) == out.end()) out.push_back(r.set);
  return out;
}

std::vector<double> InterpolationCurve::lambdas() const {
  std::vector<double> out;
  for (const auto& r : rows)
    if (out.empty() || out.back() != r.lambda) out.push_back(r.lambda);
  return out;
}

Series InterpolationCurve::series(std::string_view set) const {
  Series s;
  for (const auto& r : rows) {
    if (r.set != set) continue;
    s.lambdas.push_back(r.lambda);
    s.loss.push_back(r.loss);
    s.accuracy.push_back(r.accuracy);
  }
  if (s.lambdas.empty()) throw std::invalid_argument("curve has no set '" + std::string(set) + "'");
  return s;
}

void Series::validate() const {
  if (lambdas.size() < 2) throw std::invalid_argument("a curve needs at least two grid points");
  if (loss.size() != lambdas.size() || accuracy.size() != lambdas.size())
    throw std::invalid_argument("curve columns have different lengths");
  if (lambdas.front() != 0.0 || lambdas.back() != 1.0)
    throw std::invalid_argument("lambda grid must start at 0 and end at 1");
  for (std::size_t i = 1; i < lambdas.size(); ++i)
    if (!(lambdas[i] > lambdas[i - 1]))
      throw std::invalid_argument("lambda grid must be strictly increasing");
}

InterpolationCurve sweep(const Checkpoint& a, const Checkpoint& b, std::span<const double> grid,
                         std::span<const EvalSet> sets, const SweepOptions& options) {
  if (!(a.spec == b.spec)) throw std::invalid_argument("checkpoints have different model specs");
  if (grid.empty()) throw std::invalid_argument("empty lambda grid");
  if (sets.empty()) throw std::invalid_argument("no evaluation sets");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw std::invalid_argument("lambda grid must be strictly increasing");
  const auto trace = polar_trace(a.params, b.params, grid);
  InterpolationCurve curve;
  curve.bn_policy = a.spec.bn_layer_count() > 0 ? options.bn : BnPolicy::none;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Checkpoint m = interpolated_model(a, b, grid[i], options);
    for (const auto& set : sets) {
      const EvalResult r = evaluate(m, set.data->inputs, set.data->labels);
      curve.rows.push_back({grid[i], set.name, r.loss, r.accuracy, trace[i].angle_deg, trace[i].manhattan});
    }
  }
  return curve;
}

namespace {

double endpoint_mean(const std::vector<double>& v) { return 0.5 * (v.front() + v.back()); }

std::size_t index_of(const Series& s, double lambda) {
  for (std::size_t i = 0; i < s.lambdas.size(); ++i)
    if (s.lambdas[i] == lambda) return i;
  throw std::invalid_argument("lambda " + csv::format(lambda) + " is not on the grid");
}

BarrierResult at(const Series& s, BarrierVariant variant, double value, std::size_t i) {
  BarrierResult r;
  r.variant = variant;
  r.value = value;
  r.lambda_star = s.lambdas[i];
  r.delta = s.accuracy[i] - endpoint_mean(s.accuracy);
  return r;
}

}  // namespace

double accuracy_delta(const Series& s, double lambda_star) {
  s.validate();
  return s.accuracy[index_of(s, lambda_star)] - endpoint_mean(s.accuracy);
}

BarrierResult barrier_frankle(const Series& s) {
  s.validate();
  std::size_t i = 0;
  for (std::size_t k = 1; k < s.loss.size(); ++k)
    if (s.loss[k] > s.loss[i] || (s.loss[k] == s.loss[i] && s.accuracy[k] < s.accuracy[i])) i = k;
  return at(s, BarrierVariant::frankle, s.loss[i] - endpoint_mean(s.loss), i);
}

BarrierResult barrier_local_min(const Series& s) {
  s.validate();
  const std::size_t n = s.loss.size();
  const double peak = *std::max_element(s.loss.begin(), s.loss.end());
  std::size_t best = n;
  double best_value = 0.0;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (s.loss[i] != peak) continue;
    const double left = *std::min_element(s.loss.begin(), s.loss.begin() + static_cast<std::ptrdiff_t>(i) + 1);
    const double right = *std::min_element(s.loss.begin() + static_cast<std::ptrdiff_t>(i), s.loss.end());
    const double v = peak - 0.5 * (left + right);
    if (best == n || v > best_value || (v == best_value && s.accuracy[i] < s.accuracy[best])) {
      best = i;
      best_value = v;
    }
  }
  if (best == n) {
    std::size_t i = s.loss.front() == peak ? 0 : n - 1;
    if (s.loss.front() == peak && s.loss.back() == peak && s.accuracy.back() < s.accuracy.front()) i = n - 1;
    return at(s, BarrierVariant::local_min, 0.0, i);
  }
  return at(s, BarrierVariant::local_min, best_value, best);
}

BarrierResult barrier_entezari(const Series& s) {
  s.validate();
  const double l0 = s.loss.front(), l1 = s.loss.back();
  std::size_t best = 0;
  double best_gap = -INFINITY;
  for (std::size_t i = 0; i < s.loss.size(); ++i) {
    const double lam = s.lambdas[i];
    const double gap = s.loss[i] - ((1.0 - lam) * l0 + lam * l1);
    if (gap > best_gap || (gap == best_gap && s.accuracy[i] < s.accuracy[best])) {
      best_gap = gap;
      best = i;
    }
  }
  return at(s, BarrierVariant::entezari, std::max(0.0, best_gap), best);
}

BarrierResult barrier_normalized(const Series& s) {
  BarrierResult r = barrier_frankle(s);
  const double acc = endpoint_mean(s.accuracy);
  if (acc == 0.0) throw std::invalid_argument("normalized barrier undefined: endpoint accuracy is zero");
  r.variant = BarrierVariant::normalized;
  r.value /= acc;
  return r;
}

BarrierResult barrier(const Series& s, BarrierVariant variant) {
  switch (variant) {
    case BarrierVariant::frankle: return barrier_frankle(s);
    case BarrierVariant::local_min: return barrier_local_min(s);
    case BarrierVariant::entezari: return barrier_entezari(s);
    case BarrierVariant::normalized: return barrier_normalized(s);
  }
  throw std::invalid_argument("unknown barrier variant");
}

BarrierResult barrier(const InterpolationCurve& curve, std::string_view set, BarrierVariant variant) {
  BarrierResult r = barrier(curve.series(set), variant);
  r.set = std::string(set);
  return r;
}

namespace {

struct Dots {
  double aa = 0.0, bb = 0.0, ab = 0.0, l1 = 0.0;
};

Dots dots(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("parameter length mismatch: " + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
  Dots d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i], y = b[i];
    d.aa += x * x;
    d.bb += y * y;
    d.ab += x * y;
    d.l1 += std::abs(y - x);
  }
  return d;
}

// Angle between a and (1 - lambda) a + lambda b, as atan2 of the sine and cosine
// components scaled by 1/lambda so the result is nondecreasing in lambda.
double angle_along(const Dots& d, double lambda) {
  if (lambda == 0.0) return 0.0;
  const double sine = std::sqrt(std::max(0.0, d.aa * d.bb - d.ab * d.ab));
  const double cosine = d.aa / lambda + (d.ab - d.aa);
  return std::atan2(sine, cosine) * 180.0 / std::numbers::pi;
}

}  // namespace

Similarity cosine_angle(std::span<const float> a, std::span<const float> b) {
  const Dots d = dots(a, b);
  if (d.aa == 0.0 || d.bb == 0.0) throw std::invalid_argument("cosine undefined for a zero vector");
  Similarity s;
  s.cosine = std::clamp(d.ab / std::sqrt(d.aa * d.bb), -1.0, 1.0);
  s.angle_deg = angle_along(d, 1.0);
  s.manhattan = d.l1;
  s.param_count = a.size();
  return s;
}

double manhattan(std::span<const float> a, std::span<const float> b) { return dots(a, b).l1; }

Similarity similarity(const ParamVector& a, const ParamVector& b) {
  return cosine_angle(a.span(), b.span());
}

double noise_scale(double learning_rate, std::size_t dataset_size, std::size_t batch_size) {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (batch_size == 0 || batch_size > dataset_size)
    throw std::invalid_argument("batch size must lie in [1, N]");
  return learning_rate * (static_cast<double>(dataset_size) / static_cast<double>(batch_size) - 1.0);
}

std::vector<PolarPoint> polar_trace(const ParamVector& a, const ParamVector& b,
                                    std::span<const double> grid) {
  const Dots d = dots(a.span(), b.span());
  if (d.aa == 0.0) throw std::invalid_argument("angle from a zero parameter vector is undefined");
  std::vector<PolarPoint> out;
  out.reserve(grid.size());
  for (double lam : grid) {
    if (!(lam >= 0.0 && lam <= 1.0)) throw std::invalid_argument("interpolation coefficient outside [0,1]");
    out.push_back({lam, angle_along(d, lam), lam * d.l1});
  }
  return out;
}

void write_curve_csv(const InterpolationCurve& curve, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "lambda,set,loss,accuracy,angle_from_a_deg,manhattan_from_a\n";
  for (const auto& r : curve.rows)
    out << csv::format(r.lambda) << ',' << r.set << ',' << csv::format(r.loss) << ','
        << csv::format(r.accuracy) << ',' << csv::format(r.angle_deg) << ','
        << csv::format(r.manhattan) << '\n';
  csv::write_atomic(path, out.str());
}

InterpolationCurve read_curve_csv(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  const auto cl = t.column("lambda"), cs = t.column("set"), closs = t.column("loss"),
             cacc = t.column("accuracy"), cang = t.column("angle_from_a_deg"),
             cman = t.column("manhattan_from_a");
  InterpolationCurve curve;
  for (const auto& f : t.rows)
    curve.rows.push_back({csv::to_double(f[cl]), f[cs], csv::to_double(f[closs]),
                          csv::to_double(f[cacc]), csv::to_double(f[cang]), csv::to_double(f[cman])});
  return curve;
}

void write_barrier_csv(const std::vector<BarrierResult>& results, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "variant,set,value,lambda_star,delta\n";
  for (const auto& r : results)
    out << to_string(r.variant) << ',' << r.set << ',' << csv::format(r.value) << ','
        << csv::format(r.lambda_star) << ',' << csv::format(r.delta) << '\n';
  csv::write_atomic(path, out.str());
}

std::vector<BarrierResult> read_barrier_csv(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  const auto cv = t.column("variant"), cs = t.column("set"), cval = t.column("value"),
             cl = t.column("lambda_star"), cd = t.column("delta");
  std::vector<BarrierResult> out;
  for (const auto& f : t.rows)
    out.push_back({parse_barrier_variant(f[cv]), f[cs], csv::to_double(f[cval]),
                   csv::to_double(f[cl]), csv::to_double(f[cd])});
  return out;
}

Tensor concat_rows(const Tensor& top, const Tensor& bottom) {
  if (top.cols() != bottom.cols()) throw std::invalid_argument("column count mismatch");
  Tensor out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

}  // namespace lmc
