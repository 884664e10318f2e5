#pragma once

// Straightforward re-derivations of the scalar observables, kept apart from the
// library so tests compare two independent computations.

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace oracle {

struct Curve {
  std::vector<double> lambda;
  std::vector<double> loss;
  std::vector<double> acc;
};

inline Curve tabulate(int points, const std::function<double(double)>& loss,
                      const std::function<double(double)>& acc = [](double) { return 1.0; }) {
  Curve c;
  for (int i = 0; i < points; ++i) {
    const double l = static_cast<double>(i) / (points - 1);
    c.lambda.push_back(l);
    c.loss.push_back(loss(l));
    c.acc.push_back(acc(l));
  }
  return c;
}

struct Barrier {
  double value = 0.0;
  std::size_t at = 0;
};

inline Barrier frankle(const Curve& c) {
  const std::size_t n = c.loss.size();
  Barrier b{c.loss[0], 0};
  for (std::size_t i = 1; i < n; ++i) {
    const bool tie_worse = c.loss[i] == b.value && c.acc[i] < c.acc[b.at];
    if (c.loss[i] > b.value || tie_worse) b = {c.loss[i], i};
  }
  b.value -= (c.loss[0] + c.loss[n - 1]) / 2;
  return b;
}

inline Barrier local_min(const Curve& c) {
  const std::size_t n = c.loss.size();
  double top = c.loss[0];
  for (double v : c.loss) top = v > top ? v : top;
  Barrier best{0.0, n - 1};
  if (c.loss[0] == top && !(c.loss[n - 1] == top && c.acc[n - 1] < c.acc[0])) best.at = 0;
  bool interior = false;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (c.loss[i] != top) continue;
    double left = c.loss[i];
    double right = c.loss[i];
    for (std::size_t k = 0; k <= i; ++k) left = c.loss[k] < left ? c.loss[k] : left;
    for (std::size_t k = i; k < n; ++k) right = c.loss[k] < right ? c.loss[k] : right;
    const double v = top - (left + right) / 2;
    if (!interior || v > best.value || (v == best.value && c.acc[i] < c.acc[best.at])) best = {v, i};
    interior = true;
  }
  return best;
}

inline Barrier entezari(const Curve& c) {
  const std::size_t n = c.loss.size();
  Barrier b{-INFINITY, 0};
  for (std::size_t i = 0; i < n; ++i) {
    const double chord = (1 - c.lambda[i]) * c.loss[0] + c.lambda[i] * c.loss[n - 1];
    const double gap = c.loss[i] - chord;
    if (gap > b.value || (gap == b.value && c.acc[i] < c.acc[b.at])) b = {gap, i};
  }
  if (b.value < 0) b.value = 0;
  return b;
}

inline double normalized(const Curve& c) {
  return frankle(c).value / ((c.acc.front() + c.acc.back()) / 2);
}

inline double delta(const Curve& c, std::size_t at) {
  return c.acc[at] - (c.acc.front() + c.acc.back()) / 2;
}

inline double wrong_agreement(const std::vector<int>& p, const std::vector<int>& q,
                              const std::vector<int>& y) {
  int count = 0;
  for (std::size_t m = 0; m < y.size(); ++m) count += (p[m] == q[m] && p[m] != y[m]) ? 1 : 0;
  return static_cast<double>(count) / static_cast<double>(y.size());
}

inline double wrong_disagreement(const std::vector<int>& p, const std::vector<int>& q,
                                 const std::vector<int>& y) {
  int count = 0;
  for (std::size_t m = 0; m < y.size(); ++m)
    count += (p[m] != q[m] && p[m] != y[m] && q[m] != y[m]) ? 1 : 0;
  return static_cast<double>(count) / static_cast<double>(y.size());
}

inline int majority(const std::vector<int>& votes, int classes) {
  std::vector<int> tally(static_cast<std::size_t>(classes), 0);
  for (int v : votes) ++tally[static_cast<std::size_t>(v)];
  int best = 0;
  for (int k = 1; k < classes; ++k)
    if (tally[static_cast<std::size_t>(k)] > tally[static_cast<std::size_t>(best)]) best = k;
  return best;
}

}  // namespace oracle
