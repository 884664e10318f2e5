#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "lmc/checkpoint_io.hpp"
#include "lmc/errors.hpp"
#include "lmc/network.hpp"
#include "lmc/rng.hpp"
#include "oracles/gradient_check.hpp"
#include "support.hpp"

using namespace lmc;
using namespace gradcheck;

namespace {

// Straight-loop forward pass in double, written against the documented parameter
// layout (per block: W, b, then gamma, beta when BN; head last).
struct Reference {
  const ModelSpec& spec;
  const std::vector<double>& p;
  const std::vector<BasicBnStats<double>>* running;  // null: batch statistics

  std::vector<std::vector<double>> logits(const std::vector<std::vector<double>>& xs) const {
    const bool conv = spec.arch != Architecture::mlp;
    std::size_t off = 0;
    int c = conv ? spec.input_channels : spec.input_dim();
    int h = conv ? spec.input_height : 1, w = conv ? spec.input_width : 1;
    std::vector<std::vector<double>> act = xs, prev_in;
    int bn_index = 0;
    for (int b = 0; b < spec.depth(); ++b) {
      const int oc = spec.widths[static_cast<std::size_t>(b)];
      const int s = conv ? spec.stride(b) : 1;
      const int oh = conv ? (h - 1) / s + 1 : 1, ow = conv ? (w - 1) / s + 1 : 1;
      const int k = conv ? 9 : 1;
      const std::size_t wo = off;
      off += static_cast<std::size_t>(oc * c * k);
      const std::size_t bo = off;
      off += static_cast<std::size_t>(oc);
      std::vector<std::vector<double>> z(act.size(), std::vector<double>(static_cast<std::size_t>(oc * oh * ow)));
      for (std::size_t n = 0; n < act.size(); ++n)
        for (int o = 0; o < oc; ++o)
          for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
              double v = p[bo + static_cast<std::size_t>(o)];
              for (int ci = 0; ci < c; ++ci) {
                if (!conv) {
                  v += p[wo + static_cast<std::size_t>(o * c + ci)] * act[n][static_cast<std::size_t>(ci)];
                  continue;
                }
                for (int ky = 0; ky < 3; ++ky)
                  for (int kx = 0; kx < 3; ++kx) {
                    const int iy = y * s + ky - 1, ix = x * s + kx - 1;
                    if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                    v += p[wo + static_cast<std::size_t>((o * c + ci) * 9 + ky * 3 + kx)] *
                         act[n][static_cast<std::size_t>((ci * h + iy) * w + ix)];
                  }
              }
              z[n][static_cast<std::size_t>((o * oh + y) * ow + x)] = v;
            }
      if (spec.has_bn(b)) {
        const std::size_t go = off, beo = off + static_cast<std::size_t>(oc);
        off += 2 * static_cast<std::size_t>(oc);
        const int sp = oh * ow;
        for (int o = 0; o < oc; ++o) {
          double mean = 0, var = 0;
          if (running) {
            mean = (*running)[static_cast<std::size_t>(bn_index)].mean[static_cast<std::size_t>(o)];
            var = (*running)[static_cast<std::size_t>(bn_index)].var[static_cast<std::size_t>(o)];
          } else {
            double cnt = 0;
            for (auto& zn : z)
              for (int q = 0; q < sp; ++q, ++cnt) mean += zn[static_cast<std::size_t>(o * sp + q)];
            mean /= cnt;
            for (auto& zn : z)
              for (int q = 0; q < sp; ++q) var += std::pow(zn[static_cast<std::size_t>(o * sp + q)] - mean, 2);
            var /= cnt;
          }
          for (auto& zn : z)
            for (int q = 0; q < sp; ++q) {
              double& v = zn[static_cast<std::size_t>(o * sp + q)];
              v = p[go + static_cast<std::size_t>(o)] * (v - mean) / std::sqrt(var + kBnEpsilon) +
                  p[beo + static_cast<std::size_t>(o)];
            }
        }
        ++bn_index;
      }
      if (spec.arch == Architecture::conv_residual && b >= 2 && b % 2 == 0)
        for (std::size_t n = 0; n < z.size(); ++n)
          for (std::size_t q = 0; q < z[n].size(); ++q) z[n][q] += prev_in[n][q];
      for (auto& zn : z)
        for (auto& v : zn) v = std::max(0.0, v);
      prev_in = act;
      act = std::move(z);
      c = oc;
      h = oh;
      w = ow;
    }
    if (conv) {
      for (auto& a : act) {
        std::vector<double> pooled(static_cast<std::size_t>(c));
        for (int ci = 0; ci < c; ++ci) {
          for (int q = 0; q < h * w; ++q) pooled[static_cast<std::size_t>(ci)] += a[static_cast<std::size_t>(ci * h * w + q)];
          pooled[static_cast<std::size_t>(ci)] /= h * w;
        }
        a = pooled;
      }
    }
    std::vector<std::vector<double>> out;
    const std::size_t wo = off, bo = off + static_cast<std::size_t>(spec.classes * c);
    for (auto& a : act) {
      std::vector<double> l(static_cast<std::size_t>(spec.classes));
      for (int k = 0; k < spec.classes; ++k) {
        double v = p[bo + static_cast<std::size_t>(k)];
        for (int i = 0; i < c; ++i) v += p[wo + static_cast<std::size_t>(k * c + i)] * a[static_cast<std::size_t>(i)];
        l[static_cast<std::size_t>(k)] = v;
      }
      out.push_back(l);
    }
    return out;
  }
};

Batch make_batch(const ModelSpec& spec, int rows, std::uint64_t seed) {
  Rng rng(seed);
  Batch b;
  b.inputs.resize(rows, spec.input_dim());
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < spec.input_dim(); ++j) b.inputs(i, j) = static_cast<float>(rng.normal());
  for (int i = 0; i < rows; ++i) b.labels.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.classes))));
  return b;
}

}  // namespace

TEST_CASE("parameter count of the one-hidden-layer MNIST MLP") {
  const ModelSpec spec = ModelSpec::mlp(784, {512}, 10);
  CHECK(spec.param_count() == 407050);
  CHECK(init_model(spec, 1).params.size() == 407050);
}

TEST_CASE("parameter count includes BN affine terms and 3x3 kernels") {
  CHECK(ModelSpec::mlp(4, {3}, 2, {true}).param_count() == 4 * 3 + 3 + 6 + 3 * 2 + 2);
  const auto conv = ModelSpec::conv(Architecture::conv_plain, 2, 5, 5, {4}, 3, {}, {});
  CHECK(conv.param_count() == 4 * 2 * 9 + 4 + 3 * 4 + 3);
}

TEST_CASE("parameter and gradient storage is 64-byte aligned") {
  // Vectorized dot products peel differently on unaligned data, which would make
  // training results depend on where the allocator placed the vectors.
  for (std::size_t n : {1u, 7u, 1000u}) {
    ParamVector p(n);
    CHECK(reinterpret_cast<std::uintptr_t>(p.data()) % 64 == 0);
  }
  const Checkpoint ckpt = init_model(ModelSpec::mlp(5, {3}, 2), 1);
  Batch batch;
  batch.inputs = Tensor::Ones(2, 5);
  batch.labels = {0, 1};
  CHECK(reinterpret_cast<std::uintptr_t>(loss_and_grad(ckpt, batch).grad.data()) % 64 == 0);
}

TEST_CASE("zero parameters give uniform logits and loss ln K") {
  const ModelSpec spec = ModelSpec::mlp(784, {512}, 10);
  Checkpoint ckpt = init_model(spec, 3);
  std::fill(ckpt.params.values().begin(), ckpt.params.values().end(), 0.0f);
  const Batch batch = make_batch(spec, 8, 5);
  const LossAndGrad lg = loss_and_grad(ckpt, batch);
  CHECK(lg.loss == doctest::Approx(std::log(10.0)).epsilon(1e-6));
}

TEST_CASE("engine forward matches the reference implementation") {
  const std::vector<ModelSpec> specs{
      ModelSpec::mlp(6, {5, 4}, 3),
      ModelSpec::mlp(6, {5, 4}, 3, {true, false}),
      ModelSpec::conv(Architecture::conv_plain, 2, 5, 4, {3, 4}, 3, {true, true}, {2, 1}),
      ModelSpec::conv(Architecture::conv_residual, 1, 6, 6, {3, 3, 3}, 4, {false, true, true}, {2, 1, 1}),
  };
  for (const auto& spec : specs) {
    CAPTURE(to_string(spec.arch));
    Rng rng(11);
    const auto p = random_params(spec.param_count(), rng);
    const auto x = random_inputs(5, spec.input_dim(), rng);
    std::vector<std::vector<double>> xs;
    for (int i = 0; i < 5; ++i) xs.emplace_back(x.row(i).data(), x.row(i).data() + x.cols());
    Engine<double> engine(spec);
    auto stats = unit_stats(spec);
    for (auto& s : stats)
      for (std::size_t c = 0; c < s.mean.size(); ++c) {
        s.mean[c] = 0.1 * static_cast<double>(c);
        s.var[c] = 0.5 + 0.25 * static_cast<double>(c);
      }
    for (Mode mode : {Mode::train, Mode::eval}) {
      const auto& got = engine.forward(p, stats, x, mode);
      const Reference ref{spec, p, mode == Mode::eval ? &stats : nullptr};
      const auto want = ref.logits(xs);
      for (int i = 0; i < 5; ++i)
        for (int k = 0; k < spec.classes; ++k)
          CHECK(got(i, k) == doctest::Approx(want[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)]).epsilon(1e-10));
    }
  }
}

TEST_CASE("analytic gradients match central differences") {
  struct Case {
    std::string name;
    ModelSpec spec;
    int batch;
  };
  const std::vector<Case> cases{
      {"mlp", ModelSpec::mlp(6, {5, 4}, 3), 7},
      {"mlp+bn", ModelSpec::mlp(6, {5, 4}, 3, {true, true}), 7},
      {"conv-residual", ModelSpec::conv(Architecture::conv_residual, 2, 5, 5, {3, 3, 3}, 3, {true, false, true}, {2, 1, 1}), 4},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    for (std::uint64_t point = 0; point < 10; ++point) {
      CAPTURE(point);
      CHECK(gradient_error(c.spec, 100 + point, c.batch) <= 1e-3);
    }
  }
}

TEST_CASE("float and double paths agree") {
  const ModelSpec spec = ModelSpec::mlp(6, {5}, 3, {true});
  const Checkpoint ckpt = init_model(spec, 9);
  const Batch batch = make_batch(spec, 6, 2);
  const LossAndGrad lg = loss_and_grad(ckpt, batch);
  std::vector<double> p(ckpt.params.values().begin(), ckpt.params.values().end());
  const Matrix<double> x = batch.inputs.cast<double>();
  const auto d = compute_loss_and_grad<double>(spec, p, unit_stats(spec), x, batch.labels);
  CHECK(lg.loss == doctest::Approx(d.loss).epsilon(1e-5));
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(lg.grad[i] == doctest::Approx(d.grad[i]).epsilon(1e-3).scale(1e-4));
}

TEST_CASE("init is deterministic per seed") {
  const ModelSpec spec = ModelSpec::mlp(10, {8, 8}, 4, {false, true});
  CHECK(init_model(spec, 5).params == init_model(spec, 5).params);
  CHECK_FALSE(init_model(spec, 5).params == init_model(spec, 6).params);
  const Checkpoint c = init_model(spec, 5);
  REQUIRE(c.bn_stats.size() == 1);
  CHECK(c.bn_stats[0].mean == std::vector<float>(8, 0.0f));
  CHECK(c.bn_stats[0].var == std::vector<float>(8, 1.0f));
  const float bound = 1.0f / std::sqrt(10.0f);
  for (std::size_t i = 0; i < 80; ++i) CHECK(std::abs(c.params[i]) <= bound);
}

TEST_CASE("eval forward is pure and train forward updates running statistics") {
  const ModelSpec spec = ModelSpec::mlp(5, {4}, 3, {true});
  Checkpoint ckpt = init_model(spec, 1);
  const Batch batch = make_batch(spec, 6, 4);
  const Checkpoint before = ckpt;
  const Tensor a = forward(ckpt, batch);
  const Tensor b = forward(ckpt, batch);
  CHECK(a == b);
  CHECK(ckpt.bn_stats[0].mean == before.bn_stats[0].mean);

  const LossAndGrad lg = loss_and_grad(ckpt, batch);
  forward(ckpt, batch, Mode::train);
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(ckpt.bn_stats[0].mean[c] == doctest::Approx(0.1 * lg.batch_stats[0].mean[c]).epsilon(1e-6));
    CHECK(ckpt.bn_stats[0].var[c] == doctest::Approx(0.9 + 0.1 * lg.batch_stats[0].var[c]).epsilon(1e-6));
  }
}

TEST_CASE("train-mode BN needs at least two values per channel") {
  const ModelSpec spec = ModelSpec::mlp(5, {4}, 3, {true});
  const Checkpoint ckpt = init_model(spec, 1);
  CHECK_THROWS(loss_and_grad(ckpt, make_batch(spec, 1, 4)));
  CHECK_NOTHROW(forward(ckpt, make_batch(spec, 1, 4)));
}

TEST_CASE("softmax cross-entropy stays finite for extreme logits") {
  Tensor logits(2, 3);
  logits << 1000.0f, 0.0f, -1000.0f, -500.0f, 500.0f, 0.0f;
  Tensor d;
  const std::vector<int> y{0, 1};
  const float loss = softmax_cross_entropy<float>(logits, y, &d);
  CHECK(std::isfinite(loss));
  CHECK(loss == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(d.allFinite());
}

TEST_CASE("sgd step") {
  const ModelSpec spec = ModelSpec::mlp(3, {2}, 2);
  const Checkpoint ckpt = init_model(spec, 1);
  ParamVector grad(ckpt.params.size(), 1.0f);
  const Checkpoint next = sgd_step(ckpt, grad, 0.5);
  for (std::size_t i = 0; i < grad.size(); ++i) CHECK(next.params[i] == doctest::Approx(ckpt.params[i] - 0.5f));
  CHECK_THROWS_AS(sgd_step(ckpt, grad, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(sgd_step(ckpt, ParamVector(3), 0.1), std::invalid_argument);
}

TEST_CASE("non-finite loss is reported") {
  const ModelSpec spec = ModelSpec::mlp(3, {2}, 2);
  Checkpoint ckpt = init_model(spec, 1);
  ckpt.params[0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(loss_and_grad(ckpt, make_batch(spec, 4, 1)), NonFiniteLoss);
}

TEST_CASE("spec validation") {
  CHECK_THROWS_AS(ModelSpec::mlp(0, {4}, 2).validate(), SpecError);
  CHECK_THROWS_AS(ModelSpec::mlp(4, {}, 2).validate(), SpecError);
  CHECK_THROWS_AS(ModelSpec::mlp(4, {3}, 0).validate(), SpecError);
  CHECK_THROWS_AS(ModelSpec::mlp(4, {3}, 2, {true, true}).validate(), SpecError);
  // Residual pairs need matching channels and stride 1.
  CHECK_THROWS_AS(ModelSpec::conv(Architecture::conv_residual, 1, 8, 8, {4, 4, 8}, 2, {}, {}).validate(), SpecError);
  CHECK_THROWS_AS(ModelSpec::conv(Architecture::conv_residual, 1, 8, 8, {4, 4, 4}, 2, {}, {1, 2, 1}).validate(), SpecError);
  CHECK_THROWS_AS(ModelSpec::conv(Architecture::conv_residual, 1, 8, 8, {4, 4}, 2, {}, {}).validate(), SpecError);
  CHECK_NOTHROW(ModelSpec::conv(Architecture::conv_residual, 1, 8, 8, {4, 4, 4}, 2, {}, {2, 1, 1}).validate());
}

TEST_CASE("evaluate reports mean loss, accuracy and predictions") {
  const ModelSpec spec = ModelSpec::mlp(2, {2}, 2);
  Checkpoint ckpt = init_model(spec, 1);
  // Identity hidden layer, head copies the hidden units.
  ckpt.params = ParamVector(std::vector<float>{1, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0});
  Tensor x(4, 2);
  x << 2, 0, 0, 2, 3, 1, 1, 3;
  const std::vector<int> y{0, 1, 1, 1};
  const EvalResult r = evaluate(ckpt, x, y, {}, true, 3);
  CHECK(r.predictions == std::vector<int>{0, 1, 0, 1});
  CHECK(r.accuracy == doctest::Approx(0.75));
  const double l0 = std::log(1 + std::exp(-2.0)), l2 = std::log(1 + std::exp(2.0)), l3 = std::log(1 + std::exp(-2.0));
  CHECK(r.loss == doctest::Approx((l0 + l0 + l2 + l3) / 4).epsilon(1e-6));
  CHECK(r.probabilities.rows() == 4);
  CHECK(r.probabilities.row(0).sum() == doctest::Approx(1.0));
}

TEST_CASE("BN recomputation") {
  const ModelSpec plain = ModelSpec::mlp(4, {3}, 2);
  const Checkpoint ckpt = init_model(plain, 1);
  const Batch b = make_batch(plain, 20, 3);
  const BnRecompute none = recompute_bn_stats(ckpt, b.inputs, {}, 1, 8);
  CHECK_FALSE(none.applied);
  CHECK_FALSE(none.warning.empty());

  const ModelSpec bn = ModelSpec::mlp(4, {3}, 2, {true});
  const Checkpoint c2 = init_model(bn, 1);
  const BnRecompute r = recompute_bn_stats(c2, b.inputs, {}, 1, 20);
  CHECK(r.applied);
  const LossAndGrad lg = loss_and_grad(c2, b);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(r.ckpt.bn_stats[0].mean[c] == doctest::Approx(lg.batch_stats[0].mean[c]).epsilon(1e-5));
    CHECK(r.ckpt.bn_stats[0].var[c] == doctest::Approx(lg.batch_stats[0].var[c]).epsilon(1e-5));
  }
  CHECK(r.ckpt.params == c2.params);
}

TEST_CASE("checkpoint round-trips bitwise") {
  const ModelSpec spec = ModelSpec::conv(Architecture::conv_residual, 1, 6, 6, {3, 3, 3}, 4, {true, false, true}, {2, 1, 1});
  Checkpoint c = init_model(spec, 42);
  c.meta.noise_seed = 7;
  c.meta.subset = "A";
  c.meta.epoch = 3;
  c.meta.learning_rate = 1e-3;
  c.bn_stats[1].var[2] = 0.123f;
  const auto bytes = encode_checkpoint(c);
  const Checkpoint d = decode_checkpoint(bytes);
  CHECK(d.params == c.params);
  CHECK(d.spec == c.spec);
  CHECK(d.meta.subset == "A");
  CHECK(d.meta.learning_rate == 1e-3);
  CHECK(encode_checkpoint(d) == bytes);

  testing::TempDir dir("ckpt");
  save_checkpoint(c, dir / "m.lmck");
  CHECK(encode_checkpoint(load_checkpoint(dir / "m.lmck")) == bytes);
}

TEST_CASE("malformed checkpoints carry byte offsets") {
  const Checkpoint c = init_model(ModelSpec::mlp(3, {2}, 2, {true}), 1);
  const auto good = encode_checkpoint(c);
  auto offset_of = [](const std::vector<std::uint8_t>& b) -> std::int64_t {
    try {
      decode_checkpoint(b);
    } catch (const ParseError& e) {
      return static_cast<std::int64_t>(e.offset());
    }
    return -1;
  };
  auto bad_magic = good;
  bad_magic[0] = 'X';
  CHECK(offset_of(bad_magic) == 0);
  auto bad_version = good;
  bad_version[4] = 9;
  CHECK(offset_of(bad_version) == 4);
  auto truncated = good;
  truncated.resize(good.size() - 3);
  CHECK(offset_of(truncated) > 12);
  auto trailing = good;
  trailing.push_back(0);
  CHECK(offset_of(trailing) == static_cast<std::int64_t>(good.size()));
  auto bad_json = good;
  bad_json[12] = '!';
  CHECK(offset_of(bad_json) == 12);
}

TEST_CASE("per-coordinate gradient check on a small one-hidden-layer MLP") {
  const ModelSpec spec = ModelSpec::mlp(20, {8}, 3);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const CoordinateCheck r = coordinate_errors(spec, seed, 4, 1e-3);
    CHECK(r.checked == spec.param_count());
    CHECK(r.worst <= 1e-3);
  }
}

TEST_CASE("conv engine at image-sized inputs") {
  const std::vector<ModelSpec> specs{
      ModelSpec::conv(Architecture::conv_plain, 1, 28, 28, {4, 6}, 10, {}, {2, 2}),
      ModelSpec::conv(Architecture::conv_residual, 3, 12, 10, {4, 4, 4}, 5, {}, {2, 1, 1}),
  };
  for (const auto& spec : specs) {
    Rng rng(5);
    const auto p = random_params(spec.param_count(), rng);
    const auto x = random_inputs(3, spec.input_dim(), rng);
    std::vector<std::vector<double>> xs;
    for (int i = 0; i < 3; ++i) xs.emplace_back(x.row(i).data(), x.row(i).data() + x.cols());
    Engine<double> engine(spec);
    const auto stats = unit_stats(spec);
    const auto& got = engine.forward(p, stats, x, Mode::eval);
    const Reference ref{spec, p, &stats};
    const auto want = ref.logits(xs);
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < spec.classes; ++k)
        CHECK(got(i, k) == doctest::Approx(want[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)]).epsilon(1e-10));
    CHECK(gradient_error(spec, 3, 3) <= 1e-3);
  }
}
