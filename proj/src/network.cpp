#include "lmc/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lmc/errors.hpp"
#include "lmc/rng.hpp"

namespace lmc {

namespace {

enum class BlockKind { dense, conv };

struct BlockLayout {
  BlockKind kind = BlockKind::dense;
  int in_c = 0, in_h = 1, in_w = 1;
  int out_c = 0, out_h = 1, out_w = 1;
  int stride = 1;
  std::size_t w_off = 0, b_off = 0;
  int bn = -1;
  std::size_t gamma_off = 0, beta_off = 0;
  // Adds the input of the previous block (output of block b-2) before the ReLU.
  bool residual = false;

  int in_size() const { return in_c * in_h * in_w; }
  int out_spatial() const { return out_h * out_w; }
  int out_size() const { return out_c * out_h * out_w; }
  int kernel_cols() const { return kind == BlockKind::conv ? in_c * 9 : in_c; }
};

struct Layout {
  std::vector<BlockLayout> blocks;
  BlockLayout head;
  bool pool = false;
  std::size_t total = 0;
};

Layout make_layout(const ModelSpec& spec) {
  spec.validate();
  Layout layout;
  std::size_t off = 0;
  int bn_index = 0;
  const bool conv = spec.arch != Architecture::mlp;
  int c = conv ? spec.input_channels : spec.input_dim();
  int h = conv ? spec.input_height : 1;
  int w = conv ? spec.input_width : 1;
  for (int b = 0; b < spec.depth(); ++b) {
    BlockLayout bl;
    bl.kind = conv ? BlockKind::conv : BlockKind::dense;
    bl.in_c = c;
    bl.in_h = h;
    bl.in_w = w;
    bl.out_c = spec.widths[static_cast<std::size_t>(b)];
    bl.stride = spec.stride(b);
    if (conv) {
      bl.out_h = (h - 1) / bl.stride + 1;
      bl.out_w = (w - 1) / bl.stride + 1;
    }
    bl.w_off = off;
    off += static_cast<std::size_t>(bl.out_c) * static_cast<std::size_t>(bl.kernel_cols());
    bl.b_off = off;
    off += static_cast<std::size_t>(bl.out_c);
    if (spec.has_bn(b)) {
      bl.bn = bn_index++;
      bl.gamma_off = off;
      off += static_cast<std::size_t>(bl.out_c);
      bl.beta_off = off;
      off += static_cast<std::size_t>(bl.out_c);
    }
    bl.residual = spec.arch == Architecture::conv_residual && b >= 2 && b % 2 == 0;
    layout.blocks.push_back(bl);
    c = bl.out_c;
    h = bl.out_h;
    w = bl.out_w;
  }
  layout.pool = conv;
  BlockLayout& head = layout.head;
  head.kind = BlockKind::dense;
  head.in_c = c;
  head.out_c = spec.classes;
  head.w_off = off;
  off += static_cast<std::size_t>(head.out_c) * static_cast<std::size_t>(head.in_c);
  head.b_off = off;
  off += static_cast<std::size_t>(head.out_c);
  layout.total = off;
  return layout;
}

template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;
template <typename T>
using ColVec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// col is (in_c * 9) x (out_h * out_w), zero padded by one pixel.
template <typename T>
void im2col(const T* x, const BlockLayout& bl, Matrix<T>& col) {
  const int hw = bl.out_spatial();
  col.resize(bl.in_c * 9, hw);
  for (int c = 0; c < bl.in_c; ++c) {
    const T* plane = x + static_cast<std::ptrdiff_t>(c) * bl.in_h * bl.in_w;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* row = col.row(c * 9 + ky * 3 + kx).data();
        for (int oy = 0; oy < bl.out_h; ++oy) {
          const int iy = oy * bl.stride + ky - 1;
          T* dst = row + oy * bl.out_w;
          if (iy < 0 || iy >= bl.in_h) {
            std::fill(dst, dst + bl.out_w, T(0));
            continue;
          }
          const T* src = plane + iy * bl.in_w;
          for (int ox = 0; ox < bl.out_w; ++ox) {
            const int ix = ox * bl.stride + kx - 1;
            dst[ox] = (ix < 0 || ix >= bl.in_w) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const Matrix<T>& col, const BlockLayout& bl, T* dx) {
  for (int c = 0; c < bl.in_c; ++c) {
    T* plane = dx + static_cast<std::ptrdiff_t>(c) * bl.in_h * bl.in_w;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* row = col.row(c * 9 + ky * 3 + kx).data();
        for (int oy = 0; oy < bl.out_h; ++oy) {
          const int iy = oy * bl.stride + ky - 1;
          if (iy < 0 || iy >= bl.in_h) continue;
          const T* src = row + oy * bl.out_w;
          T* dst = plane + iy * bl.in_w;
          for (int ox = 0; ox < bl.out_w; ++ox) {
            const int ix = ox * bl.stride + kx - 1;
            if (ix >= 0 && ix < bl.in_w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
struct Engine<T>::Impl {
  ModelSpec spec;
  Layout layout;
  Mode mode = Mode::eval;
  const Matrix<T>* input = nullptr;
  std::vector<Matrix<T>> z;     // linear outputs
  std::vector<Matrix<T>> xhat;  // normalized z (BN blocks only)
  std::vector<Matrix<T>> pre;   // pre-activations
  std::vector<Matrix<T>> out;   // post-ReLU outputs
  std::vector<std::vector<T>> inv_std;
  std::vector<BasicBnStats<T>> stats;
  Matrix<T> pooled;
  Matrix<T> logits;
  Matrix<T> col;
  Matrix<T> dcol;

  const Matrix<T>& block_input(std::size_t b) const { return b == 0 ? *input : out[b - 1]; }

  void linear_forward(const BlockLayout& bl, std::span<const T> params, const Matrix<T>& x,
                      Matrix<T>& y) {
    const T* p = params.data();
    Eigen::Map<const Matrix<T>> w(p + bl.w_off, bl.out_c, bl.kernel_cols());
    if (bl.kind == BlockKind::dense) {
      Eigen::Map<const RowVec<T>> bias(p + bl.b_off, bl.out_c);
      y.noalias() = x * w.transpose();
      y.rowwise() += bias;
      return;
    }
    Eigen::Map<const ColVec<T>> bias(p + bl.b_off, bl.out_c);
    const int hw = bl.out_spatial();
    y.resize(x.rows(), bl.out_size());
    for (Eigen::Index n = 0; n < x.rows(); ++n) {
      im2col(x.row(n).data(), bl, col);
      Eigen::Map<Matrix<T>> yn(y.row(n).data(), bl.out_c, hw);
      yn.noalias() = w * col;
      yn.colwise() += bias;
    }
  }

  // dW, db written into grad; dx (if non-null) overwritten.
  void linear_backward(const BlockLayout& bl, std::span<const T> params, const Matrix<T>& x,
                       const Matrix<T>& dy, std::span<T> grad, Matrix<T>* dx) {
    const T* p = params.data();
    Eigen::Map<const Matrix<T>> w(p + bl.w_off, bl.out_c, bl.kernel_cols());
    Eigen::Map<Matrix<T>> dw(grad.data() + bl.w_off, bl.out_c, bl.kernel_cols());
    Eigen::Map<ColVec<T>> db(grad.data() + bl.b_off, bl.out_c);
    if (bl.kind == BlockKind::dense) {
      dw.noalias() = dy.transpose() * x;
      db = dy.colwise().sum().transpose();
      if (dx) dx->noalias() = dy * w;
      return;
    }
    const int hw = bl.out_spatial();
    dw.setZero();
    db.setZero();
    if (dx) dx->setZero(x.rows(), bl.in_size());
    for (Eigen::Index n = 0; n < x.rows(); ++n) {
      Eigen::Map<const Matrix<T>> dyn(dy.row(n).data(), bl.out_c, hw);
      im2col(x.row(n).data(), bl, col);
      dw.noalias() += dyn * col.transpose();
      db += dyn.rowwise().sum();
      if (dx) {
        dcol.noalias() = w.transpose() * dyn;
        col2im_add(dcol, bl, dx->row(n).data());
      }
    }
  }

  void bn_forward(const BlockLayout& bl, std::span<const T> params,
                  const std::vector<BasicBnStats<T>>& running, std::size_t b) {
    const auto bn = static_cast<std::size_t>(bl.bn);
    const Matrix<T>& zb = z[b];
    Matrix<T>& xh = xhat[b];
    xh.resize(zb.rows(), zb.cols());
    const int channels = bl.out_c;
    const int spatial = bl.out_spatial();
    const Eigen::Index rows = zb.rows();
    std::vector<T>& inv = inv_std[bn];
    inv.assign(static_cast<std::size_t>(channels), T(0));
    std::vector<T> mean(static_cast<std::size_t>(channels));
    if (mode == Mode::train) {
      const double m = static_cast<double>(rows) * spatial;
      if (m < 2) throw ShapeError("batch normalization in train mode needs at least 2 values");
      BasicBnStats<T>& st = stats[bn];
      st.mean.assign(static_cast<std::size_t>(channels), T(0));
      st.var.assign(static_cast<std::size_t>(channels), T(0));
      for (int c = 0; c < channels; ++c) {
        double sum = 0.0;
        for (Eigen::Index n = 0; n < rows; ++n) {
          const T* v = zb.row(n).data() + c * spatial;
          for (int s = 0; s < spatial; ++s) sum += static_cast<double>(v[s]);
        }
        const double mu = sum / m;
        double sq = 0.0;
        for (Eigen::Index n = 0; n < rows; ++n) {
          const T* v = zb.row(n).data() + c * spatial;
          for (int s = 0; s < spatial; ++s) {
            const double d = static_cast<double>(v[s]) - mu;
            sq += d * d;
          }
        }
        const double var = sq / m;
        mean[static_cast<std::size_t>(c)] = static_cast<T>(mu);
        inv[static_cast<std::size_t>(c)] = static_cast<T>(1.0 / std::sqrt(var + kBnEpsilon));
        st.mean[static_cast<std::size_t>(c)] = static_cast<T>(mu);
        st.var[static_cast<std::size_t>(c)] = static_cast<T>(var * m / (m - 1.0));
      }
    } else {
      const BasicBnStats<T>& st = running[bn];
      for (int c = 0; c < channels; ++c) {
        mean[static_cast<std::size_t>(c)] = st.mean[static_cast<std::size_t>(c)];
        inv[static_cast<std::size_t>(c)] = static_cast<T>(
            1.0 / std::sqrt(static_cast<double>(st.var[static_cast<std::size_t>(c)]) + kBnEpsilon));
      }
    }
    const T* gamma = params.data() + bl.gamma_off;
    const T* beta = params.data() + bl.beta_off;
    Matrix<T>& u = pre[b];
    u.resize(zb.rows(), zb.cols());
    for (Eigen::Index n = 0; n < rows; ++n) {
      for (int c = 0; c < channels; ++c) {
        const T mu = mean[static_cast<std::size_t>(c)];
        const T is = inv[static_cast<std::size_t>(c)];
        const T* src = zb.row(n).data() + c * spatial;
        T* xo = xh.row(n).data() + c * spatial;
        T* uo = u.row(n).data() + c * spatial;
        for (int s = 0; s < spatial; ++s) {
          xo[s] = (src[s] - mu) * is;
          uo[s] = gamma[c] * xo[s] + beta[c];
        }
      }
    }
  }

  // du -> dz, writing dgamma/dbeta into grad.
  void bn_backward(const BlockLayout& bl, std::span<const T> params, std::size_t b,
                   const Matrix<T>& du, Matrix<T>& dz, std::span<T> grad) {
    const auto bn = static_cast<std::size_t>(bl.bn);
    const Matrix<T>& xh = xhat[b];
    const int channels = bl.out_c;
    const int spatial = bl.out_spatial();
    const Eigen::Index rows = du.rows();
    const T* gamma = params.data() + bl.gamma_off;
    T* dgamma = grad.data() + bl.gamma_off;
    T* dbeta = grad.data() + bl.beta_off;
    const std::vector<T>& inv = inv_std[bn];
    dz.resize(du.rows(), du.cols());
    const double m = static_cast<double>(rows) * spatial;
    for (int c = 0; c < channels; ++c) {
      double sum_du = 0.0, sum_du_xh = 0.0;
      for (Eigen::Index n = 0; n < rows; ++n) {
        const T* d = du.row(n).data() + c * spatial;
        const T* x = xh.row(n).data() + c * spatial;
        for (int s = 0; s < spatial; ++s) {
          sum_du += static_cast<double>(d[s]);
          sum_du_xh += static_cast<double>(d[s]) * static_cast<double>(x[s]);
        }
      }
      dgamma[c] = static_cast<T>(sum_du_xh);
      dbeta[c] = static_cast<T>(sum_du);
      const T is = inv[static_cast<std::size_t>(c)];
      if (mode == Mode::train) {
        const T scale = static_cast<T>(static_cast<double>(gamma[c]) * is / m);
        const T mean_du = static_cast<T>(sum_du);
        const T mean_du_xh = static_cast<T>(sum_du_xh);
        const T mt = static_cast<T>(m);
        for (Eigen::Index n = 0; n < rows; ++n) {
          const T* d = du.row(n).data() + c * spatial;
          const T* x = xh.row(n).data() + c * spatial;
          T* o = dz.row(n).data() + c * spatial;
          for (int s = 0; s < spatial; ++s) o[s] = scale * (mt * d[s] - mean_du - x[s] * mean_du_xh);
        }
      } else {
        const T scale = gamma[c] * is;
        for (Eigen::Index n = 0; n < rows; ++n) {
          const T* d = du.row(n).data() + c * spatial;
          T* o = dz.row(n).data() + c * spatial;
          for (int s = 0; s < spatial; ++s) o[s] = scale * d[s];
        }
      }
    }
  }
};

template <typename T>
Engine<T>::Engine(const ModelSpec& spec) : impl_(std::make_unique<Impl>()) {
  impl_->spec = spec;
  impl_->layout = make_layout(spec);
  const std::size_t nb = impl_->layout.blocks.size();
  impl_->z.resize(nb);
  impl_->xhat.resize(nb);
  impl_->pre.resize(nb);
  impl_->out.resize(nb);
  impl_->inv_std.resize(static_cast<std::size_t>(spec.bn_layer_count()));
  impl_->stats.resize(static_cast<std::size_t>(spec.bn_layer_count()));
}

template <typename T>
Engine<T>::~Engine() = default;
template <typename T>
Engine<T>::Engine(Engine&&) noexcept = default;
template <typename T>
Engine<T>& Engine<T>::operator=(Engine&&) noexcept = default;

template <typename T>
const ModelSpec& Engine<T>::spec() const {
  return impl_->spec;
}

template <typename T>
const std::vector<BasicBnStats<T>>& Engine<T>::batch_stats() const {
  return impl_->stats;
}

template <typename T>
const Matrix<T>& Engine<T>::forward(std::span<const T> params,
                                    const std::vector<BasicBnStats<T>>& running,
                                    const Matrix<T>& x, Mode mode) {
  Impl& im = *impl_;
  if (params.size() != im.layout.total)
    throw ShapeError("parameter vector has " + std::to_string(params.size()) +
                     " entries, model expects " + std::to_string(im.layout.total));
  if (x.cols() != im.spec.input_dim())
    throw ShapeError("input has " + std::to_string(x.cols()) + " features, model expects " +
                     std::to_string(im.spec.input_dim()));
  if (mode == Mode::eval && running.size() != static_cast<std::size_t>(im.spec.bn_layer_count()))
    throw ShapeError("running statistics do not match the BN layer count");
  im.mode = mode;
  im.input = &x;
  for (std::size_t b = 0; b < im.layout.blocks.size(); ++b) {
    const BlockLayout& bl = im.layout.blocks[b];
    im.linear_forward(bl, params, im.block_input(b), im.z[b]);
    if (bl.bn >= 0) {
      im.bn_forward(bl, params, running, b);
    } else {
      im.pre[b] = im.z[b];
    }
    if (bl.residual) im.pre[b] += im.block_input(b - 1);
    im.out[b] = im.pre[b].cwiseMax(T(0));
  }
  const Matrix<T>& last = im.out.back();
  const BlockLayout& head = im.layout.head;
  if (im.layout.pool) {
    const BlockLayout& lb = im.layout.blocks.back();
    const int spatial = lb.out_spatial();
    im.pooled.resize(last.rows(), lb.out_c);
    for (Eigen::Index n = 0; n < last.rows(); ++n)
      for (int c = 0; c < lb.out_c; ++c) {
        T s = T(0);
        const T* v = last.row(n).data() + c * spatial;
        for (int p = 0; p < spatial; ++p) s += v[p];
        im.pooled(n, c) = s / static_cast<T>(spatial);
      }
    im.linear_forward(head, params, im.pooled, im.logits);
  } else {
    im.linear_forward(head, params, last, im.logits);
  }
  return im.logits;
}

template <typename T>
void Engine<T>::backward(std::span<const T> params, const Matrix<T>& dlogits,
                         std::span<T> grad) {
  Impl& im = *impl_;
  if (!im.input) throw std::logic_error("backward() called before forward()");
  if (grad.size() != im.layout.total) throw ShapeError("gradient buffer has the wrong length");
  const std::size_t nb = im.layout.blocks.size();
  const BlockLayout& head = im.layout.head;
  Matrix<T> dh;
  if (im.layout.pool) {
    Matrix<T> dpooled;
    im.linear_backward(head, params, im.pooled, dlogits, grad, &dpooled);
    const BlockLayout& lb = im.layout.blocks.back();
    const int spatial = lb.out_spatial();
    dh.resize(dpooled.rows(), lb.out_size());
    const T scale = T(1) / static_cast<T>(spatial);
    for (Eigen::Index n = 0; n < dpooled.rows(); ++n)
      for (int c = 0; c < lb.out_c; ++c) {
        const T g = dpooled(n, c) * scale;
        T* o = dh.row(n).data() + c * spatial;
        for (int p = 0; p < spatial; ++p) o[p] = g;
      }
  } else {
    im.linear_backward(head, params, im.out.back(), dlogits, grad, &dh);
  }
  // skip[b] collects gradient flowing into out[b] through an identity skip.
  std::vector<Matrix<T>> skip(nb);
  Matrix<T> da, dz, dx;
  for (std::size_t bi = nb; bi-- > 0;) {
    const BlockLayout& bl = im.layout.blocks[bi];
    if (skip[bi].size() != 0) dh += skip[bi];
    da = (im.pre[bi].array() > T(0)).select(dh.array(), T(0)).matrix();
    if (bl.residual) skip[bi - 2] = da;
    const Matrix<T>* dlin = &da;
    if (bl.bn >= 0) {
      im.bn_backward(bl, params, bi, da, dz, grad);
      dlin = &dz;
    }
    im.linear_backward(bl, params, im.block_input(bi), *dlin, grad, bi > 0 ? &dx : nullptr);
    if (bi > 0) dh.swap(dx);
  }
}

template <typename T>
T softmax_cross_entropy(const Matrix<T>& logits, std::span<const int> labels,
                        Matrix<T>* dlogits) {
  const Eigen::Index n = logits.rows();
  if (static_cast<std::size_t>(n) != labels.size())
    throw ShapeError("logits and labels have different batch sizes");
  if (n == 0) throw ShapeError("empty batch");
  if (dlogits) dlogits->resize(n, logits.cols());
  double total = 0.0;
  const T inv_n = T(1) / static_cast<T>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = logits.row(i);
    const T mx = row.maxCoeff();
    T sum = T(0);
    for (Eigen::Index k = 0; k < row.size(); ++k) sum += std::exp(row(k) - mx);
    const T lse = mx + std::log(sum);
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= logits.cols()) throw ShapeError("label out of range");
    total += static_cast<double>(lse - row(y));
    if (dlogits) {
      for (Eigen::Index k = 0; k < row.size(); ++k)
        (*dlogits)(i, k) = std::exp(row(k) - lse) * inv_n;
      (*dlogits)(i, y) -= inv_n;
    }
  }
  return static_cast<T>(total / static_cast<double>(n));
}

template <typename T>
BasicLossAndGrad<T> compute_loss_and_grad(const ModelSpec& spec, std::span<const T> params,
                                          const std::vector<BasicBnStats<T>>& running,
                                          const Matrix<T>& inputs, std::span<const int> labels,
                                          Mode mode) {
  Engine<T> engine(spec);
  const Matrix<T>& logits = engine.forward(params, running, inputs, mode);
  Matrix<T> dlogits;
  BasicLossAndGrad<T> out;
  out.loss = softmax_cross_entropy<T>(logits, labels, &dlogits);
  if (!std::isfinite(static_cast<double>(out.loss))) throw NonFiniteLoss("non-finite loss");
  out.grad.assign(params.size(), T(0));
  engine.backward(params, dlogits, out.grad);
  out.batch_stats = engine.batch_stats();
  return out;
}

template class Engine<float>;
template class Engine<double>;
template float softmax_cross_entropy<float>(const Matrix<float>&, std::span<const int>,
                                            Matrix<float>*);
template double softmax_cross_entropy<double>(const Matrix<double>&, std::span<const int>,
                                              Matrix<double>*);
template BasicLossAndGrad<float> compute_loss_and_grad<float>(
    const ModelSpec&, std::span<const float>, const std::vector<BasicBnStats<float>>&,
    const Matrix<float>&, std::span<const int>, Mode);
template BasicLossAndGrad<double> compute_loss_and_grad<double>(
    const ModelSpec&, std::span<const double>, const std::vector<BasicBnStats<double>>&,
    const Matrix<double>&, std::span<const int>, Mode);

void Batch::validate(const ModelSpec& spec) const {
  if (static_cast<std::size_t>(inputs.rows()) != labels.size())
    throw ShapeError("batch inputs and labels have different leading dimensions");
  if (inputs.cols() != spec.input_dim())
    throw ShapeError("batch has " + std::to_string(inputs.cols()) + " features, model expects " +
                     std::to_string(spec.input_dim()));
  for (int y : labels)
    if (y < 0 || y >= spec.classes) throw ShapeError("label " + std::to_string(y) + " out of range");
}

Checkpoint init_model(const ModelSpec& spec, std::uint64_t seed) {
  const Layout layout = make_layout(spec);
  Checkpoint ckpt;
  ckpt.spec = spec;
  ckpt.params = ParamVector(layout.total);
  ckpt.meta.init_seed = seed;
  Rng rng(derive_seed(seed, 0x1417));
  auto fill_uniform = [&](std::size_t off, std::size_t n, double bound) {
    for (std::size_t i = 0; i < n; ++i)
      ckpt.params[off + i] = static_cast<float>(rng.uniform(-bound, bound));
  };
  auto init_linear = [&](const BlockLayout& bl) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(bl.kernel_cols()));
    fill_uniform(bl.w_off, static_cast<std::size_t>(bl.out_c) * bl.kernel_cols(), bound);
    fill_uniform(bl.b_off, static_cast<std::size_t>(bl.out_c), bound);
  };
  for (const BlockLayout& bl : layout.blocks) {
    init_linear(bl);
    if (bl.bn >= 0) {
      for (int c = 0; c < bl.out_c; ++c) {
        ckpt.params[bl.gamma_off + static_cast<std::size_t>(c)] = 1.0f;
        ckpt.params[bl.beta_off + static_cast<std::size_t>(c)] = 0.0f;
      }
      BnStats st;
      st.mean.assign(static_cast<std::size_t>(bl.out_c), 0.0f);
      st.var.assign(static_cast<std::size_t>(bl.out_c), 1.0f);
      ckpt.bn_stats.push_back(std::move(st));
    }
  }
  init_linear(layout.head);
  return ckpt;
}

Tensor forward(const Checkpoint& ckpt, const Batch& batch) {
  batch.validate(ckpt.spec);
  Engine<float> engine(ckpt.spec);
  return engine.forward(ckpt.params.span(), ckpt.bn_stats, batch.inputs, Mode::eval);
}

Tensor forward(Checkpoint& ckpt, const Batch& batch, Mode mode) {
  if (mode == Mode::eval) return forward(static_cast<const Checkpoint&>(ckpt), batch);
  batch.validate(ckpt.spec);
  Engine<float> engine(ckpt.spec);
  Tensor logits = engine.forward(ckpt.params.span(), ckpt.bn_stats, batch.inputs, Mode::train);
  update_running_stats(ckpt.bn_stats, engine.batch_stats());
  return logits;
}

LossAndGrad loss_and_grad(const Checkpoint& ckpt, const Batch& batch) {
  batch.validate(ckpt.spec);
  auto r = compute_loss_and_grad<float>(ckpt.spec, ckpt.params.span(), ckpt.bn_stats,
                                        batch.inputs, batch.labels, Mode::train);
  return LossAndGrad{r.loss, ParamVector(std::move(r.grad)), std::move(r.batch_stats)};
}

void update_running_stats(std::vector<BnStats>& running, const std::vector<BnStats>& batch,
                          double momentum) {
  if (running.size() != batch.size()) throw ShapeError("BN layer count mismatch");
  const auto keep = static_cast<float>(1.0 - momentum);
  const auto take = static_cast<float>(momentum);
  for (std::size_t l = 0; l < running.size(); ++l) {
    for (std::size_t c = 0; c < running[l].mean.size(); ++c) {
      running[l].mean[c] = keep * running[l].mean[c] + take * batch[l].mean[c];
      running[l].var[c] = keep * running[l].var[c] + take * batch[l].var[c];
    }
  }
}

void sgd_step_inplace(ParamVector& params, const ParamVector& grad, float learning_rate) {
  if (params.size() != grad.size())
    throw ShapeError("gradient length " + std::to_string(grad.size()) +
                     " does not match parameter length " + std::to_string(params.size()));
  float* p = params.data();
  const float* g = grad.data();
  for (std::size_t i = 0; i < params.size(); ++i) p[i] -= learning_rate * g[i];
}

Checkpoint sgd_step(const Checkpoint& ckpt, const ParamVector& grad, double learning_rate) {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  Checkpoint next = ckpt;
  sgd_step_inplace(next.params, grad, static_cast<float>(learning_rate));
  return next;
}

Batch gather_batch(const Tensor& inputs, std::span<const int> labels,
                   std::span<const std::size_t> rows) {
  Batch batch;
  batch.inputs.resize(static_cast<Eigen::Index>(rows.size()), inputs.cols());
  batch.labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    batch.inputs.row(static_cast<Eigen::Index>(i)) = inputs.row(static_cast<Eigen::Index>(rows[i]));
    batch.labels[i] = labels[rows[i]];
  }
  return batch;
}

EvalResult evaluate(const Checkpoint& ckpt, const Tensor& inputs, std::span<const int> labels,
                    std::span<const std::size_t> rows, bool keep_probabilities,
                    std::size_t chunk) {
  std::vector<std::size_t> all;
  if (rows.empty()) {
    all.resize(static_cast<std::size_t>(inputs.rows()));
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    rows = all;
  }
  EvalResult result;
  if (rows.empty()) return result;
  Engine<float> engine(ckpt.spec);
  result.predictions.resize(rows.size());
  if (keep_probabilities)
    result.probabilities.resize(static_cast<Eigen::Index>(rows.size()), ckpt.spec.classes);
  double loss = 0.0;
  std::size_t correct = 0;
  Tensor x;
  for (std::size_t start = 0; start < rows.size(); start += chunk) {
    const std::size_t len = std::min(chunk, rows.size() - start);
    x.resize(static_cast<Eigen::Index>(len), inputs.cols());
    for (std::size_t i = 0; i < len; ++i)
      x.row(static_cast<Eigen::Index>(i)) = inputs.row(static_cast<Eigen::Index>(rows[start + i]));
    const Tensor& logits = engine.forward(ckpt.params.span(), ckpt.bn_stats, x, Mode::eval);
    for (std::size_t i = 0; i < len; ++i) {
      const auto row = logits.row(static_cast<Eigen::Index>(i));
      Eigen::Index arg = 0;
      const float mx = row.maxCoeff(&arg);
      double sum = 0.0;
      for (Eigen::Index k = 0; k < row.size(); ++k) sum += std::exp(static_cast<double>(row(k) - mx));
      const double lse = static_cast<double>(mx) + std::log(sum);
      const int y = labels[rows[start + i]];
      loss += lse - static_cast<double>(row(y));
      result.predictions[start + i] = static_cast<int>(arg);
      if (arg == y) ++correct;
      if (keep_probabilities)
        for (Eigen::Index k = 0; k < row.size(); ++k)
          result.probabilities(static_cast<Eigen::Index>(start + i), k) =
              static_cast<float>(std::exp(static_cast<double>(row(k)) - lse));
    }
  }
  if (!std::isfinite(loss)) throw NonFiniteLoss("non-finite evaluation loss");
  result.loss = loss / static_cast<double>(rows.size());
  result.accuracy = static_cast<double>(correct) / static_cast<double>(rows.size());
  return result;
}

BnRecompute recompute_bn_stats(const Checkpoint& ckpt, const Tensor& inputs,
                               std::span<const std::size_t> rows, int passes,
                               std::size_t batch_size) {
  BnRecompute out{ckpt, false, {}};
  if (ckpt.spec.bn_layer_count() == 0) {
    out.warning = "model has no batch-normalization layers; statistics left unchanged";
    return out;
  }
  if (passes < 1) throw std::invalid_argument("passes must be at least 1");
  std::vector<std::size_t> all;
  if (rows.empty()) {
    all.resize(static_cast<std::size_t>(inputs.rows()));
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    rows = all;
  }
  Engine<float> engine(ckpt.spec);
  std::vector<BasicBnStats<double>> acc(ckpt.bn_stats.size());
  for (std::size_t l = 0; l < acc.size(); ++l) {
    acc[l].mean.assign(ckpt.bn_stats[l].mean.size(), 0.0);
    acc[l].var.assign(ckpt.bn_stats[l].var.size(), 0.0);
  }
  std::size_t count = 0;
  Tensor x;
  for (int pass = 0; pass < passes; ++pass) {
    for (std::size_t start = 0; start < rows.size(); start += batch_size) {
      const std::size_t len = std::min(batch_size, rows.size() - start);
      if (len < 2) continue;
      x.resize(static_cast<Eigen::Index>(len), inputs.cols());
      for (std::size_t i = 0; i < len; ++i)
        x.row(static_cast<Eigen::Index>(i)) =
            inputs.row(static_cast<Eigen::Index>(rows[start + i]));
      engine.forward(ckpt.params.span(), ckpt.bn_stats, x, Mode::train);
      const auto& st = engine.batch_stats();
      for (std::size_t l = 0; l < acc.size(); ++l)
        for (std::size_t c = 0; c < acc[l].mean.size(); ++c) {
          acc[l].mean[c] += static_cast<double>(st[l].mean[c]);
          acc[l].var[c] += static_cast<double>(st[l].var[c]);
        }
      ++count;
    }
  }
  if (count == 0) throw ShapeError("not enough samples to recompute BN statistics");
  for (std::size_t l = 0; l < acc.size(); ++l)
    for (std::size_t c = 0; c < acc[l].mean.size(); ++c) {
      out.ckpt.bn_stats[l].mean[c] = static_cast<float>(acc[l].mean[c] / static_cast<double>(count));
      out.ckpt.bn_stats[l].var[c] = static_cast<float>(acc[l].var[c] / static_cast<double>(count));
    }
  out.applied = true;
  return out;
}

}  // namespace lmc
