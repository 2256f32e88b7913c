#include "mmt/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace mmt::ops {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::current()) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

Shape pad_shape(const Shape& s, size_t ndim) {
  Shape out(ndim, 1);
  std::copy(s.begin(), s.end(), out.begin() + (ndim - s.size()));
  return out;
}

// Element strides per output dim; 0 where the input broadcasts.
std::vector<int64_t> bcast_strides(const Shape& padded, const Shape& out) {
  std::vector<int64_t> st(out.size(), 0);
  int64_t acc = 1;
  for (int i = static_cast<int>(out.size()) - 1; i >= 0; --i) {
    if (padded[i] != out[i] && padded[i] != 1)
      throw ValidationError("broadcast mismatch: " + shape_str(padded) + " vs " + shape_str(out));
    st[i] = (padded[i] == 1 && out[i] != 1) ? 0 : acc;
    acc *= padded[i];
  }
  return st;
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  size_t n = std::max(a.size(), b.size());
  Shape pa = pad_shape(a, n), pb = pad_shape(b, n), out(n);
  for (size_t i = 0; i < n; ++i) {
    if (pa[i] == pb[i]) out[i] = pa[i];
    else if (pa[i] == 1) out[i] = pb[i];
    else if (pb[i] == 1) out[i] = pa[i];
    else
      throw ValidationError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
  }
  return out;
}

// Visits each output element with the element offsets into a and b.
template <class F>
void for_each_bcast(const Shape& out, const std::vector<int64_t>& sa,
                    const std::vector<int64_t>& sb, F&& f) {
  int64_t n = numel(out);
  size_t nd = out.size();
  std::vector<int64_t> coord(nd, 0);
  int64_t ao = 0, bo = 0;
  for (int64_t i = 0; i < n; ++i) {
    f(i, ao, bo);
    for (int d = static_cast<int>(nd) - 1; d >= 0; --d) {
      ++coord[d];
      ao += sa[d];
      bo += sb[d];
      if (coord[d] < out[d]) break;
      ao -= sa[d] * out[d];
      bo -= sb[d] * out[d];
      coord[d] = 0;
    }
  }
}

template <class Fwd, class Bwd>
Tensor binary_bcast(const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd) {
  Shape out_shape = broadcast_shape(a.shape(), b.shape());
  size_t nd = out_shape.size();
  auto sa = bcast_strides(pad_shape(a.shape(), nd), out_shape);
  auto sb = bcast_strides(pad_shape(b.shape(), nd), out_shape);
  Tensor out(out_shape);
  const auto& ad = a.data();
  const auto& bd = b.data();
  auto& od = out.data();
  for_each_bcast(out_shape, sa, sb,
                 [&](int64_t i, int64_t ao, int64_t bo) { od[i] = fwd(ad[ao], bd[bo]); });
  if (tracking({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Tape::current()->record([ac, bc, oc, out_shape, sa, sb, bwd]() mutable {
      const auto& g = oc.grad();
      auto& ga = ac.grad();
      auto& gb = bc.grad();
      const auto& ad = ac.data();
      const auto& bd = bc.data();
      for_each_bcast(out_shape, sa, sb, [&](int64_t i, int64_t ao, int64_t bo) {
        auto [da, db] = bwd(ad[ao], bd[bo]);
        ga[ao] += g[i] * da;
        gb[bo] += g[i] * db;
      });
    });
  }
  return out;
}

template <class Fwd, class Deriv>
Tensor unary_op(const Tensor& x, Fwd fwd, Deriv deriv) {
  Tensor out(x.shape());
  const auto& xd = x.data();
  auto& od = out.data();
  for (size_t i = 0; i < xd.size(); ++i) od[i] = fwd(xd[i]);
  if (tracking({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Tape::current()->record([xc, oc, deriv]() mutable {
      const auto& g = oc.grad();
      auto& gx = xc.grad();
      const auto& xd = xc.data();
      for (size_t i = 0; i < xd.size(); ++i) gx[i] += g[i] * deriv(xd[i]);
    });
  }
  return out;
}

void check_ndim_ge(const Tensor& t, int n, const char* who) {
  if (t.ndim() < n)
    throw ValidationError(std::string(who) + ": need at least " + std::to_string(n) +
                          " dims, got shape " + shape_str(t.shape()));
}

int norm_axis(int axis, int ndim) {
  if (axis < 0) axis += ndim;
  if (axis < 0 || axis >= ndim) throw ValidationError("axis out of range");
  return axis;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_bcast(a, b, [](double x, double y) { return x + y; },
                      [](double, double) { return std::pair<double, double>{1.0, 1.0}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_bcast(a, b, [](double x, double y) { return x - y; },
                      [](double, double) { return std::pair<double, double>{1.0, -1.0}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_bcast(a, b, [](double x, double y) { return x * y; },
                      [](double x, double y) { return std::pair<double, double>{y, x}; });
}

Tensor scale(const Tensor& a, double s) {
  return unary_op(a, [s](double x) { return x * s; }, [s](double) { return s; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_ndim_ge(a, 2, "matmul lhs");
  check_ndim_ge(b, 2, "matmul rhs");
  int64_t m = a.dim(-2), k = a.dim(-1);
  int64_t k2 = b.dim(-2), n = b.dim(-1);
  if (k != k2)
    throw ValidationError("matmul inner dims disagree: " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
  Shape abatch(a.shape().begin(), a.shape().end() - 2);
  Shape bbatch(b.shape().begin(), b.shape().end() - 2);
  Shape batch = broadcast_shape(abatch, bbatch);
  size_t nb = batch.size();
  auto sa = bcast_strides(pad_shape(abatch, nb), batch);
  auto sb = bcast_strides(pad_shape(bbatch, nb), batch);
  for (auto& s : sa) s *= m * k;
  for (auto& s : sb) s *= k * n;
  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor out(out_shape);
  int64_t n_batches = numel(batch);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  double* od = out.data().data();
  for_each_bcast(batch, sa, sb, [&](int64_t i, int64_t ao, int64_t bo) {
    MapC A(ad + ao, m, k);
    MapC B(bd + bo, k, n);
    MapM O(od + i * m * n, m, n);
    O.noalias() = A * B;
  });
  flops::add(static_cast<uint64_t>(n_batches) * m * n * k);
  if (tracking({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Tape::current()->record([ac, bc, oc, batch, sa, sb, m, k, n]() mutable {
      const double* g = oc.grad().data();
      double* ga = ac.grad().data();
      double* gb = bc.grad().data();
      const double* ad = ac.data().data();
      const double* bd = bc.data().data();
      for_each_bcast(batch, sa, sb, [&](int64_t i, int64_t ao, int64_t bo) {
        MapC A(ad + ao, m, k);
        MapC B(bd + bo, k, n);
        MapC G(g + i * m * n, m, n);
        MapM GA(ga + ao, m, k);
        MapM GB(gb + bo, k, n);
        GA.noalias() += G * B.transpose();
        GB.noalias() += A.transpose() * G;
      });
    });
  }
  return out;
}

Tensor softmax(const Tensor& x, int axis) {
  axis = norm_axis(axis, x.ndim());
  int64_t n = x.shape()[axis];
  int64_t inner = 1, outer = 1;
  for (int i = axis + 1; i < x.ndim(); ++i) inner *= x.shape()[i];
  for (int i = 0; i < axis; ++i) outer *= x.shape()[i];
  Tensor out(x.shape());
  const auto& xd = x.data();
  auto& od = out.data();
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      int64_t base = o * n * inner + in;
      double mx = xd[base];
      for (int64_t j = 1; j < n; ++j) mx = std::max(mx, xd[base + j * inner]);
      double denom = 0.0;
      for (int64_t j = 0; j < n; ++j) {
        double e = std::exp(xd[base + j * inner] - mx);
        od[base + j * inner] = e;
        denom += e;
      }
      for (int64_t j = 0; j < n; ++j) od[base + j * inner] /= denom;
    }
  }
  if (tracking({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Tape::current()->record([xc, oc, outer, inner, n]() mutable {
      const auto& g = oc.grad();
      const auto& y = oc.data();
      auto& gx = xc.grad();
      for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
          int64_t base = o * n * inner + in;
          double dot = 0.0;
          for (int64_t j = 0; j < n; ++j) dot += g[base + j * inner] * y[base + j * inner];
          for (int64_t j = 0; j < n; ++j) {
            int64_t idx = base + j * inner;
            gx[idx] += y[idx] * (g[idx] - dot);
          }
        }
      }
    });
  }
  return out;
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  check_ndim_ge(x, 1, "layernorm");
  int64_t d = x.dim(-1);
  if (gamma.numel() != d || beta.numel() != d)
    throw ValidationError("layernorm affine params must match last axis extent " +
                          std::to_string(d));
  int64_t rows = x.numel() / d;
  Tensor out(x.shape());
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  const auto& xd = x.data();
  const auto& gd = gamma.data();
  const auto& bd = beta.data();
  auto& od = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * d;
    double mean = 0.0;
    for (int64_t j = 0; j < d; ++j) mean += row[j];
    mean /= d;
    double var = 0.0;
    for (int64_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= d;
    double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (int64_t j = 0; j < d; ++j) {
      double xh = (row[j] - mean) * is;
      (*xhat)[r * d + j] = xh;
      od[r * d + j] = xh * gd[j] + bd[j];
    }
  }
  if (tracking({&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    Tensor xc = x, gc = gamma, bc = beta, oc = out;
    Tape::current()->record([xc, gc, bc, oc, xhat, inv_std, rows, d]() mutable {
      const auto& g = oc.grad();
      auto& gx = xc.grad();
      auto& gg = gc.grad();
      auto& gb = bc.grad();
      const auto& gd = gc.data();
      for (int64_t r = 0; r < rows; ++r) {
        double is = (*inv_std)[r];
        double mean_gy = 0.0, mean_gyxh = 0.0;
        for (int64_t j = 0; j < d; ++j) {
          int64_t idx = r * d + j;
          double gy = g[idx] * gd[j];
          mean_gy += gy;
          mean_gyxh += gy * (*xhat)[idx];
        }
        mean_gy /= d;
        mean_gyxh /= d;
        for (int64_t j = 0; j < d; ++j) {
          int64_t idx = r * d + j;
          double gy = g[idx] * gd[j];
          gx[idx] += is * (gy - mean_gy - (*xhat)[idx] * mean_gyxh);
          gg[j] += g[idx] * (*xhat)[idx];
          gb[j] += g[idx];
        }
      }
    });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  return unary_op(x, [](double v) { return v > 0 ? v : 0.0; },
                  [](double v) { return v > 0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& x, double alpha) {
  return unary_op(x, [alpha](double v) { return v > 0 ? v : alpha * v; },
                  [alpha](double v) { return v > 0 ? 1.0 : alpha; });
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.7071067811865475244;
  constexpr double kInvSqrt2Pi = 0.3989422804014326779;
  return unary_op(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v) {
        double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        return cdf + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
      });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
  if (x.ndim() != 4 || w.ndim() != 4)
    throw ValidationError("conv2d expects [N,Ci,H,W] and [Co,Ci,kh,kw], got " +
                          shape_str(x.shape()) + " / " + shape_str(w.shape()));
  int64_t N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  int64_t Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != Ci)
    throw ValidationError("conv2d channel mismatch: input " + std::to_string(Ci) +
                          " vs kernel " + std::to_string(w.dim(1)));
  bool has_bias = bias.numel() > 0;
  if (has_bias && bias.numel() != Co) throw ValidationError("conv2d bias size mismatch");
  int64_t Ho = (H + 2 * pad - kh) / stride + 1;
  int64_t Wo = (W + 2 * pad - kw) / stride + 1;
  if (Ho < 1 || Wo < 1) throw ValidationError("conv2d output would be empty");
  Tensor out({N, Co, Ho, Wo});
  const auto& xd = x.data();
  const auto& wd = w.data();
  auto& od = out.data();
  for (int64_t nn = 0; nn < N; ++nn)
    for (int64_t co = 0; co < Co; ++co)
      for (int64_t ho = 0; ho < Ho; ++ho)
        for (int64_t wo = 0; wo < Wo; ++wo) {
          double acc = has_bias ? bias.data()[co] : 0.0;
          for (int64_t ci = 0; ci < Ci; ++ci)
            for (int64_t dy = 0; dy < kh; ++dy) {
              int64_t iy = ho * stride - pad + dy;
              if (iy < 0 || iy >= H) continue;
              for (int64_t dx = 0; dx < kw; ++dx) {
                int64_t ix = wo * stride - pad + dx;
                if (ix < 0 || ix >= W) continue;
                acc += xd[((nn * Ci + ci) * H + iy) * W + ix] *
                       wd[((co * Ci + ci) * kh + dy) * kw + dx];
              }
            }
          od[((nn * Co + co) * Ho + ho) * Wo + wo] = acc;
        }
  if (tracking({&x, &w, &bias})) {
    out.set_requires_grad(true);
    Tensor xc = x, wc = w, bc = bias, oc = out;
    bool hb = has_bias;
    Tape::current()->record([xc, wc, bc, oc, N, Ci, H, W, Co, kh, kw, Ho, Wo, stride, pad,
                             hb]() mutable {
      const auto& g = oc.grad();
      const auto& xd = xc.data();
      const auto& wd = wc.data();
      auto& gx = xc.grad();
      auto& gw = wc.grad();
      for (int64_t nn = 0; nn < N; ++nn)
        for (int64_t co = 0; co < Co; ++co)
          for (int64_t ho = 0; ho < Ho; ++ho)
            for (int64_t wo = 0; wo < Wo; ++wo) {
              double go = g[((nn * Co + co) * Ho + ho) * Wo + wo];
              if (go == 0.0) continue;
              if (hb) bc.grad()[co] += go;
              for (int64_t ci = 0; ci < Ci; ++ci)
                for (int64_t dy = 0; dy < kh; ++dy) {
                  int64_t iy = ho * stride - pad + dy;
                  if (iy < 0 || iy >= H) continue;
                  for (int64_t dx = 0; dx < kw; ++dx) {
                    int64_t ix = wo * stride - pad + dx;
                    if (ix < 0 || ix >= W) continue;
                    int64_t xi = ((nn * Ci + ci) * H + iy) * W + ix;
                    int64_t wi = ((co * Ci + ci) * kh + dy) * kw + dx;
                    gx[xi] += go * wd[wi];
                    gw[wi] += go * xd[xi];
                  }
                }
            }
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ValidationError("concat of zero tensors");
  int nd = parts[0].ndim();
  axis = norm_axis(axis, nd);
  Shape out_shape = parts[0].shape();
  int64_t total = 0;
  for (const Tensor& p : parts) {
    if (p.ndim() != nd) throw ValidationError("concat rank mismatch");
    for (int i = 0; i < nd; ++i)
      if (i != axis && p.shape()[i] != out_shape[i])
        throw ValidationError("concat shape mismatch off-axis: " + shape_str(p.shape()));
    total += p.shape()[axis];
  }
  out_shape[axis] = total;
  int64_t inner = 1, outer = 1;
  for (int i = axis + 1; i < nd; ++i) inner *= out_shape[i];
  for (int i = 0; i < axis; ++i) outer *= out_shape[i];
  Tensor out(out_shape);
  auto& od = out.data();
  int64_t off = 0;
  for (const Tensor& p : parts) {
    int64_t pa = p.shape()[axis];
    const auto& pd = p.data();
    for (int64_t o = 0; o < outer; ++o)
      std::copy(pd.begin() + o * pa * inner, pd.begin() + (o + 1) * pa * inner,
                od.begin() + (o * total + off) * inner);
    off += pa;
  }
  bool track = false;
  for (const Tensor& p : parts)
    if (p.requires_grad()) track = true;
  if (track && Tape::current()) {
    out.set_requires_grad(true);
    std::vector<Tensor> pc = parts;
    Tensor oc = out;
    Tape::current()->record([pc, oc, outer, inner, total, axis]() mutable {
      const auto& g = oc.grad();
      int64_t off = 0;
      for (Tensor& p : pc) {
        int64_t pa = p.shape()[axis];
        auto& gp = p.grad();
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t j = 0; j < pa * inner; ++j)
            gp[o * pa * inner + j] += g[(o * total + off) * inner + j];
        off += pa;
      }
    });
  }
  return out;
}

std::vector<Tensor> split(const Tensor& x, int axis, const std::vector<int64_t>& sizes) {
  axis = norm_axis(axis, x.ndim());
  int64_t total = 0;
  for (int64_t s : sizes) total += s;
  if (total != x.shape()[axis]) throw ValidationError("split sizes do not cover axis");
  int64_t inner = 1, outer = 1;
  for (int i = axis + 1; i < x.ndim(); ++i) inner *= x.shape()[i];
  for (int i = 0; i < axis; ++i) outer *= x.shape()[i];
  std::vector<Tensor> parts;
  int64_t off = 0;
  const auto& xd = x.data();
  for (int64_t s : sizes) {
    Shape ps = x.shape();
    ps[axis] = s;
    Tensor p(ps);
    auto& pd = p.data();
    for (int64_t o = 0; o < outer; ++o)
      std::copy(xd.begin() + (o * total + off) * inner, xd.begin() + (o * total + off + s) * inner,
                pd.begin() + o * s * inner);
    if (tracking({&x})) {
      p.set_requires_grad(true);
      Tensor xc = x, pc = p;
      int64_t soff = off, sz = s;
      Tape::current()->record([xc, pc, outer, inner, total, soff, sz]() mutable {
        const auto& g = pc.grad();
        auto& gx = xc.grad();
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t j = 0; j < sz * inner; ++j)
            gx[(o * total + soff) * inner + j] += g[o * sz * inner + j];
      });
    }
    parts.push_back(std::move(p));
    off += s;
  }
  return parts;
}

Tensor reshape(const Tensor& x, Shape new_shape) {
  if (numel(new_shape) != x.numel())
    throw ValidationError("reshape " + shape_str(x.shape()) + " -> " + shape_str(new_shape) +
                          " changes element count");
  Tensor out(std::move(new_shape), x.data());
  if (tracking({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Tape::current()->record([xc, oc]() mutable {
      const auto& g = oc.grad();
      auto& gx = xc.grad();
      for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

Tensor permute(const Tensor& x, const std::vector<int>& perm) {
  int nd = x.ndim();
  if (static_cast<int>(perm.size()) != nd) throw ValidationError("permute rank mismatch");
  std::vector<bool> seen(nd, false);
  Shape out_shape(nd);
  for (int i = 0; i < nd; ++i) {
    if (perm[i] < 0 || perm[i] >= nd || seen[perm[i]]) throw ValidationError("bad permutation");
    seen[perm[i]] = true;
    out_shape[i] = x.shape()[perm[i]];
  }
  std::vector<int64_t> out_strides(nd), in_to_out_stride(nd);
  int64_t acc = 1;
  for (int i = nd - 1; i >= 0; --i) {
    out_strides[i] = acc;
    acc *= out_shape[i];
  }
  for (int i = 0; i < nd; ++i) in_to_out_stride[perm[i]] = out_strides[i];
  // map: out_offset for each input element, walked in input order
  auto mapping = std::make_shared<std::vector<int64_t>>(x.numel());
  std::vector<int64_t> coord(nd, 0);
  int64_t oo = 0;
  for (int64_t i = 0; i < x.numel(); ++i) {
    (*mapping)[i] = oo;
    for (int d = nd - 1; d >= 0; --d) {
      ++coord[d];
      oo += in_to_out_stride[d];
      if (coord[d] < x.shape()[d]) break;
      oo -= in_to_out_stride[d] * x.shape()[d];
      coord[d] = 0;
    }
  }
  Tensor out(out_shape);
  const auto& xd = x.data();
  auto& od = out.data();
  for (int64_t i = 0; i < x.numel(); ++i) od[(*mapping)[i]] = xd[i];
  if (tracking({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Tape::current()->record([xc, oc, mapping]() mutable {
      const auto& g = oc.grad();
      auto& gx = xc.grad();
      for (size_t i = 0; i < gx.size(); ++i) gx[i] += g[(*mapping)[i]];
    });
  }
  return out;
}

Tensor index_rows(const Tensor& x, std::vector<int64_t> map, Shape out_shape) {
  check_ndim_ge(x, 1, "index_rows");
  int64_t d = x.dim(-1);
  int64_t rows = x.numel() / d;
  if (numel(out_shape) != static_cast<int64_t>(map.size()) * d)
    throw ValidationError("index_rows output shape inconsistent with map size");
  auto mp = std::make_shared<std::vector<int64_t>>(std::move(map));
  Tensor out(std::move(out_shape));
  const auto& xd = x.data();
  auto& od = out.data();
  for (size_t i = 0; i < mp->size(); ++i) {
    int64_t r = (*mp)[i];
    if (r < 0 || r >= rows) throw ValidationError("index_rows map entry out of range");
    std::copy(xd.begin() + r * d, xd.begin() + (r + 1) * d, od.begin() + static_cast<int64_t>(i) * d);
  }
  if (tracking({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Tape::current()->record([xc, oc, mp, d]() mutable {
      const auto& g = oc.grad();
      auto& gx = xc.grad();
      for (size_t i = 0; i < mp->size(); ++i) {
        int64_t r = (*mp)[i];
        for (int64_t j = 0; j < d; ++j) gx[r * d + j] += g[static_cast<int64_t>(i) * d + j];
      }
    });
  }
  return out;
}

Tensor index_elements(const Tensor& x, std::vector<int64_t> map, Shape out_shape) {
  if (numel(out_shape) != static_cast<int64_t>(map.size()))
    throw ValidationError("index_elements output shape inconsistent with map size");
  auto mp = std::make_shared<std::vector<int64_t>>(std::move(map));
  Tensor out(std::move(out_shape));
  const auto& xd = x.data();
  auto& od = out.data();
  for (size_t i = 0; i < mp->size(); ++i) {
    int64_t e = (*mp)[i];
    if (e < 0 || e >= x.numel()) throw ValidationError("index_elements map entry out of range");
    od[i] = xd[e];
  }
  if (tracking({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Tape::current()->record([xc, oc, mp]() mutable {
      const auto& g = oc.grad();
      auto& gx = xc.grad();
      for (size_t i = 0; i < mp->size(); ++i) gx[(*mp)[i]] += g[i];
    });
  }
  return out;
}

namespace {
Tensor reduce_all(const Tensor& x, double denom) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor out = Tensor::scalar(acc / denom);
  if (tracking({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Tape::current()->record([xc, oc, denom]() mutable {
      double g = oc.grad()[0] / denom;
      auto& gx = xc.grad();
      for (double& v : gx) v += g;
    });
  }
  return out;
}
}  // namespace

Tensor sum(const Tensor& x) { return reduce_all(x, 1.0); }
Tensor mean(const Tensor& x) { return reduce_all(x, static_cast<double>(x.numel())); }

Tensor l1_loss(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ValidationError("l1_loss shape mismatch: " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
  double acc = 0.0;
  int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) acc += std::abs(a.data()[i] - b.data()[i]);
  Tensor out = Tensor::scalar(acc / n);
  if (tracking({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Tape::current()->record([ac, bc, oc, n]() mutable {
      double g = oc.grad()[0] / n;
      for (int64_t i = 0; i < n; ++i) {
        double diff = ac.data()[i] - bc.data()[i];
        double s = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
        ac.grad()[i] += g * s;
        bc.grad()[i] -= g * s;
      }
    });
  }
  return out;
}

Tensor mse_loss(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ValidationError("mse_loss shape mismatch: " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
  double acc = 0.0;
  int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) {
    double d = a.data()[i] - b.data()[i];
    acc += d * d;
  }
  Tensor out = Tensor::scalar(acc / n);
  if (tracking({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Tape::current()->record([ac, bc, oc, n]() mutable {
      double g = oc.grad()[0] * 2.0 / n;
      for (int64_t i = 0; i < n; ++i) {
        double d = ac.data()[i] - bc.data()[i];
        ac.grad()[i] += g * d;
        bc.grad()[i] -= g * d;
      }
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  Tensor y = matmul(x, w);
  if (bias.numel() == 0) return y;
  return add(y, bias);
}

}  // namespace mmt::ops
