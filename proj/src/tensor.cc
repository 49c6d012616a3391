#include "ctxgnn/tensor.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace ctxgnn {
namespace {

std::string ShapeString(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t Product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

template <typename Real>
void CheckMatrix(const Tensor<Real>& t, const char* what) {
  if (t.rank() != 2) {
    throw Error(ErrorKind::kShapeMismatch, std::string(what) + " must be rank 2, got " +
                                               ShapeString(t.shape()));
  }
}

}  // namespace

template <typename Real>
Tensor<Real>::Tensor(std::vector<std::size_t> shape, Real fill)
    : shape_(std::move(shape)), data_(Product(shape_), fill) {}

template <typename Real>
Tensor<Real>::Tensor(std::vector<std::size_t> shape, std::vector<Real> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != Product(shape_)) {
    throw Error(ErrorKind::kShapeMismatch, "data length " + std::to_string(data_.size()) +
                                               " does not match shape " + ShapeString(shape_));
  }
}

template <typename Real>
Tensor<Real> Tensor<Real>::Matrix(std::size_t rows, std::size_t cols,
                                  std::initializer_list<Real> values) {
  return Tensor({rows, cols}, std::vector<Real>(values));
}

template <typename Real>
Tensor<Real> Tensor<Real>::Vector(std::initializer_list<Real> values) {
  return Tensor({values.size()}, std::vector<Real>(values));
}

template <typename Real>
void Tensor<Real>::Fill(Real value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename Real>
bool Tensor<Real>::AllFinite() const {
  return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
}

template <typename Real>
Tensor<Real>& Tensor<Real>::operator+=(const Tensor& other) {
  if (!SameShape(other)) {
    throw Error(ErrorKind::kShapeMismatch,
                "accumulate " + ShapeString(other.shape_) + " into " + ShapeString(shape_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

template <typename Real>
Tensor<Real> Affine(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& b,
                    Activation act) {
  CheckMatrix(x, "affine input");
  CheckMatrix(w, "affine weight");
  const std::size_t n = x.rows(), p = x.cols(), q = w.cols();
  if (w.rows() != p || b.size() != q) {
    throw Error(ErrorKind::kShapeMismatch, "affine " + ShapeString(x.shape()) + " * " +
                                               ShapeString(w.shape()) + " + " +
                                               ShapeString(b.shape()));
  }
  Tensor<Real> out({n, q});
  for (std::size_t i = 0; i < n; ++i) {
    Real* o = out.data() + i * q;
    std::copy(b.data(), b.data() + q, o);
    const Real* xi = x.data() + i * p;
    for (std::size_t k = 0; k < p; ++k) {
      const Real a = xi[k];
      if (a == Real(0)) continue;
      const Real* wk = w.data() + k * q;
      for (std::size_t j = 0; j < q; ++j) o[j] += a * wk[j];
    }
    if (act == Activation::kRelu) {
      for (std::size_t j = 0; j < q; ++j) o[j] = o[j] > Real(0) ? o[j] : Real(0);
    }
  }
  return out;
}

template <typename Real>
void AffineBackwardInto(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& out,
                        Tensor<Real>& grad_out, Activation act, Tensor<Real>* grad_x,
                        Tensor<Real>& grad_w, Tensor<Real>* grad_b) {
  const std::size_t n = x.rows(), p = x.cols(), q = w.cols();
  if (!grad_out.SameShape(out) || out.rows() != n || out.cols() != q) {
    throw Error(ErrorKind::kShapeMismatch, "affine backward gradient " +
                                               ShapeString(grad_out.shape()) + " vs output " +
                                               ShapeString(out.shape()));
  }
  if (act == Activation::kRelu) {
    for (std::size_t i = 0; i < grad_out.size(); ++i) {
      if (!(out[i] > Real(0))) grad_out[i] = Real(0);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Real* g = grad_out.data() + i * q;
    const Real* xi = x.data() + i * p;
    if (grad_b) {
      Real* gb = grad_b->data();
      for (std::size_t j = 0; j < q; ++j) gb[j] += g[j];
    }
    for (std::size_t k = 0; k < p; ++k) {
      const Real a = xi[k];
      const Real* wk = w.data() + k * q;
      Real* gwk = grad_w.data() + k * q;
      Real acc = 0;
      for (std::size_t j = 0; j < q; ++j) {
        gwk[j] += a * g[j];
        acc += g[j] * wk[j];
      }
      if (grad_x) (*grad_x)(i, k) += acc;
    }
  }
}

template <typename Real>
AffineGrads<Real> AffineBackward(const Tensor<Real>& x, const Tensor<Real>& w,
                                 const Tensor<Real>& out, const Tensor<Real>& grad_out,
                                 Activation act) {
  CheckMatrix(x, "affine input");
  CheckMatrix(w, "affine weight");
  AffineGrads<Real> g{Tensor<Real>(x.shape()), Tensor<Real>(w.shape()),
                      Tensor<Real>({w.cols()})};
  Tensor<Real> go = grad_out;
  AffineBackwardInto(x, w, out, go, act, &g.grad_x, g.grad_w, &g.grad_b);
  return g;
}

template <typename Real>
Tensor<Real> SegmentSum(const Tensor<Real>& values, std::span<const std::uint32_t> segment_of,
                        std::size_t num_segments) {
  const std::size_t d = values.cols();
  if (segment_of.size() != values.rows()) {
    throw Error(ErrorKind::kShapeMismatch, "segment index length " +
                                               std::to_string(segment_of.size()) + " vs " +
                                               std::to_string(values.rows()) + " rows");
  }
  Tensor<Real> out({num_segments, d});
  for (std::size_t i = 0; i < segment_of.size(); ++i) {
    const std::size_t s = segment_of[i];
    if (s >= num_segments) {
      throw Error(ErrorKind::kIndexOutOfRange, "segment " + std::to_string(s) + " >= " +
                                                   std::to_string(num_segments));
    }
    const Real* v = values.data() + i * d;
    Real* o = out.data() + s * d;
    for (std::size_t j = 0; j < d; ++j) o[j] += v[j];
  }
  return out;
}

template <typename Real>
Tensor<Real> SegmentSumBackward(const Tensor<Real>& grad_out,
                                std::span<const std::uint32_t> segment_of) {
  return GatherRows(grad_out, segment_of);
}

template <typename Real>
Tensor<Real> GatherRows(const Tensor<Real>& source, std::span<const std::uint32_t> index) {
  const std::size_t d = source.cols();
  Tensor<Real> out({index.size(), d});
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= source.rows()) {
      throw Error(ErrorKind::kIndexOutOfRange, "row " + std::to_string(index[i]) + " >= " +
                                                   std::to_string(source.rows()));
    }
    std::copy_n(source.data() + index[i] * d, d, out.data() + i * d);
  }
  return out;
}

template <typename Real>
void GatherRowsBackwardInto(const Tensor<Real>& grad_out, std::span<const std::uint32_t> index,
                            Tensor<Real>& grad_source) {
  const std::size_t d = grad_out.cols();
  for (std::size_t i = 0; i < index.size(); ++i) {
    const Real* g = grad_out.data() + i * d;
    Real* o = grad_source.data() + index[i] * d;
    for (std::size_t j = 0; j < d; ++j) o[j] += g[j];
  }
}

template <typename Real>
Real Dot(std::span<const Real> a, std::span<const Real> b) {
  Real acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

template <typename Real>
XentResult<Real> SoftmaxXent(const Tensor<Real>& logits, std::span<const std::uint32_t> target) {
  const std::size_t n = logits.rows(), c = logits.cols();
  if (target.size() != n) {
    throw Error(ErrorKind::kShapeMismatch, "one target per logits row required");
  }
  XentResult<Real> result{Real(0), Tensor<Real>(logits.shape())};
  if (n == 0) return result;
  const Real neg_inf = -std::numeric_limits<Real>::infinity();
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (target[i] >= c) {
      throw Error(ErrorKind::kTargetOutOfRange, "target " + std::to_string(target[i]) +
                                                    " >= " + std::to_string(c) + " classes");
    }
    const Real* z = logits.data() + i * c;
    if (z[target[i]] == neg_inf) {
      throw Error(ErrorKind::kTargetMasked, "row " + std::to_string(i) + " targets a masked class");
    }
    Real max_z = neg_inf;
    for (std::size_t j = 0; j < c; ++j) max_z = std::max(max_z, z[j]);
    double denom = 0;
    for (std::size_t j = 0; j < c; ++j) {
      if (z[j] != neg_inf) denom += std::exp(static_cast<double>(z[j] - max_z));
    }
    const double log_denom = std::log(denom);
    total += log_denom - static_cast<double>(z[target[i]] - max_z);
    Real* g = result.grad_logits.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) {
      const double p =
          z[j] == neg_inf ? 0.0 : std::exp(static_cast<double>(z[j] - max_z) - log_denom);
      g[j] = static_cast<Real>(p / static_cast<double>(n));
    }
    g[target[i]] -= static_cast<Real>(1.0 / static_cast<double>(n));
  }
  result.loss = static_cast<Real>(total / static_cast<double>(n));
  return result;
}

template <typename Real>
AdamState<Real>::AdamState(const std::vector<Tensor<Real>>& params, AdamOptions opts)
    : options(opts) {
  m.reserve(params.size());
  v.reserve(params.size());
  for (const auto& p : params) {
    m.emplace_back(p.shape());
    v.emplace_back(p.shape());
  }
}

template <typename Real>
void AdamStep(std::vector<Tensor<Real>>& params, const std::vector<Tensor<Real>>& grads,
              AdamState<Real>& state) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw Error(ErrorKind::kShapeMismatch, "adam: parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].SameShape(grads[i]) || !params[i].SameShape(state.m[i])) {
      throw Error(ErrorKind::kShapeMismatch, "adam: shape mismatch at parameter " +
                                                 std::to_string(i));
    }
  }
  state.t += 1;
  const auto& o = state.options;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Real* p = params[i].data();
    const Real* g = grads[i].data();
    Real* m = state.m[i].data();
    Real* v = state.v[i].data();
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      const double gj = g[j];
      const double mj = o.beta1 * m[j] + (1.0 - o.beta1) * gj;
      const double vj = o.beta2 * v[j] + (1.0 - o.beta2) * gj * gj;
      m[j] = static_cast<Real>(mj);
      v[j] = static_cast<Real>(vj);
      const double m_hat = mj / bc1;
      const double v_hat = vj / bc2;
      p[j] = static_cast<Real>(p[j] - o.lr * m_hat / (std::sqrt(v_hat) + o.eps));
    }
  }
}

template <typename Real>
double GradCheck(const DifferentiableFn<Real>& fn, std::vector<Tensor<Real>> params, double h) {
  std::vector<Tensor<Real>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.emplace_back(p.shape());
  fn(params, &analytic);
  double worst = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      const Real saved = params[i][j];
      params[i][j] = static_cast<Real>(saved + h);
      const double up = fn(params, nullptr);
      params[i][j] = static_cast<Real>(saved - h);
      const double down = fn(params, nullptr);
      params[i][j] = saved;
      const double central = (up - down) / (2.0 * h);
      const double err =
          std::abs(static_cast<double>(analytic[i][j]) - central) / std::max(1.0, std::abs(central));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

#define CTXGNN_INSTANTIATE(R)                                                                   \
  template class Tensor<R>;                                                                     \
  template Tensor<R> Affine(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&, Activation);  \
  template AffineGrads<R> AffineBackward(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&,  \
                                         const Tensor<R>&, Activation);                         \
  template void AffineBackwardInto(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&,        \
                                   Tensor<R>&, Activation, Tensor<R>*, Tensor<R>&, Tensor<R>*); \
  template Tensor<R> SegmentSum(const Tensor<R>&, std::span<const std::uint32_t>, std::size_t); \
  template Tensor<R> SegmentSumBackward(const Tensor<R>&, std::span<const std::uint32_t>);      \
  template Tensor<R> GatherRows(const Tensor<R>&, std::span<const std::uint32_t>);              \
  template void GatherRowsBackwardInto(const Tensor<R>&, std::span<const std::uint32_t>,        \
                                       Tensor<R>&);                                             \
  template R Dot(std::span<const R>, std::span<const R>);                                       \
  template XentResult<R> SoftmaxXent(const Tensor<R>&, std::span<const std::uint32_t>);         \
  template struct AdamState<R>;                                                                 \
  template void AdamStep(std::vector<Tensor<R>>&, const std::vector<Tensor<R>>&,                \
                         AdamState<R>&);                                                        \
  template double GradCheck(const DifferentiableFn<R>&, std::vector<Tensor<R>>, double);

CTXGNN_INSTANTIATE(float)
CTXGNN_INSTANTIATE(double)

#undef CTXGNN_INSTANTIATE

}  // namespace ctxgnn
