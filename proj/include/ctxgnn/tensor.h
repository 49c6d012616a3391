#pragma once

// Dense row-major tensors and the closed set of differentiable primitives the
// model is composed from. Backward passes are written by hand; GradCheck is
// the safety net that compares them with central finite differences.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "ctxgnn/error.h"

namespace ctxgnn {

template <typename Real>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, Real fill = Real(0));
  Tensor(std::vector<std::size_t> shape, std::vector<Real> data);

  static Tensor Matrix(std::size_t rows, std::size_t cols, std::initializer_list<Real> values);
  static Tensor Vector(std::initializer_list<Real> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Rank-2 accessors. A rank-1 tensor behaves as a single row.
  std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return rank() == 0 ? 0 : shape_.back(); }

  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }
  std::span<Real> values() { return data_; }
  std::span<const Real> values() const { return data_; }

  std::span<Real> row(std::size_t i) { return {data_.data() + i * cols(), cols()}; }
  std::span<const Real> row(std::size_t i) const { return {data_.data() + i * cols(), cols()}; }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }
  Real& operator()(std::size_t i, std::size_t j) { return data_[i * cols() + j]; }
  Real operator()(std::size_t i, std::size_t j) const { return data_[i * cols() + j]; }

  void Fill(Real value);
  bool AllFinite() const;
  bool SameShape(const Tensor& other) const { return shape_ == other.shape_; }

  // Element-wise in-place accumulate; shapes must match.
  Tensor& operator+=(const Tensor& other);

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<Real> data_;
};

enum class Activation { kNone, kRelu };

template <typename Real>
struct AffineGrads {
  Tensor<Real> grad_x;
  Tensor<Real> grad_w;
  Tensor<Real> grad_b;
};

// out = act(x W + b), b broadcast over rows.
template <typename Real>
Tensor<Real> Affine(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& b,
                    Activation act = Activation::kNone);

template <typename Real>
AffineGrads<Real> AffineBackward(const Tensor<Real>& x, const Tensor<Real>& w,
                                 const Tensor<Real>& out, const Tensor<Real>& grad_out,
                                 Activation act = Activation::kNone);

// Accumulating form used by the model: adds into the provided gradients.
// grad_x may be null when the input is a constant. grad_out is consumed
// (masked in place for ReLU).
template <typename Real>
void AffineBackwardInto(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& out,
                        Tensor<Real>& grad_out, Activation act, Tensor<Real>* grad_x,
                        Tensor<Real>& grad_w, Tensor<Real>* grad_b);

// out[s] = sum of values[i] over i with segment_of[i] == s.
template <typename Real>
Tensor<Real> SegmentSum(const Tensor<Real>& values, std::span<const std::uint32_t> segment_of,
                        std::size_t num_segments);

template <typename Real>
Tensor<Real> SegmentSumBackward(const Tensor<Real>& grad_out,
                                std::span<const std::uint32_t> segment_of);

template <typename Real>
Tensor<Real> GatherRows(const Tensor<Real>& source, std::span<const std::uint32_t> index);

// Scatter-add of grad rows back onto a [num_rows x d] gradient.
template <typename Real>
void GatherRowsBackwardInto(const Tensor<Real>& grad_out, std::span<const std::uint32_t> index,
                            Tensor<Real>& grad_source);

template <typename Real>
Real Dot(std::span<const Real> a, std::span<const Real> b);

template <typename Real>
struct XentResult {
  Real loss = 0;
  Tensor<Real> grad_logits;
};

// Mean over rows of -log softmax(row)[target]. Entries equal to -inf are
// treated as probability zero.
template <typename Real>
XentResult<Real> SoftmaxXent(const Tensor<Real>& logits, std::span<const std::uint32_t> target);

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Real>
struct AdamState {
  AdamOptions options;
  std::vector<Tensor<Real>> m;
  std::vector<Tensor<Real>> v;
  std::uint64_t t = 0;

  AdamState() = default;
  AdamState(const std::vector<Tensor<Real>>& params, AdamOptions opts);
};

template <typename Real>
void AdamStep(std::vector<Tensor<Real>>& params, const std::vector<Tensor<Real>>& grads,
              AdamState<Real>& state);

// fn returns the scalar objective and, when grads is non-null, writes the
// analytic gradient (one tensor per parameter, same shapes).
template <typename Real>
using DifferentiableFn =
    std::function<Real(const std::vector<Tensor<Real>>& params, std::vector<Tensor<Real>>* grads)>;

// Max over coordinates of |analytic - central| / max(1, |central|).
template <typename Real>
double GradCheck(const DifferentiableFn<Real>& fn, std::vector<Tensor<Real>> params, double h);

}  // namespace ctxgnn
