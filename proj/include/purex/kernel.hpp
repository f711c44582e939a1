#pragma once

// Dense numeric kernel: the differentiable operations used by the encoder,
// selector and extractor. Every forward has a matching `*_backward` that
// accumulates into Parameter::grad and returns the input gradient.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "purex/errors.hpp"
#include "purex/rng.hpp"

namespace purex {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline std::string shape_string(Index rows, Index cols) {
  std::ostringstream out;
  out << '[' << rows << 'x' << cols << ']';
  return out.str();
}

/// Trainable tensor with its gradient and Adam moments. Vectors (biases) are
/// stored as n x 1.
template <typename Scalar>
struct Parameter {
  Matrix<Scalar> value;
  Matrix<Scalar> grad;
  Matrix<Scalar> adam_m;
  Matrix<Scalar> adam_v;
  std::int64_t step_count = 0;

  Parameter() = default;
  Parameter(Index rows, Index cols) : Parameter(Matrix<Scalar>::Zero(rows, cols)) {}
  explicit Parameter(Matrix<Scalar> init)
      : value(std::move(init)),
        grad(Matrix<Scalar>::Zero(value.rows(), value.cols())),
        adam_m(Matrix<Scalar>::Zero(value.rows(), value.cols())),
        adam_v(Matrix<Scalar>::Zero(value.rows(), value.cols())) {}

  Index rows() const { return value.rows(); }
  Index cols() const { return value.cols(); }
  Index size() const { return value.size(); }
  std::string shape() const { return shape_string(rows(), cols()); }

  void zero_grad() { grad.setZero(); }

  Eigen::Map<const Vector<Scalar>> vec() const { return {value.data(), value.size()}; }
  Eigen::Map<Vector<Scalar>> vec() { return {value.data(), value.size()}; }
  Eigen::Map<Vector<Scalar>> grad_vec() { return {grad.data(), grad.size()}; }

  template <typename Other>
  Parameter<Other> cast() const {
    Parameter<Other> out;
    out.value = value.template cast<Other>();
    out.grad = grad.template cast<Other>();
    out.adam_m = adam_m.template cast<Other>();
    out.adam_v = adam_v.template cast<Other>();
    out.step_count = step_count;
    return out;
  }
};

template <typename Scalar>
Matrix<Scalar> uniform_matrix(Index rows, Index cols, double bound, Rng& rng) {
  Matrix<Scalar> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
  }
  return m;
}

// ---------------------------------------------------------------------------
// linear

template <typename Scalar>
void check_linear_shapes(Index n_in, const Parameter<Scalar>& W, const Parameter<Scalar>& b) {
  if (W.cols() != n_in || b.rows() != W.rows() || b.cols() != 1) {
    throw ConfigError("linear: input " + shape_string(n_in, 1) + " incompatible with W " +
                      W.shape() + " and b " + b.shape());
  }
}

template <typename Scalar>
Vector<Scalar> linear(const Vector<Scalar>& x, const Parameter<Scalar>& W,
                      const Parameter<Scalar>& b) {
  check_linear_shapes(x.size(), W, b);
  return W.value * x + b.vec();
}

template <typename Scalar>
Vector<Scalar> linear_backward(const Vector<Scalar>& x, Parameter<Scalar>& W,
                               Parameter<Scalar>& b, const Vector<Scalar>& d_out) {
  W.grad.noalias() += d_out * x.transpose();
  b.grad_vec() += d_out;
  return W.value.transpose() * d_out;
}

// Row-batched affine map: each row of `inputs` is one sample.
template <typename Scalar>
Matrix<Scalar> linear_rows(const Matrix<Scalar>& inputs, const Parameter<Scalar>& W,
                           const Parameter<Scalar>& b) {
  check_linear_shapes(inputs.cols(), W, b);
  Matrix<Scalar> out = inputs * W.value.transpose();
  out.rowwise() += b.vec().transpose();
  return out;
}

template <typename Scalar>
Matrix<Scalar> linear_rows_backward(const Matrix<Scalar>& inputs, Parameter<Scalar>& W,
                                    Parameter<Scalar>& b, const Matrix<Scalar>& d_out) {
  W.grad.noalias() += d_out.transpose() * inputs;
  b.grad_vec() += d_out.colwise().sum().transpose();
  return d_out * W.value;
}

// ---------------------------------------------------------------------------
// conv1d: valid, stride 1. `input` is n x d (one token per row), filters are
// K x (window*d). Row-major storage means window i is the contiguous slice
// input[i*d, (i+window)*d), so the unfolded window matrix is a strided view.

template <typename Scalar>
using WindowView =
    Eigen::Map<const Matrix<Scalar>, Eigen::Unaligned, Eigen::OuterStride<>>;

template <typename Scalar>
WindowView<Scalar> window_view(const Matrix<Scalar>& input, Index window) {
  const Index m = input.rows() - window + 1;
  return WindowView<Scalar>(input.data(), m, window * input.cols(),
                            Eigen::OuterStride<>(input.cols()));
}

template <typename Scalar>
Matrix<Scalar> conv1d(const Matrix<Scalar>& input, const Parameter<Scalar>& filters,
                      Index window) {
  if (filters.cols() != window * input.cols()) {
    throw ConfigError("conv1d: filters " + filters.shape() + " incompatible with input " +
                      shape_string(input.rows(), input.cols()) + " at window " +
                      std::to_string(window));
  }
  if (input.rows() < window) {
    throw std::logic_error("conv1d: " + std::to_string(input.rows()) +
                           " rows is shorter than the window; input must be padded");
  }
  return filters.value * window_view(input, window).transpose();
}

template <typename Scalar>
Matrix<Scalar> conv1d_backward(const Matrix<Scalar>& input, Parameter<Scalar>& filters,
                               Index window, const Matrix<Scalar>& d_out) {
  const auto windows = window_view(input, window);
  filters.grad.noalias() += d_out * windows;
  const Matrix<Scalar> d_windows = d_out.transpose() * filters.value;
  Matrix<Scalar> d_input = Matrix<Scalar>::Zero(input.rows(), input.cols());
  const Index span = window * input.cols();
  for (Index i = 0; i < d_windows.rows(); ++i) {
    Eigen::Map<Vector<Scalar>>(d_input.data() + i * input.cols(), span) +=
        d_windows.row(i).transpose();
  }
  return d_input;
}

// ---------------------------------------------------------------------------
// pooling

template <typename Scalar>
struct PoolResult {
  Vector<Scalar> values;
  std::vector<Index> argmax;  // column per output entry; -1 for an empty segment
  Index source_rows = 0;
  Index source_cols = 0;
  int empty_segments = 0;
};

namespace detail {

template <typename Scalar>
void pool_segment(const Matrix<Scalar>& conv, Index begin, Index end, Index offset,
                  PoolResult<Scalar>& out) {
  for (Index j = 0; j < conv.rows(); ++j) {
    if (begin >= end) {
      out.values[offset + j] = Scalar(0);
      out.argmax[offset + j] = -1;
      continue;
    }
    Index best = begin;
    for (Index i = begin + 1; i < end; ++i) {
      if (conv(j, i) > conv(j, best)) best = i;  // strict: first maximum wins
    }
    out.values[offset + j] = conv(j, best);
    out.argmax[offset + j] = best;
  }
}

}  // namespace detail

template <typename Scalar>
PoolResult<Scalar> max_pool(const Matrix<Scalar>& conv) {
  if (conv.cols() < 1) throw ConfigError("max_pool: empty input " + shape_string(conv.rows(), 0));
  PoolResult<Scalar> out;
  out.values.resize(conv.rows());
  out.argmax.resize(conv.rows());
  out.source_rows = conv.rows();
  out.source_cols = conv.cols();
  detail::pool_segment(conv, 0, conv.cols(), 0, out);
  return out;
}

/// Max over the three column segments [0, p1-1], [p1, p2], [p2+1, m-1].
/// Boundaries are clamped to [0, m-1] and ordered; output is segment-major
/// (first K entries are segment one). Empty segments yield zeros.
template <typename Scalar>
PoolResult<Scalar> piecewise_max_pool(const Matrix<Scalar>& conv, Index p1, Index p2) {
  const Index m = conv.cols();
  if (m < 1) throw ConfigError("piecewise_max_pool: empty input");
  p1 = std::clamp<Index>(p1, 0, m - 1);
  p2 = std::clamp<Index>(p2, 0, m - 1);
  if (p1 > p2) std::swap(p1, p2);
  const Index k = conv.rows();
  PoolResult<Scalar> out;
  out.values.resize(3 * k);
  out.argmax.resize(3 * k);
  out.source_rows = k;
  out.source_cols = m;
  const Index bounds[4] = {0, p1, p2 + 1, m};
  for (int s = 0; s < 3; ++s) {
    if (bounds[s] >= bounds[s + 1]) ++out.empty_segments;
    detail::pool_segment(conv, bounds[s], bounds[s + 1], s * k, out);
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> pool_backward(const PoolResult<Scalar>& pooled, const Vector<Scalar>& d_values) {
  Matrix<Scalar> d_conv = Matrix<Scalar>::Zero(pooled.source_rows, pooled.source_cols);
  for (Index e = 0; e < d_values.size(); ++e) {
    const Index col = pooled.argmax[e];
    if (col >= 0) d_conv(e % pooled.source_rows, col) += d_values[e];
  }
  return d_conv;
}

// ---------------------------------------------------------------------------
// elementwise

template <typename Scalar>
Vector<Scalar> tanh_act(const Vector<Scalar>& x) {
  return x.array().tanh().matrix();
}

template <typename Scalar>
Vector<Scalar> tanh_backward(const Vector<Scalar>& y, const Vector<Scalar>& d_out) {
  return (d_out.array() * (Scalar(1) - y.array().square())).matrix();
}

template <typename Scalar>
Vector<Scalar> log_softmax(const Vector<Scalar>& scores) {
  if (scores.size() < 1) throw ConfigError("log_softmax: empty input");
  const Scalar top = scores.maxCoeff();
  const Scalar log_norm = std::log((scores.array() - top).exp().sum());
  return (scores.array() - top - log_norm).matrix();
}

template <typename Scalar>
Vector<Scalar> softmax(const Vector<Scalar>& scores) {
  return log_softmax(scores).array().exp().matrix();
}

template <typename Scalar>
Vector<Scalar> log_softmax_backward(const Vector<Scalar>& log_probs, const Vector<Scalar>& d_out) {
  return d_out - log_probs.array().exp().matrix() * d_out.sum();
}

template <typename Scalar>
struct DropoutResult {
  Vector<Scalar> output;
  Vector<Scalar> mask;  // empty when the op was the identity
};

// Inverted dropout: survivors are scaled by 1/(1-p).
template <typename Scalar>
DropoutResult<Scalar> dropout(const Vector<Scalar>& x, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  DropoutResult<Scalar> out;
  if (!training || rate == 0.0) {
    out.output = x;
    return out;
  }
  const Scalar keep_scale = static_cast<Scalar>(1.0 / (1.0 - rate));
  out.mask.resize(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    out.mask[i] = rng.bernoulli(rate) ? Scalar(0) : keep_scale;
  }
  out.output = (x.array() * out.mask.array()).matrix();
  return out;
}

template <typename Scalar>
Vector<Scalar> dropout_backward(const DropoutResult<Scalar>& forward, const Vector<Scalar>& d_out) {
  if (forward.mask.size() == 0) return d_out;
  return (d_out.array() * forward.mask.array()).matrix();
}

// ---------------------------------------------------------------------------
// optimizer

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam step; clears the gradient afterwards.
template <typename Scalar>
void adam_step(Parameter<Scalar>& p, const AdamConfig& cfg) {
  ++p.step_count;
  const Scalar b1 = static_cast<Scalar>(cfg.beta1);
  const Scalar b2 = static_cast<Scalar>(cfg.beta2);
  p.adam_m = b1 * p.adam_m + (Scalar(1) - b1) * p.grad;
  p.adam_v = b2 * p.adam_v + (Scalar(1) - b2) * p.grad.cwiseProduct(p.grad);
  const double t = static_cast<double>(p.step_count);
  const Scalar m_corr = static_cast<Scalar>(1.0 / (1.0 - std::pow(cfg.beta1, t)));
  const Scalar v_corr = static_cast<Scalar>(1.0 / (1.0 - std::pow(cfg.beta2, t)));
  const Scalar lr = static_cast<Scalar>(cfg.lr);
  const Scalar eps = static_cast<Scalar>(cfg.eps);
  p.value.array() -=
      lr * (p.adam_m.array() * m_corr) / ((p.adam_v.array() * v_corr).sqrt() + eps);
  p.grad.setZero();
}

// ---------------------------------------------------------------------------
// finite-difference checking

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  Index worst_index = -1;
  Index checked = 0;
};

using NamedParameters = std::vector<std::pair<std::string, Parameter<double>*>>;

/// Compares analytic gradients against central differences.
///
/// `loss(true)` must run forward and backward (accumulating into the
/// parameters' grads); `loss(false)` forward only. Per coordinate the error is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
inline GradCheckResult grad_check(const std::function<double(bool)>& loss,
                                  const NamedParameters& params, double epsilon = 1e-5) {
  for (auto& [name, p] : params) p->zero_grad();
  const double base = loss(true);
  if (!std::isfinite(base)) {
    throw NumericError("grad_check: loss is not finite (" + std::to_string(base) + ")");
  }
  std::vector<Matrix<double>> analytic;
  analytic.reserve(params.size());
  for (auto& [name, p] : params) analytic.push_back(p->grad);

  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& [name, p] = params[k];
    for (Index i = 0; i < p->size(); ++i) {
      double& slot = p->value.data()[i];
      const double saved = slot;
      slot = saved + epsilon;
      const double up = loss(false);
      slot = saved - epsilon;
      const double down = loss(false);
      slot = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("grad_check: non-finite perturbed loss at " + name + "[" +
                           std::to_string(i) + "]");
      }
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[k].data()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      const double err = std::abs(a - numeric) / denom;
      ++result.checked;
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_parameter = name;
        result.worst_index = i;
      }
    }
  }
  for (auto& [name, p] : params) p->zero_grad();
  return result;
}

}  // namespace purex
