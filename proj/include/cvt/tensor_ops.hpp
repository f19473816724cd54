#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "cvt/rng.hpp"
#include "cvt/tensor.hpp"

namespace cvt {

namespace detail {

enum class Broadcast { kSame, kScalar, kSuffix };

inline Broadcast classify_broadcast(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return Broadcast::kSame;
  if (shape_numel(b) == 1) return Broadcast::kScalar;
  if (b.size() < a.size() &&
      std::equal(b.begin(), b.end(), a.end() - static_cast<long>(b.size())))
    return Broadcast::kSuffix;
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) +
                              " and " + shape_str(b));
}

// outer/inner extents around one axis of a shape.
inline void axis_split(const Shape& s, int axis, Index& outer, Index& n, Index& inner) {
  outer = 1;
  inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s[static_cast<std::size_t>(d)];
  n = s[static_cast<std::size_t>(axis)];
  for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < s.size(); ++d) inner *= s[d];
}

inline int normalize_axis(const Shape& s, int axis, const char* op) {
  const int nd = static_cast<int>(s.size());
  if (axis < 0) axis += nd;
  if (axis < 0 || axis >= nd)
    throw std::invalid_argument(std::string(op) + ": axis out of range for " + shape_str(s));
  return axis;
}

// dst[i] = src[sum_d coord_d * stride_map_d], iterating dst linearly.
template <typename S>
void gather_strided(const S* src, S* dst, const Shape& out_shape, const Shape& stride_map) {
  const int nd = static_cast<int>(out_shape.size());
  const Index n = shape_numel(out_shape);
  Shape coord(out_shape.size(), 0);
  Index off = 0;
  for (Index i = 0; i < n; ++i) {
    dst[i] = src[off];
    for (int d = nd - 1; d >= 0; --d) {
      ++coord[static_cast<std::size_t>(d)];
      off += stride_map[static_cast<std::size_t>(d)];
      if (coord[static_cast<std::size_t>(d)] < out_shape[static_cast<std::size_t>(d)]) break;
      off -= stride_map[static_cast<std::size_t>(d)] * out_shape[static_cast<std::size_t>(d)];
      coord[static_cast<std::size_t>(d)] = 0;
    }
  }
}

// dst[sum_d coord_d * stride_map_d] += src[i]
template <typename S>
void scatter_add_strided(const S* src, S* dst, const Shape& out_shape, const Shape& stride_map) {
  const int nd = static_cast<int>(out_shape.size());
  const Index n = shape_numel(out_shape);
  Shape coord(out_shape.size(), 0);
  Index off = 0;
  for (Index i = 0; i < n; ++i) {
    dst[off] += src[i];
    for (int d = nd - 1; d >= 0; --d) {
      ++coord[static_cast<std::size_t>(d)];
      off += stride_map[static_cast<std::size_t>(d)];
      if (coord[static_cast<std::size_t>(d)] < out_shape[static_cast<std::size_t>(d)]) break;
      off -= stride_map[static_cast<std::size_t>(d)] * out_shape[static_cast<std::size_t>(d)];
      coord[static_cast<std::size_t>(d)] = 0;
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic. b may share a's shape, be a scalar, or match a
// suffix of a's shape (bias-style broadcast over leading dims).
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  const auto mode = detail::classify_broadcast(a.shape(), b.shape(), "add");
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  const Index bn = b.size();
  switch (mode) {
    case detail::Broadcast::kSame:
      out.array() = a.array() + b.array();
      break;
    case detail::Broadcast::kScalar:
      out.array() = a.array() + b.array()(0);
      break;
    case detail::Broadcast::kSuffix:
      for (Index r = 0; r < a.size() / bn; ++r)
        out.array().segment(r * bn, bn) = a.array().segment(r * bn, bn) + b.array();
      break;
  }
  if (detail::track_grad<S>(a, b)) {
    out.set_requires_grad(true);
    auto an = a.node(), bn_ = b.node(), on = out.node();
    detail::record<S>([an, bn_, on, mode, bn] {
      if (on->grad.size() == 0) return;
      if (an->requires_grad) {
        an->ensure_grad();
        an->grad += on->grad;
      }
      if (bn_->requires_grad) {
        bn_->ensure_grad();
        switch (mode) {
          case detail::Broadcast::kSame:
            bn_->grad += on->grad;
            break;
          case detail::Broadcast::kScalar:
            bn_->grad(0) += on->grad.sum();
            break;
          case detail::Broadcast::kSuffix:
            for (Index r = 0; r < on->grad.size() / bn; ++r)
              bn_->grad += on->grad.segment(r * bn, bn);
            break;
        }
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  const auto mode = detail::classify_broadcast(a.shape(), b.shape(), "mul");
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  const Index bn = b.size();
  switch (mode) {
    case detail::Broadcast::kSame:
      out.array() = a.array() * b.array();
      break;
    case detail::Broadcast::kScalar:
      out.array() = a.array() * b.array()(0);
      break;
    case detail::Broadcast::kSuffix:
      for (Index r = 0; r < a.size() / bn; ++r)
        out.array().segment(r * bn, bn) = a.array().segment(r * bn, bn) * b.array();
      break;
  }
  if (detail::track_grad<S>(a, b)) {
    out.set_requires_grad(true);
    auto an = a.node(), bn_ = b.node(), on = out.node();
    detail::record<S>([an, bn_, on, mode, bn] {
      if (on->grad.size() == 0) return;
      if (an->requires_grad) {
        an->ensure_grad();
        switch (mode) {
          case detail::Broadcast::kSame:
            an->grad += on->grad * bn_->data;
            break;
          case detail::Broadcast::kScalar:
            an->grad += on->grad * bn_->data(0);
            break;
          case detail::Broadcast::kSuffix:
            for (Index r = 0; r < on->grad.size() / bn; ++r)
              an->grad.segment(r * bn, bn) += on->grad.segment(r * bn, bn) * bn_->data;
            break;
        }
      }
      if (bn_->requires_grad) {
        bn_->ensure_grad();
        switch (mode) {
          case detail::Broadcast::kSame:
            bn_->grad += on->grad * an->data;
            break;
          case detail::Broadcast::kScalar:
            bn_->grad(0) += (on->grad * an->data).sum();
            break;
          case detail::Broadcast::kSuffix:
            for (Index r = 0; r < on->grad.size() / bn; ++r)
              bn_->grad += on->grad.segment(r * bn, bn) * an->data.segment(r * bn, bn);
            break;
        }
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& x, double s) {
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  out.array() = x.array() * static_cast<S>(s);
  if (detail::track_grad<S>(x)) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    detail::record<S>([xn, on, s] {
      if (on->grad.size() == 0) return;
      xn->ensure_grad();
      xn->grad += on->grad * static_cast<S>(s);
    });
  }
  return out;
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& x, double c) {
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  out.array() = x.array() + static_cast<S>(c);
  if (detail::track_grad<S>(x)) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    detail::record<S>([xn, on] {
      if (on->grad.size() == 0) return;
      xn->ensure_grad();
      xn->grad += on->grad;
    });
  }
  return out;
}

template <typename S>
Tensor<S> neg(const Tensor<S>& x) {
  return scale(x, -1.0);
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return add(a, neg(b));
}

template <typename S>
Tensor<S> exp(const Tensor<S>& x) {
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  out.array() = x.array().exp();
  if (detail::track_grad<S>(x)) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    detail::record<S>([xn, on] {
      if (on->grad.size() == 0) return;
      xn->ensure_grad();
      xn->grad += on->grad * on->data;
    });
  }
  return out;
}

template <typename S>
Tensor<S> log(const Tensor<S>& x) {
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  out.array() = x.array().log();
  if (detail::track_grad<S>(x)) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    detail::record<S>([xn, on] {
      if (on->grad.size() == 0) return;
      xn->ensure_grad();
      xn->grad += on->grad / xn->data;
    });
  }
  return out;
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  out.array() = x.array().max(S(0));
  if (detail::track_grad<S>(x)) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    detail::record<S>([xn, on] {
      if (on->grad.size() == 0) return;
      xn->ensure_grad();
      xn->grad += on->grad * (xn->data > S(0)).template cast<S>();
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions.
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
  Tensor<S> out = Tensor<S>::scalar(x.array().sum());
  if (detail::track_grad<S>(x)) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    detail::record<S>([xn, on] {
      if (on->grad.size() == 0) return;
      xn->ensure_grad();
      xn->grad += on->grad(0);
    });
  }
  return out;
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x) {
  const double inv = 1.0 / static_cast<double>(x.size());
  return scale(sum(x), inv);
}

template <typename S>
Tensor<S> sum_axis(const Tensor<S>& x, int axis) {
  axis = detail::normalize_axis(x.shape(), axis, "sum_axis");
  Index outer, n, inner;
  detail::axis_split(x.shape(), axis, outer, n, inner);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + axis);
  Tensor<S> out = Tensor<S>::zeros(out_shape);
  for (Index o = 0; o < outer; ++o)
    for (Index j = 0; j < n; ++j)
      out.array().segment(o * inner, inner) += x.array().segment((o * n + j) * inner, inner);
  if (detail::track_grad<S>(x)) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    detail::record<S>([xn, on, outer, n, inner] {
      if (on->grad.size() == 0) return;
      xn->ensure_grad();
      for (Index o = 0; o < outer; ++o)
        for (Index j = 0; j < n; ++j)
          xn->grad.segment((o * n + j) * inner, inner) += on->grad.segment(o * inner, inner);
    });
  }
  return out;
}

template <typename S>
Tensor<S> mean_axis(const Tensor<S>& x, int axis) {
  const int ax = detail::normalize_axis(x.shape(), axis, "mean_axis");
  const double inv = 1.0 / static_cast<double>(x.shape()[static_cast<std::size_t>(ax)]);
  return scale(sum_axis(x, ax), inv);
}

// ---------------------------------------------------------------------------
// Matrix product. Supports (m,k)@(k,n), batched (...,m,k)@(...,k,n) with
// equal batch dims, and (...,m,k)@(k,n) with the right operand shared.
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2)
    throw std::invalid_argument("matmul: operands must have >=2 dims, got " + shape_str(sa) +
                                " @ " + shape_str(sb));
  const Index m = sa[sa.size() - 2], k = sa[sa.size() - 1];
  const Index kb = sb[sb.size() - 2], n = sb[sb.size() - 1];
  if (k != kb)
    throw std::invalid_argument("matmul: inner dimensions disagree: " + shape_str(sa) + " @ " +
                                shape_str(sb));
  const bool shared_b = sb.size() == 2 && sa.size() > 2;
  if (!shared_b && sa.size() != sb.size())
    throw std::invalid_argument("matmul: rank mismatch: " + shape_str(sa) + " @ " + shape_str(sb));
  Index batch = 1;
  Shape out_shape;
  for (std::size_t d = 0; d + 2 < sa.size(); ++d) {
    if (!shared_b && sb[d] != sa[d])
      throw std::invalid_argument("matmul: batch dims disagree: " + shape_str(sa) + " @ " +
                                  shape_str(sb));
    batch *= sa[d];
    out_shape.push_back(sa[d]);
  }
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor<S> out = Tensor<S>::zeros(out_shape);
  for (Index i = 0; i < batch; ++i) {
    Eigen::Map<const MatrixRM<S>> A(a.data() + i * m * k, m, k);
    Eigen::Map<const MatrixRM<S>> B(b.data() + (shared_b ? 0 : i * k * n), k, n);
    Eigen::Map<MatrixRM<S>> C(out.data() + i * m * n, m, n);
    C.noalias() = A * B;
  }
  if (detail::track_grad<S>(a, b)) {
    out.set_requires_grad(true);
    auto an = a.node(), bn = b.node(), on = out.node();
    detail::record<S>([an, bn, on, batch, m, k, n, shared_b] {
      if (on->grad.size() == 0) return;
      if (an->requires_grad) an->ensure_grad();
      if (bn->requires_grad) bn->ensure_grad();
      for (Index i = 0; i < batch; ++i) {
        Eigen::Map<const MatrixRM<S>> G(on->grad.data() + i * m * n, m, n);
        if (an->requires_grad) {
          Eigen::Map<const MatrixRM<S>> B(bn->data.data() + (shared_b ? 0 : i * k * n), k, n);
          Eigen::Map<MatrixRM<S>> GA(an->grad.data() + i * m * k, m, k);
          GA.noalias() += G * B.transpose();
        }
        if (bn->requires_grad) {
          Eigen::Map<const MatrixRM<S>> A(an->data.data() + i * m * k, m, k);
          Eigen::Map<MatrixRM<S>> GB(bn->grad.data() + (shared_b ? 0 : i * k * n), k, n);
          GB.noalias() += A.transpose() * G;
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Layout ops.
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
  if (shape_numel(shape) != x.size())
    throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " +
                                shape_str(shape));
  Tensor<S> out = Tensor<S>::zeros(std::move(shape));
  out.array() = x.array();
  if (detail::track_grad<S>(x)) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    detail::record<S>([xn, on] {
      if (on->grad.size() == 0) return;
      xn->ensure_grad();
      xn->grad += on->grad;
    });
  }
  return out;
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& x, int ax0, int ax1) {
  ax0 = detail::normalize_axis(x.shape(), ax0, "transpose");
  ax1 = detail::normalize_axis(x.shape(), ax1, "transpose");
  Shape out_shape = x.shape();
  std::swap(out_shape[static_cast<std::size_t>(ax0)], out_shape[static_cast<std::size_t>(ax1)]);
  const Shape in_strides = shape_strides(x.shape());
  Shape stride_map(in_strides.size());
  for (std::size_t d = 0; d < stride_map.size(); ++d) stride_map[d] = in_strides[d];
  std::swap(stride_map[static_cast<std::size_t>(ax0)], stride_map[static_cast<std::size_t>(ax1)]);
  Tensor<S> out = Tensor<S>::zeros(out_shape);
  detail::gather_strided(x.data(), out.data(), out_shape, stride_map);
  if (detail::track_grad<S>(x)) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    detail::record<S>([xn, on, out_shape, stride_map] {
      if (on->grad.size() == 0) return;
      xn->ensure_grad();
      detail::scatter_add_strided(on->grad.data(), xn->grad.data(), out_shape, stride_map);
    });
  }
  return out;
}

template <typename S>
Tensor<S> slice(const Tensor<S>& x, int axis, Index start, Index len) {
  axis = detail::normalize_axis(x.shape(), axis, "slice");
  Index outer, n, inner;
  detail::axis_split(x.shape(), axis, outer, n, inner);
  if (start < 0 || len < 0 || start + len > n)
    throw std::invalid_argument("slice: range [" + std::to_string(start) + "," +
                                std::to_string(start + len) + ") out of bounds for " +
                                shape_str(x.shape()));
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = len;
  Tensor<S> out = Tensor<S>::zeros(out_shape);
  for (Index o = 0; o < outer; ++o)
    out.array().segment(o * len * inner, len * inner) =
        x.array().segment((o * n + start) * inner, len * inner);
  if (detail::track_grad<S>(x)) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    detail::record<S>([xn, on, outer, n, inner, start, len] {
      if (on->grad.size() == 0) return;
      xn->ensure_grad();
      for (Index o = 0; o < outer; ++o)
        xn->grad.segment((o * n + start) * inner, len * inner) +=
            on->grad.segment(o * len * inner, len * inner);
    });
  }
  return out;
}

template <typename S>
Tensor<S> concat(const std::vector<Tensor<S>>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const int ax = detail::normalize_axis(parts[0].shape(), axis, "concat");
  Index total = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    Shape ref = parts[0].shape();
    s[static_cast<std::size_t>(ax)] = ref[static_cast<std::size_t>(ax)] = 0;
    if (s != ref)
      throw std::invalid_argument("concat: shape " + shape_str(p.shape()) +
                                  " incompatible with " + shape_str(parts[0].shape()));
    total += p.shape()[static_cast<std::size_t>(ax)];
  }
  Shape out_shape = parts[0].shape();
  out_shape[static_cast<std::size_t>(ax)] = total;
  Index outer, n_out, inner;
  detail::axis_split(out_shape, ax, outer, n_out, inner);
  Tensor<S> out = Tensor<S>::zeros(out_shape);
  Index at = 0;
  bool track = false;
  for (const auto& p : parts) track = track || detail::track_grad<S>(p);
  for (const auto& p : parts) {
    const Index np = p.shape()[static_cast<std::size_t>(ax)];
    for (Index o = 0; o < outer; ++o)
      out.array().segment((o * n_out + at) * inner, np * inner) =
          p.array().segment(o * np * inner, np * inner);
    if (track && detail::taping<S>()) {
      auto pn = p.node();
      auto on = out.node();
      const Index at_copy = at;
      detail::record<S>([pn, on, outer, n_out, inner, np, at_copy] {
        if (on->grad.size() == 0 || !pn->requires_grad) return;
        pn->ensure_grad();
        for (Index o = 0; o < outer; ++o)
          pn->grad.segment(o * np * inner, np * inner) +=
              on->grad.segment((o * n_out + at_copy) * inner, np * inner);
      });
    }
    at += np;
  }
  if (track) out.set_requires_grad(true);
  return out;
}

// ---------------------------------------------------------------------------
// Neural-net primitives.
// ---------------------------------------------------------------------------

// Max-subtraction softmax along `axis`. NaN inputs propagate.
template <typename S>
Tensor<S> softmax(const Tensor<S>& x, int axis) {
  const int ax = detail::normalize_axis(x.shape(), axis, "softmax");
  Index outer, n, inner;
  detail::axis_split(x.shape(), ax, outer, n, inner);
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  if (inner == 1) {
    for (Index o = 0; o < outer; ++o) {
      auto row = x.array().segment(o * n, n);
      auto orow = out.array().segment(o * n, n);
      const S mx = row.maxCoeff();
      orow = (row - mx).exp();
      orow /= orow.sum();
    }
  } else {
    for (Index o = 0; o < outer; ++o)
      for (Index i = 0; i < inner; ++i) {
        const Index base = o * n * inner + i;
        S mx = x.data()[base];
        for (Index j = 1; j < n; ++j) mx = std::max(mx, x.data()[base + j * inner]);
        S total = S(0);
        for (Index j = 0; j < n; ++j) {
          const S e = std::exp(x.data()[base + j * inner] - mx);
          out.data()[base + j * inner] = e;
          total += e;
        }
        for (Index j = 0; j < n; ++j) out.data()[base + j * inner] /= total;
      }
  }
  if (detail::track_grad<S>(x)) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    detail::record<S>([xn, on, outer, n, inner] {
      if (on->grad.size() == 0) return;
      xn->ensure_grad();
      if (inner == 1) {
        for (Index o = 0; o < outer; ++o) {
          auto y = on->data.segment(o * n, n);
          auto g = on->grad.segment(o * n, n);
          const S dot = (g * y).sum();
          xn->grad.segment(o * n, n) += y * (g - dot);
        }
      } else {
        for (Index o = 0; o < outer; ++o)
          for (Index i = 0; i < inner; ++i) {
            const Index base = o * n * inner + i;
            S dot = S(0);
            for (Index j = 0; j < n; ++j)
              dot += on->grad[base + j * inner] * on->data[base + j * inner];
            for (Index j = 0; j < n; ++j)
              xn->grad[base + j * inner] +=
                  on->data[base + j * inner] * (on->grad[base + j * inner] - dot);
          }
      }
    });
  }
  return out;
}

// Normalization over the last axis: zero mean, unit variance, then affine.
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gain, const Tensor<S>& bias,
                     double eps = 1e-5) {
  const Index d = x.dim(-1);
  if (gain.size() != d || bias.size() != d)
    throw std::invalid_argument("layer_norm: gain/bias must have " + std::to_string(d) +
                                " elements");
  const Index rows = x.size() / d;
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  ArrayX<S> mean_r(rows), invstd_r(rows);
  for (Index r = 0; r < rows; ++r) {
    auto row = x.array().segment(r * d, d);
    const S mu = row.mean();
    const S var = (row - mu).square().mean();
    const S inv = S(1) / std::sqrt(var + static_cast<S>(eps));
    mean_r(r) = mu;
    invstd_r(r) = inv;
    out.array().segment(r * d, d) = (row - mu) * inv * gain.array() + bias.array();
  }
  if (detail::track_grad<S>(x, gain, bias)) {
    out.set_requires_grad(true);
    auto xn = x.node(), gn = gain.node(), bn = bias.node(), on = out.node();
    detail::record<S>([xn, gn, bn, on, rows, d, mean_r, invstd_r] {
      if (on->grad.size() == 0) return;
      if (xn->requires_grad) xn->ensure_grad();
      if (gn->requires_grad) gn->ensure_grad();
      if (bn->requires_grad) bn->ensure_grad();
      ArrayX<S> xhat(d), dxhat(d);
      for (Index r = 0; r < rows; ++r) {
        auto g = on->grad.segment(r * d, d);
        xhat = (xn->data.segment(r * d, d) - mean_r(r)) * invstd_r(r);
        if (gn->requires_grad) gn->grad += g * xhat;
        if (bn->requires_grad) bn->grad += g;
        if (xn->requires_grad) {
          dxhat = g * gn->data;
          const S m1 = dxhat.mean();
          const S m2 = (dxhat * xhat).mean();
          xn->grad.segment(r * d, d) += invstd_r(r) * (dxhat - m1 - xhat * m2);
        }
      }
    });
  }
  return out;
}

// Row gather from an embedding table; backward scatter-adds into the table.
template <typename S>
Tensor<S> embedding(const Tensor<S>& table, const std::vector<int>& ids) {
  if (table.ndim() != 2)
    throw std::invalid_argument("embedding: table must be 2-d, got " + shape_str(table.shape()));
  const Index v = table.dim(0), d = table.dim(1);
  const Index n = static_cast<Index>(ids.size());
  for (int id : ids)
    if (id < 0 || id >= v)
      throw std::invalid_argument("embedding: id " + std::to_string(id) +
                                  " outside table of size " + std::to_string(v));
  Tensor<S> out = Tensor<S>::zeros({n, d});
  for (Index i = 0; i < n; ++i)
    out.array().segment(i * d, d) = table.array().segment(static_cast<Index>(ids[i]) * d, d);
  if (detail::track_grad<S>(table)) {
    out.set_requires_grad(true);
    auto tn = table.node(), on = out.node();
    detail::record<S>([tn, on, ids, d] {
      if (on->grad.size() == 0) return;
      tn->ensure_grad();
      for (Index i = 0; i < static_cast<Index>(ids.size()); ++i)
        tn->grad.segment(static_cast<Index>(ids[i]) * d, d) += on->grad.segment(i * d, d);
    });
  }
  return out;
}

// Inverted dropout: train mode keeps with prob 1-p and scales kept units by
// 1/(1-p); eval mode is the identity (same tensor handle).
template <typename S>
Tensor<S> dropout(const Tensor<S>& x, double p, bool train, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0,1)");
  if (!train || p == 0.0) return x;
  const S keep_scale = static_cast<S>(1.0 / (1.0 - p));
  ArrayX<S> mask(x.size());
  for (Index i = 0; i < x.size(); ++i) mask(i) = rng.uniform() >= p ? keep_scale : S(0);
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  out.array() = x.array() * mask;
  if (detail::track_grad<S>(x)) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    detail::record<S>([xn, on, mask] {
      if (on->grad.size() == 0) return;
      xn->ensure_grad();
      xn->grad += on->grad * mask;
    });
  }
  return out;
}

// Adds an additive attention mask to (B,Tq,Tk) scores. The mask never
// receives gradient. mask dims: dim0 may equal B, be 1, or divide B (head
// grouping); dims 1..2 must equal or be 1.
template <typename S>
Tensor<S> add_mask(const Tensor<S>& scores, const Tensor<S>& mask) {
  if (scores.ndim() != 3 || mask.ndim() != 3)
    throw std::invalid_argument("add_mask: expected 3-d scores and mask, got " +
                                shape_str(scores.shape()) + " and " + shape_str(mask.shape()));
  const Index b = scores.dim(0), tq = scores.dim(1), tk = scores.dim(2);
  const Index mb = mask.dim(0), mq = mask.dim(1), mk = mask.dim(2);
  if ((mb != 1 && b % mb != 0) || (mq != 1 && mq != tq) || mk != tk)
    throw std::invalid_argument("add_mask: mask " + shape_str(mask.shape()) +
                                " does not broadcast to " + shape_str(scores.shape()));
  const Index group = b / mb;
  Tensor<S> out = Tensor<S>::zeros(scores.shape());
  for (Index i = 0; i < b; ++i) {
    const Index bi = (i / group) % mb;
    for (Index q = 0; q < tq; ++q) {
      const Index qi = mq == 1 ? 0 : q;
      out.array().segment((i * tq + q) * tk, tk) =
          scores.array().segment((i * tq + q) * tk, tk) +
          mask.array().segment((bi * mq + qi) * tk, tk);
    }
  }
  if (detail::track_grad<S>(scores)) {
    out.set_requires_grad(true);
    auto sn = scores.node(), on = out.node();
    detail::record<S>([sn, on] {
      if (on->grad.size() == 0) return;
      sn->ensure_grad();
      sn->grad += on->grad;
    });
  }
  return out;
}

// (B,D) -> (B,n,D) with every middle position an identical copy.
template <typename S>
Tensor<S> repeat_middle(const Tensor<S>& x, Index n) {
  if (x.ndim() != 2)
    throw std::invalid_argument("repeat_middle: expected 2-d input, got " + shape_str(x.shape()));
  if (n < 1) throw std::invalid_argument("repeat_middle: n must be >= 1");
  const Index b = x.dim(0), d = x.dim(1);
  Tensor<S> out = Tensor<S>::zeros({b, n, d});
  for (Index i = 0; i < b; ++i)
    for (Index j = 0; j < n; ++j)
      out.array().segment((i * n + j) * d, d) = x.array().segment(i * d, d);
  if (detail::track_grad<S>(x)) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    detail::record<S>([xn, on, b, n, d] {
      if (on->grad.size() == 0) return;
      xn->ensure_grad();
      for (Index i = 0; i < b; ++i)
        for (Index j = 0; j < n; ++j)
          xn->grad.segment(i * d, d) += on->grad.segment((i * n + j) * d, d);
    });
  }
  return out;
}

// Scaled dot-product attention: softmax(q k^T / sqrt(d_k) + mask) v.
// q (B,Tq,dk), k (B,Tk,dk), v (B,Tk,dv); mask optional, additive.
template <typename S>
Tensor<S> attention(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v,
                    const Tensor<S>& mask = {}) {
  if (q.ndim() != 3 || k.ndim() != 3 || v.ndim() != 3)
    throw std::invalid_argument("attention: expected 3-d q/k/v");
  if (q.dim(2) != k.dim(2))
    throw std::invalid_argument("attention: d_k of q and k disagree: " + shape_str(q.shape()) +
                                " vs " + shape_str(k.shape()));
  if (k.dim(0) != q.dim(0) || v.dim(0) != q.dim(0) || v.dim(1) != k.dim(1))
    throw std::invalid_argument("attention: incompatible shapes " + shape_str(q.shape()) + ", " +
                                shape_str(k.shape()) + ", " + shape_str(v.shape()));
  Tensor<S> scores = scale(matmul(q, transpose(k, 1, 2)),
                           1.0 / std::sqrt(static_cast<double>(q.dim(2))));
  if (mask.defined()) scores = add_mask(scores, mask);
  return matmul(softmax(scores, -1), v);
}

// ---------------------------------------------------------------------------
// Non-differentiable helpers.
// ---------------------------------------------------------------------------

// Argmax over the last axis; ties resolve to the lowest index.
template <typename S>
std::vector<int> argmax_last(const Tensor<S>& x) {
  const Index d = x.dim(-1);
  const Index rows = x.size() / d;
  std::vector<int> out(static_cast<std::size_t>(rows));
  for (Index r = 0; r < rows; ++r) {
    Index best = 0;
    x.array().segment(r * d, d).maxCoeff(&best);
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

}  // namespace cvt
