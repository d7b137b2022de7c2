// SPDX-License-Identifier: Apache-2.0
//
// Fused layers recorded as single tape nodes: LSTM sequence, 2-D
// convolution, max pooling, the bilinear-tanh word alignment map and the
// embedding lookup. Each keeps whatever forward intermediates its backward
// pass needs.

#ifndef CSN_NN_OPS_HPP
#define CSN_NN_OPS_HPP

#include "csn/autodiff.hpp"

#include <algorithm>
#include <cstdint>
#include <memory>
#include <vector>

namespace csn::ad {

/// Weights of one LSTM direction. Gate order in the 4h columns is
/// input, forget, cell, output.
template <typename T>
struct LstmWeights {
  Var<T> input;      // in x 4h
  Var<T> recurrent;  // h x 4h
  Var<T> bias;       // 1 x 4h
};

/// Runs an LSTM over the first `length` rows of x (T x in) and returns the
/// T x h hidden states; rows at or beyond `length` are zero. With
/// `reverse`, the recurrence starts at row length-1 and walks to row 0.
template <typename T>
Var<T> lstm_sequence(const Var<T>& x, const LstmWeights<T>& w, Index length, bool reverse) {
  const Index steps = x.rows();
  const Index hid = w.recurrent.rows();
  detail::require(w.input.rows() == x.cols() && w.input.cols() == 4 * hid, "lstm: input weight shape");
  detail::require(w.recurrent.cols() == 4 * hid, "lstm: recurrent weight shape");
  detail::require(w.bias.rows() == 1 && w.bias.cols() == 4 * hid, "lstm: bias shape");
  const Index len = std::clamp<Index>(length, 0, steps);

  struct Cache {
    Matrix<T> gates;   // len x 4h, post-activation
    Matrix<T> cell;    // len x h
    Matrix<T> hprev;   // len x h
    Matrix<T> cprev;   // len x h
    std::vector<Index> order;
  };
  auto cache = std::make_shared<Cache>();
  cache->gates.resize(len, 4 * hid);
  cache->cell.resize(len, hid);
  cache->hprev.resize(len, hid);
  cache->cprev.resize(len, hid);
  for (Index s = 0; s < len; ++s) cache->order.push_back(reverse ? len - 1 - s : s);

  Matrix<T> out = Matrix<T>::Zero(steps, hid);
  if (len > 0) {
    const Matrix<T> pre = (x.value().topRows(len) * w.input.value()).rowwise() + w.bias.value().row(0);
    Eigen::Matrix<T, 1, Eigen::Dynamic> h = Eigen::Matrix<T, 1, Eigen::Dynamic>::Zero(hid);
    Eigen::Matrix<T, 1, Eigen::Dynamic> c = Eigen::Matrix<T, 1, Eigen::Dynamic>::Zero(hid);
    for (Index s = 0; s < len; ++s) {
      const Index p = cache->order[static_cast<std::size_t>(s)];
      cache->hprev.row(s) = h;
      cache->cprev.row(s) = c;
      Eigen::Matrix<T, 1, Eigen::Dynamic> z = pre.row(p) + h * w.recurrent.value();
      auto sig = [](T v) { return T(1) / (T(1) + std::exp(-v)); };
      for (Index k = 0; k < hid; ++k) {
        z(k) = sig(z(k));
        z(hid + k) = sig(z(hid + k));
        z(2 * hid + k) = std::tanh(z(2 * hid + k));
        z(3 * hid + k) = sig(z(3 * hid + k));
      }
      c = z.segment(hid, hid).cwiseProduct(c) + z.segment(0, hid).cwiseProduct(z.segment(2 * hid, hid));
      h = z.segment(3 * hid, hid).cwiseProduct(c.array().tanh().matrix());
      cache->gates.row(s) = z;
      cache->cell.row(s) = c;
      out.row(p) = h;
    }
  }

  const std::vector<Var<T>> parents{x, w.input, w.recurrent, w.bias};
  return x.tape()->record(std::move(out), parents, [x, w, cache, hid, len](Tape<T>& tp, const Matrix<T>& g) {
    if (len == 0) return;
    Matrix<T> dz(len, 4 * hid);
    Eigen::Matrix<T, 1, Eigen::Dynamic> dh_next = Eigen::Matrix<T, 1, Eigen::Dynamic>::Zero(hid);
    Eigen::Matrix<T, 1, Eigen::Dynamic> dc_next = Eigen::Matrix<T, 1, Eigen::Dynamic>::Zero(hid);
    const Matrix<T>& Wh = w.recurrent.value();
    for (Index s = len - 1; s >= 0; --s) {
      const Index p = cache->order[static_cast<std::size_t>(s)];
      const auto gates = cache->gates.row(s);
      const auto ig = gates.segment(0, hid);
      const auto fg = gates.segment(hid, hid);
      const auto cg = gates.segment(2 * hid, hid);
      const auto og = gates.segment(3 * hid, hid);
      const Eigen::Matrix<T, 1, Eigen::Dynamic> tc = cache->cell.row(s).array().tanh().matrix();
      const Eigen::Matrix<T, 1, Eigen::Dynamic> dh = g.row(p) + dh_next;
      const Eigen::Matrix<T, 1, Eigen::Dynamic> dc =
          dh.cwiseProduct(og).cwiseProduct((T(1) - tc.array().square()).matrix()) + dc_next;
      for (Index k = 0; k < hid; ++k) {
        dz(s, k) = dc(k) * cg(k) * ig(k) * (T(1) - ig(k));
        dz(s, hid + k) = dc(k) * cache->cprev(s, k) * fg(k) * (T(1) - fg(k));
        dz(s, 2 * hid + k) = dc(k) * ig(k) * (T(1) - cg(k) * cg(k));
        dz(s, 3 * hid + k) = dh(k) * tc(k) * og(k) * (T(1) - og(k));
      }
      dc_next = dc.cwiseProduct(fg);
      dh_next = dz.row(s) * Wh.transpose();
    }
    // Rows of dz are in step order; scatter back to positions.
    Matrix<T> dz_pos = Matrix<T>::Zero(len, 4 * hid);
    for (Index s = 0; s < len; ++s) dz_pos.row(cache->order[static_cast<std::size_t>(s)]) = dz.row(s);
    if (tp.wants(x)) tp.grad(x.id()).topRows(len) += dz_pos * w.input.value().transpose();
    if (tp.wants(w.input)) tp.accumulate(w.input, x.value().topRows(len).transpose() * dz_pos);
    if (tp.wants(w.recurrent)) tp.accumulate(w.recurrent, cache->hprev.transpose() * dz);
    if (tp.wants(w.bias)) tp.accumulate(w.bias, dz.colwise().sum());
  });
}

/// Geometry of a feature map stored as (height*width) x channels, row
/// index y*width + x.
struct MapShape {
  Index height = 0;
  Index width = 0;
};

/// Output extent of "same" pooling/convolution with the given stride.
inline Index same_extent(Index in, Index stride) { return (in + stride - 1) / stride; }

/// Stride-1 convolution with "same" zero padding (for even kernels the extra
/// pad goes after). Weight layout: row ((ky*k + kx)*C + c), one column per
/// filter. `batch` maps of the same shape may be stacked along the rows.
template <typename T>
Var<T> conv2d_same(const Var<T>& x, MapShape shape, const Var<T>& weight, const Var<T>& bias, Index kernel,
                   Index batch = 1) {
  const Index C = x.cols();
  const Index H = shape.height, W = shape.width, HW = H * W;
  detail::require(batch >= 1 && x.rows() == batch * HW, "conv2d: map shape");
  detail::require(weight.rows() == kernel * kernel * C, "conv2d: weight rows");
  detail::require(bias.rows() == 1 && bias.cols() == weight.cols(), "conv2d: bias shape");
  const Index pad = (kernel - 1) / 2;

  // Calls fn(output row, im2col column offset, input row or -1 for padding).
  auto for_taps = [=](auto&& fn) {
    for (Index b = 0; b < batch; ++b)
      for (Index y = 0; y < H; ++y)
        for (Index xx = 0; xx < W; ++xx)
          for (Index ky = 0; ky < kernel; ++ky) {
            const Index sy = y + ky - pad;
            for (Index kx = 0; kx < kernel; ++kx) {
              const Index sx = xx + kx - pad;
              const bool inside = sy >= 0 && sy < H && sx >= 0 && sx < W;
              fn(b * HW + y * W + xx, (ky * kernel + kx) * C, inside ? b * HW + sy * W + sx : Index{-1});
            }
          }
  };

  const Index K = kernel * kernel * C;
  auto cols = std::make_shared<Matrix<T>>(batch * HW, K);
  const T* in = x.value().data();
  T* dst = cols->data();
  for_taps([&](Index r, Index c0, Index src) {
    T* d = dst + r * K + c0;
    if (src < 0)
      std::fill_n(d, C, T(0));
    else
      std::copy_n(in + src * C, C, d);
  });
  Matrix<T> out(batch * HW, weight.cols());
  out.noalias() = *cols * weight.value();
  out.rowwise() += bias.value().row(0);

  const std::vector<Var<T>> parents{x, weight, bias};
  return x.tape()->record(std::move(out), parents, [x, weight, bias, cols, C, K, for_taps](Tape<T>& tp, const Matrix<T>& g) {
    if (tp.wants(weight)) tp.grad(weight.id()).noalias() += cols->transpose() * g;
    if (tp.wants(bias)) tp.accumulate(bias, g.colwise().sum());
    if (!tp.wants(x)) return;
    Matrix<T> dcols(g.rows(), K);
    dcols.noalias() = g * weight.value().transpose();
    T* gx = tp.grad(x.id()).data();
    const T* dc = dcols.data();
    for_taps([&](Index r, Index c0, Index src) {
      if (src < 0) return;
      const T* s = dc + r * K + c0;
      T* d = gx + src * C;
      for (Index c = 0; c < C; ++c) d[c] += s[c];
    });
  });
}

/// Max pooling with "same" padding: ceil(H/stride) x ceil(W/stride) output,
/// windows clipped to the map. `batch` maps may be stacked along the rows.
template <typename T>
Var<T> max_pool_same(const Var<T>& x, MapShape shape, Index window, Index stride, MapShape* out_shape = nullptr,
                     Index batch = 1) {
  const Index H = shape.height, W = shape.width, C = x.cols();
  detail::require(batch >= 1 && x.rows() == batch * H * W, "max_pool: map shape");
  const Index Ho = same_extent(H, stride), Wo = same_extent(W, stride);
  const Index pad_h = std::max<Index>((Ho - 1) * stride + window - H, 0) / 2;
  const Index pad_w = std::max<Index>((Wo - 1) * stride + window - W, 0) / 2;
  if (out_shape != nullptr) *out_shape = MapShape{Ho, Wo};

  const Matrix<T>& in = x.value();
  Matrix<T> out(batch * Ho * Wo, C);
  auto arg = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(batch * Ho * Wo * C));
  for (Index b = 0; b < batch; ++b)
    for (Index oy = 0; oy < Ho; ++oy)
      for (Index ox = 0; ox < Wo; ++ox) {
        const Index y0 = std::max<Index>(oy * stride - pad_h, 0), y1 = std::min<Index>(oy * stride - pad_h + window, H);
        const Index x0 = std::max<Index>(ox * stride - pad_w, 0), x1 = std::min<Index>(ox * stride - pad_w + window, W);
        const Index o = b * Ho * Wo + oy * Wo + ox;
        T* best = out.row(o).data();
        Index* where = arg->data() + o * C;
        const Index first = b * H * W + y0 * W + x0;
        const T* src = in.row(first).data();
        for (Index c = 0; c < C; ++c) {
          best[c] = src[c];
          where[c] = first;
        }
        for (Index y = y0; y < y1; ++y)
          for (Index xx = x0; xx < x1; ++xx) {
            const Index r = b * H * W + y * W + xx;
            const T* row = in.row(r).data();
            for (Index c = 0; c < C; ++c)
              if (row[c] > best[c]) {
                best[c] = row[c];
                where[c] = r;
              }
          }
      }
  return x.tape()->record(std::move(out), {x}, [x, arg, C](Tape<T>& tp, const Matrix<T>& g) {
    if (!tp.wants(x)) return;
    Matrix<T>& gx = tp.grad(x.id());
    for (Index o = 0; o < g.rows(); ++o)
      for (Index c = 0; c < C; ++c) gx((*arg)[static_cast<std::size_t>(o * C + c)], c) += g(o, c);
  });
}

/// Word alignment map B[a][b] = sum_k v_k * tanh(s_a W_k u_b^T + b1_k).
/// `s` is Ls x D, `u` is Lc x D, `w` is D x (D*h) with block k holding the
/// D x D slice W_k (entry W[p][q][k] at (p, k*D + q)), `b1` and `v` are 1 x h.
template <typename T>
Var<T> bilinear_tanh_map(const Var<T>& s, const Var<T>& u, const Var<T>& w, const Var<T>& b1, const Var<T>& v) {
  const Index D = s.cols();
  const Index h = v.cols();
  detail::require(u.cols() == D, "word map: context width differs from sentence width");
  detail::require(w.rows() == D && w.cols() == D * h, "word map: W1 must be 2d x (2d*h)");
  detail::require(b1.rows() == 1 && b1.cols() == h && v.rows() == 1, "word map: b1/v shape");

  auto proj = std::make_shared<Matrix<T>>(s.value() * w.value());  // Ls x D*h
  auto act = std::make_shared<std::vector<Matrix<T>>>();
  act->reserve(static_cast<std::size_t>(h));
  Matrix<T> out = Matrix<T>::Zero(s.rows(), u.rows());
  for (Index k = 0; k < h; ++k) {
    Matrix<T> a = ((proj->middleCols(k * D, D) * u.value().transpose()).array() + b1.value()(0, k)).tanh().matrix();
    out += v.value()(0, k) * a;
    act->push_back(std::move(a));
  }
  const std::vector<Var<T>> parents{s, u, w, b1, v};
  return s.tape()->record(std::move(out), parents, [s, u, w, b1, v, proj, act, D, h](Tape<T>& tp, const Matrix<T>& g) {
    Matrix<T> ds = Matrix<T>::Zero(s.rows(), D);
    Matrix<T> du = Matrix<T>::Zero(u.rows(), D);
    Matrix<T> dw = Matrix<T>::Zero(D, D * h);
    Matrix<T> db(1, h), dv(1, h);
    for (Index k = 0; k < h; ++k) {
      const Matrix<T>& a = (*act)[static_cast<std::size_t>(k)];
      dv(0, k) = g.cwiseProduct(a).sum();
      const Matrix<T> dt = (g.array() * v.value()(0, k) * (T(1) - a.array().square())).matrix();
      db(0, k) = dt.sum();
      const auto wk = w.value().middleCols(k * D, D);
      const Matrix<T> dtu = dt * u.value();  // Ls x D
      if (tp.wants(s)) ds += dtu * wk.transpose();
      if (tp.wants(u)) du += dt.transpose() * proj->middleCols(k * D, D);
      if (tp.wants(w)) dw.middleCols(k * D, D) += s.value().transpose() * dtu;
    }
    tp.accumulate(s, ds);
    tp.accumulate(u, du);
    tp.accumulate(w, dw);
    tp.accumulate(b1, db);
    tp.accumulate(v, dv);
  });
}

/// Gathers embedding rows for `ids`, multiplying row t elementwise by
/// `dropout` (same shape as the output) when it is non-empty. Gradients go
/// straight into the table's Parameter::grad; the padding row (id 0) never
/// receives one.
template <typename T>
Var<T> embedding_lookup(Tape<T>& tape, Parameter<T>& table, const std::vector<std::int32_t>& ids,
                        Matrix<T> dropout = {}) {
  const Index width = table.value.cols();
  Matrix<T> out(static_cast<Index>(ids.size()), width);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const Index id = ids[t];
    if (id < 0 || id >= table.value.rows()) throw std::out_of_range("embedding id out of range: " + std::to_string(id));
    out.row(static_cast<Index>(t)) = table.value.row(id);
  }
  if (dropout.size() != 0) out = out.cwiseProduct(dropout);
  Parameter<T>* tbl = &table;
  return tape.record(std::move(out), true, [tbl, ids, dropout](Tape<T>&, const Matrix<T>& g) {
    for (std::size_t t = 0; t < ids.size(); ++t) {
      if (ids[t] == 0) continue;
      if (dropout.size() != 0)
        tbl->grad.row(ids[t]) += g.row(static_cast<Index>(t)).cwiseProduct(dropout.row(static_cast<Index>(t)));
      else
        tbl->grad.row(ids[t]) += g.row(static_cast<Index>(t));
    }
  });
}

}  // namespace csn::ad

#endif  // CSN_NN_OPS_HPP
