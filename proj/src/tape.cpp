// Copyright 2026 The pipedec Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pipedec/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <type_traits>

#include "pipedec/simd.hpp"

namespace pipedec {

// ---------------------------------------------------------------------------
// Tape

template <typename T>
typename Tape<T>::Node& Tape<T>::node(Var v) {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw ContractError("tape variable out of range: " + std::to_string(v.id));
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw ContractError("tape variable out of range: " + std::to_string(v.id));
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

template <typename T>
Var Tape<T>::constant(Tensor<T> value) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  return Var{static_cast<int>(nodes_.size() - 1)};
}

template <typename T>
Var Tape<T>::constant_ref(const Tensor<T>& value) {
  Node& n = nodes_.emplace_back();
  n.external = &value;
  return Var{static_cast<int>(nodes_.size() - 1)};
}

template <typename T>
Var Tape<T>::parameter(Parameter<T>& param) {
  Node& n = nodes_.emplace_back();
  n.external = &param.value;
  n.param = &param;
  n.needs_grad = record_;
  return Var{static_cast<int>(nodes_.size() - 1)};
}

template <typename T>
Var Tape<T>::emit(Tensor<T> value, std::initializer_list<Var> parents,
                  BackwardFn fn) {
  bool needs = false;
  if (record_) {
    for (Var p : parents) needs = needs || (p.valid() && node(p).needs_grad);
  }
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.needs_grad = needs;
  if (needs) n.backward = std::move(fn);
  return Var{static_cast<int>(nodes_.size() - 1)};
}

template <typename T>
const Tensor<T>& Tape<T>::value(Var v) const {
  const Node& n = node(v);
  return n.external ? *n.external : n.value;
}

template <typename T>
bool Tape<T>::needs_grad(Var v) const {
  return v.valid() && node(v).needs_grad;
}

template <typename T>
Tensor<T>& Tape<T>::grad(Var v) {
  Node& n = node(v);
  if (n.grad.shape() != value(v).shape() || n.grad.size() != value(v).size()) {
    n.grad = Tensor<T>(value(v).shape());
  }
  return n.grad;
}

template <typename T>
void Tape<T>::backward(Var loss) {
  if (!record_) throw ContractError("backward on a non-recording tape");
  if (backward_done_) {
    throw ContractError("backward already ran on this tape; reset before reuse");
  }
  if (nodes_.empty()) throw ContractError("backward on an empty tape");
  if (value(loss).size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        shape_str(value(loss).shape()));
  }
  backward_done_ = true;
  grad(loss)[0] = T{1};
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this);
    if (n.param) {
      auto& dst = n.param->grad;
      if (dst.size() != n.grad.size()) dst = Tensor<T>(n.param->value.shape());
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
    }
  }
}

// ---------------------------------------------------------------------------
// Kernels

namespace kernels {

template <typename T>
void masked_softmax_row(T* row, const std::uint8_t* mask, int n) {
  T mx = -std::numeric_limits<T>::infinity();
  bool any = false;
  for (int i = 0; i < n; ++i) {
    if (mask[i]) {
      mx = std::max(mx, row[i]);
      any = true;
    }
  }
  if (!any) throw DegenerateRowError("softmax row has no permitted entry");
  T total = 0;
  for (int i = 0; i < n; ++i) {
    if (mask[i]) {
      row[i] = std::exp(row[i] - mx);
      total += row[i];
    } else {
      row[i] = T{0};
    }
  }
  const T inv = T{1} / total;
  for (int i = 0; i < n; ++i) {
    if (mask[i]) row[i] *= inv;
  }
}

template <typename T>
void attend_row(const T* query, const T* keys, const T* values,
                std::size_t stride, int num_keys, int head_dim,
                const std::uint8_t* mask, const T* bias, T scale, T* probs,
                T* out) {
  // Resolve the kernels once per row; head vectors are short, so per-key
  // dispatch would cost as much as the arithmetic.
  T (*dot)(const T*, const T*, std::size_t) = simd::dot;
  void (*axpy)(std::size_t, T, const T*, T*) = simd::axpy;
  if constexpr (std::is_same_v<T, float>) {
    const bool wide = simd::active_isa() == simd::Isa::kAvx2;
    dot = wide ? simd::avx2::dot : simd::scalar::dot;
    axpy = wide ? simd::avx2::axpy : simd::scalar::axpy;
  }
  for (int k = 0; k < num_keys; ++k) {
    if (!mask[k]) continue;
    T s = dot(query, keys + static_cast<std::size_t>(k) * stride,
              static_cast<std::size_t>(head_dim)) * scale;
    if (bias) s += bias[k];
    probs[k] = s;
  }
  masked_softmax_row(probs, mask, num_keys);
  std::fill(out, out + head_dim, T{0});
  for (int k = 0; k < num_keys; ++k) {
    if (!mask[k]) continue;
    axpy(static_cast<std::size_t>(head_dim), probs[k],
         values + static_cast<std::size_t>(k) * stride, out);
  }
}

template <typename T>
void matmul(const T* a, const T* b, T* c, int m, int k, int n) {
  std::fill(c, c + static_cast<std::size_t>(m) * n, T{0});
  simd::gemm_acc(static_cast<std::size_t>(m), static_cast<std::size_t>(n),
                 static_cast<std::size_t>(k), a, b, c);
}

template <typename T>
void rmsnorm_rows(const T* x, const T* gain, T* y, int rows, int cols, T eps) {
  for (int r = 0; r < rows; ++r) {
    const T* xr = x + static_cast<std::size_t>(r) * cols;
    T* yr = y + static_cast<std::size_t>(r) * cols;
    T ms = 0;
    for (int c = 0; c < cols; ++c) ms += xr[c] * xr[c];
    const T inv = T{1} / std::sqrt(ms / static_cast<T>(cols) + eps);
    for (int c = 0; c < cols; ++c) yr[c] = xr[c] * inv * gain[c];
  }
}

}  // namespace kernels

// ---------------------------------------------------------------------------
// Primitives

namespace ops {
namespace {

template <typename T>
Tensor<T> transpose(const Tensor<T>& m) {
  const int r = m.rows();
  const int c = m.cols();
  Tensor<T> t({c, r});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) t.at(j, i) = m.at(i, j);
  return t;
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

}  // namespace

template <typename T>
Var matmul(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(av.shape()) +
                         " x " + shape_str(bv.shape()));
  }
  const int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor<T> out({m, n});
  kernels::matmul(av.data(), bv.data(), out.data(), m, k, n);
  Var res{static_cast<int>(tape.size())};
  return tape.emit(std::move(out), {a, b}, [a, b, res, m, k, n](Tape<T>& t) {
    const Tensor<T>& g = t.grad(res);
    if (t.needs_grad(a)) {
      const Tensor<T> bt = transpose(t.value(b));
      simd::gemm_acc(m, k, n, g.data(), bt.data(), t.grad(a).data());
    }
    if (t.needs_grad(b)) {
      const Tensor<T> at = transpose(t.value(a));
      simd::gemm_acc(k, n, m, at.data(), g.data(), t.grad(b).data());
    }
  });
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  require_same_shape(av, bv, "add");
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  Var res{static_cast<int>(tape.size())};
  return tape.emit(std::move(out), {a, b}, [a, b, res](Tape<T>& t) {
    const Tensor<T>& g = t.grad(res);
    for (Var p : {a, b}) {
      if (!t.needs_grad(p)) continue;
      Tensor<T>& gp = t.grad(p);
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[i];
    }
  });
}

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  require_same_shape(av, bv, "mul");
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  Var res{static_cast<int>(tape.size())};
  return tape.emit(std::move(out), {a, b}, [a, b, res](Tape<T>& t) {
    const Tensor<T>& g = t.grad(res);
    if (t.needs_grad(a)) {
      Tensor<T>& ga = t.grad(a);
      const Tensor<T>& bv2 = t.value(b);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv2[i];
    }
    if (t.needs_grad(b)) {
      Tensor<T>& gb = t.grad(b);
      const Tensor<T>& av2 = t.value(a);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av2[i];
    }
  });
}

template <typename T>
Var scale(Tape<T>& tape, Var x, T factor) {
  Tensor<T> out = tape.value(x);
  for (auto& v : out.values()) v *= factor;
  Var res{static_cast<int>(tape.size())};
  return tape.emit(std::move(out), {x}, [x, res, factor](Tape<T>& t) {
    const Tensor<T>& g = t.grad(res);
    Tensor<T>& gx = t.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * g[i];
  });
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
  Tensor<T> out = tape.value(x);
  for (auto& v : out.values()) v = v > T{0} ? v : T{0};
  Var res{static_cast<int>(tape.size())};
  return tape.emit(std::move(out), {x}, [x, res](Tape<T>& t) {
    const Tensor<T>& g = t.grad(res);
    const Tensor<T>& xv = t.value(x);
    Tensor<T>& gx = t.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (xv[i] > T{0}) gx[i] += g[i];
    }
  });
}

template <typename T>
Var sum(Tape<T>& tape, Var x) {
  T total = 0;
  for (T v : tape.value(x).values()) total += v;
  Var res{static_cast<int>(tape.size())};
  return tape.emit(Tensor<T>(Shape{}, std::vector<T>{total}), {x},
                   [x, res](Tape<T>& t) {
                     const T g = t.grad(res)[0];
                     for (auto& v : t.grad(x).values()) v += g;
                   });
}

template <typename T>
Var rmsnorm(Tape<T>& tape, Var x, Var gain, T eps) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& gv = tape.value(gain);
  const int rows = xv.rows();
  const int cols = xv.cols();
  if (static_cast<int>(gv.size()) != cols) {
    throw DimensionError("rmsnorm: gain " + shape_str(gv.shape()) +
                         " does not match input " + shape_str(xv.shape()));
  }
  Tensor<T> out(xv.shape());
  kernels::rmsnorm_rows(xv.data(), gv.data(), out.data(), rows, cols, eps);
  Var res{static_cast<int>(tape.size())};
  return tape.emit(std::move(out), {x, gain}, [x, gain, res, rows, cols, eps](Tape<T>& t) {
    const Tensor<T>& g = t.grad(res);
    const Tensor<T>& xv2 = t.value(x);
    const Tensor<T>& gv2 = t.value(gain);
    const bool want_x = t.needs_grad(x);
    const bool want_g = t.needs_grad(gain);
    for (int r = 0; r < rows; ++r) {
      const T* xr = xv2.data() + static_cast<std::size_t>(r) * cols;
      const T* gr = g.data() + static_cast<std::size_t>(r) * cols;
      T ms = 0;
      for (int c = 0; c < cols; ++c) ms += xr[c] * xr[c];
      const T inv = T{1} / std::sqrt(ms / static_cast<T>(cols) + eps);
      if (want_g) {
        T* gg = t.grad(gain).data();
        for (int c = 0; c < cols; ++c) gg[c] += gr[c] * xr[c] * inv;
      }
      if (want_x) {
        T proj = 0;
        for (int c = 0; c < cols; ++c) proj += gv2[c] * gr[c] * xr[c];
        const T coef = proj * inv * inv * inv / static_cast<T>(cols);
        T* gx = t.grad(x).data() + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) gx[c] += inv * gv2[c] * gr[c] - coef * xr[c];
      }
    }
  });
}

template <typename T>
Var embedding(Tape<T>& tape, Var table, std::span<const int> ids) {
  const Tensor<T>& tv = tape.value(table);
  const int vocab = tv.dim(0);
  const int dim = tv.dim(1);
  Tensor<T> out({static_cast<int>(ids.size()), dim});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= vocab) {
      throw DimensionError("embedding: id " + std::to_string(ids[i]) +
                           " outside table of " + std::to_string(vocab) + " rows");
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * dim, dim,
                out.data() + i * dim);
  }
  std::vector<int> kept(ids.begin(), ids.end());
  Var res{static_cast<int>(tape.size())};
  return tape.emit(std::move(out), {table}, [table, res, dim, kept = std::move(kept)](Tape<T>& t) {
    const Tensor<T>& g = t.grad(res);
    Tensor<T>& gt = t.grad(table);
    for (std::size_t i = 0; i < kept.size(); ++i) {
      T* dst = gt.data() + static_cast<std::size_t>(kept[i]) * dim;
      const T* src = g.data() + i * dim;
      for (int c = 0; c < dim; ++c) dst[c] += src[c];
    }
  });
}

template <typename T>
Var dropout(Tape<T>& tape, Var x, T rate, std::mt19937_64& rng) {
  if (rate <= T{0}) return x;
  const Tensor<T>& xv = tape.value(x);
  std::bernoulli_distribution keep(1.0 - static_cast<double>(rate));
  const T s = T{1} / (T{1} - rate);
  std::vector<T> factor(xv.size());
  for (auto& f : factor) f = keep(rng) ? s : T{0};
  Tensor<T> out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor[i];
  Var res{static_cast<int>(tape.size())};
  return tape.emit(std::move(out), {x}, [x, res, factor = std::move(factor)](Tape<T>& t) {
    const Tensor<T>& g = t.grad(res);
    Tensor<T>& gx = t.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * factor[i];
  });
}

template <typename T>
Var masked_softmax(Tape<T>& tape, Var scores, std::span<const std::uint8_t> mask) {
  const Tensor<T>& sv = tape.value(scores);
  if (mask.size() != sv.size()) {
    throw DimensionError("masked_softmax: mask has " + std::to_string(mask.size()) +
                         " entries, scores " + shape_str(sv.shape()));
  }
  const int rows = sv.rows();
  const int cols = sv.cols();
  Tensor<T> out = sv;
  for (int r = 0; r < rows; ++r) {
    kernels::masked_softmax_row(out.data() + static_cast<std::size_t>(r) * cols,
                                mask.data() + static_cast<std::size_t>(r) * cols, cols);
  }
  Var res{static_cast<int>(tape.size())};
  return tape.emit(std::move(out), {scores}, [scores, res, rows, cols](Tape<T>& t) {
    const Tensor<T>& g = t.grad(res);
    const Tensor<T>& p = t.value(res);
    Tensor<T>& gs = t.grad(scores);
    for (int r = 0; r < rows; ++r) {
      const std::size_t off = static_cast<std::size_t>(r) * cols;
      T dotp = 0;
      for (int c = 0; c < cols; ++c) dotp += p[off + c] * g[off + c];
      for (int c = 0; c < cols; ++c) gs[off + c] += p[off + c] * (g[off + c] - dotp);
    }
  });
}

template <typename T>
Var attention(Tape<T>& tape, Var q, Var k, Var v,
              std::shared_ptr<const AttentionLayout> layout, Var bias_table) {
  const Tensor<T>& qv = tape.value(q);
  const Tensor<T>& kv = tape.value(k);
  const Tensor<T>& vv = tape.value(v);
  const AttentionLayout& L = *layout;
  const int dim = qv.cols();
  if (dim % L.heads != 0 || kv.cols() != dim || vv.cols() != dim ||
      qv.rows() != L.batch * L.query_len || kv.rows() != L.batch * L.key_len ||
      vv.rows() != kv.rows()) {
    throw DimensionError("attention: q " + shape_str(qv.shape()) + ", k " +
                         shape_str(kv.shape()) + ", v " + shape_str(vv.shape()) +
                         " disagree with layout");
  }
  const std::size_t cells =
      static_cast<std::size_t>(L.batch) * L.query_len * L.key_len;
  if (L.mask.size() != cells ||
      L.query_valid.size() != static_cast<std::size_t>(L.batch) * L.query_len ||
      (!L.bucket.empty() && L.bucket.size() != cells)) {
    throw DimensionError("attention: layout tables have wrong sizes");
  }
  const bool has_bias = bias_table.valid();
  if (has_bias && L.bucket.empty()) {
    throw ContractError("attention: bias table given without bucket indices");
  }
  const int head_dim = dim / L.heads;
  const T scl = T{1} / std::sqrt(static_cast<T>(head_dim));
  const int nbuckets = has_bias ? tape.value(bias_table).cols() : 0;

  Tensor<T> out({qv.rows(), dim});
  auto probs = std::make_shared<std::vector<T>>(cells * L.heads, T{0});
  std::vector<T> bias_row(static_cast<std::size_t>(L.key_len));
  for (int b = 0; b < L.batch; ++b) {
    for (int h = 0; h < L.heads; ++h) {
      const T* table_h = has_bias ? tape.value(bias_table).data() +
                                        static_cast<std::size_t>(h) * nbuckets
                                  : nullptr;
      for (int i = 0; i < L.query_len; ++i) {
        const std::size_t qrow = static_cast<std::size_t>(b) * L.query_len + i;
        if (!L.query_valid[qrow]) continue;
        const std::size_t cell = qrow * L.key_len;
        if (has_bias) {
          for (int j = 0; j < L.key_len; ++j) bias_row[j] = table_h[L.bucket[cell + j]];
        }
        kernels::attend_row(
            qv.data() + qrow * dim + h * head_dim,
            kv.data() + static_cast<std::size_t>(b) * L.key_len * dim + h * head_dim,
            vv.data() + static_cast<std::size_t>(b) * L.key_len * dim + h * head_dim,
            static_cast<std::size_t>(dim), L.key_len, head_dim, L.mask.data() + cell,
            has_bias ? bias_row.data() : nullptr, scl,
            probs->data() + (static_cast<std::size_t>(h) * cells + cell),
            out.data() + qrow * dim + h * head_dim);
      }
    }
  }

  Var res{static_cast<int>(tape.size())};
  return tape.emit(
      std::move(out), {q, k, v, bias_table},
      [q, k, v, bias_table, res, layout, probs, dim, head_dim, scl, cells,
       nbuckets](Tape<T>& t) {
        const AttentionLayout& L = *layout;
        const Tensor<T>& g = t.grad(res);
        const Tensor<T>& qv = t.value(q);
        const Tensor<T>& kv = t.value(k);
        const Tensor<T>& vv = t.value(v);
        T* gq = t.needs_grad(q) ? t.grad(q).data() : nullptr;
        T* gk = t.needs_grad(k) ? t.grad(k).data() : nullptr;
        T* gv = t.needs_grad(v) ? t.grad(v).data() : nullptr;
        T* gb = t.needs_grad(bias_table) ? t.grad(bias_table).data() : nullptr;
        std::vector<T> ds(static_cast<std::size_t>(L.key_len));
        for (int b = 0; b < L.batch; ++b) {
          const std::size_t kbase = static_cast<std::size_t>(b) * L.key_len;
          for (int h = 0; h < L.heads; ++h) {
            const std::size_t hoff = static_cast<std::size_t>(h) * head_dim;
            for (int i = 0; i < L.query_len; ++i) {
              const std::size_t qrow = static_cast<std::size_t>(b) * L.query_len + i;
              if (!L.query_valid[qrow]) continue;
              const std::size_t cell = qrow * L.key_len;
              const T* p = probs->data() + static_cast<std::size_t>(h) * cells + cell;
              const std::uint8_t* m = L.mask.data() + cell;
              const T* go = g.data() + qrow * dim + hoff;
              T weighted = 0;
              for (int j = 0; j < L.key_len; ++j) {
                if (!m[j]) {
                  ds[j] = 0;
                  continue;
                }
                const std::size_t krow = (kbase + j) * dim + hoff;
                const T dp = simd::dot(go, vv.data() + krow, head_dim);
                ds[j] = dp;
                weighted += p[j] * dp;
                if (gv) simd::axpy(head_dim, p[j], go, gv + krow);
              }
              for (int j = 0; j < L.key_len; ++j) {
                if (!m[j]) continue;
                const T d = p[j] * (ds[j] - weighted);
                const std::size_t krow = (kbase + j) * dim + hoff;
                if (gq) simd::axpy(head_dim, d * scl, kv.data() + krow, gq + qrow * dim + hoff);
                if (gk) simd::axpy(head_dim, d * scl, qv.data() + qrow * dim + hoff, gk + krow);
                if (gb) gb[static_cast<std::size_t>(h) * nbuckets + L.bucket[cell + j]] += d;
              }
            }
          }
        }
      });
}

template <typename T>
Var weighted_nll(Tape<T>& tape, Var logits, std::span<const int> targets,
                 std::span<const T> weights, std::vector<T>* row_loss) {
  const Tensor<T>& lv = tape.value(logits);
  const int rows = lv.rows();
  const int cols = lv.cols();
  if (targets.size() != static_cast<std::size_t>(rows) || weights.size() != targets.size()) {
    throw DimensionError("weighted_nll: " + std::to_string(targets.size()) +
                         " targets for logits " + shape_str(lv.shape()));
  }
  auto softmax = std::make_shared<Tensor<T>>(lv.shape());
  if (row_loss) row_loss->assign(static_cast<std::size_t>(rows), T{0});
  T total = 0;
  for (int r = 0; r < rows; ++r) {
    const int y = targets[r];
    if (y < 0) continue;
    if (y >= cols) {
      throw DimensionError("weighted_nll: target " + std::to_string(y) +
                           " outside vocabulary of " + std::to_string(cols));
    }
    const T* lr = lv.data() + static_cast<std::size_t>(r) * cols;
    T* sr = softmax->data() + static_cast<std::size_t>(r) * cols;
    const T mx = *std::max_element(lr, lr + cols);
    T z = 0;
    for (int c = 0; c < cols; ++c) {
      sr[c] = std::exp(lr[c] - mx);
      z += sr[c];
    }
    for (int c = 0; c < cols; ++c) sr[c] /= z;
    const T nll = std::log(z) + mx - lr[y];
    if (row_loss) (*row_loss)[r] = nll;
    total += weights[r] * nll;
  }
  std::vector<int> tg(targets.begin(), targets.end());
  std::vector<T> wt(weights.begin(), weights.end());
  Var res{static_cast<int>(tape.size())};
  return tape.emit(Tensor<T>(Shape{}, std::vector<T>{total}), {logits},
                   [logits, res, rows, cols, softmax, tg = std::move(tg),
                    wt = std::move(wt)](Tape<T>& t) {
                     const T g = t.grad(res)[0];
                     Tensor<T>& gl = t.grad(logits);
                     for (int r = 0; r < rows; ++r) {
                       if (tg[r] < 0 || wt[r] == T{0}) continue;
                       const T w = g * wt[r];
                       T* dst = gl.data() + static_cast<std::size_t>(r) * cols;
                       const T* sr = softmax->data() + static_cast<std::size_t>(r) * cols;
                       for (int c = 0; c < cols; ++c) dst[c] += w * sr[c];
                       dst[tg[r]] -= w;
                     }
                   });
}

}  // namespace ops

#define PIPEDEC_INSTANTIATE(T)                                                   \
  template class Tape<T>;                                                        \
  template void kernels::masked_softmax_row<T>(T*, const std::uint8_t*, int);    \
  template void kernels::attend_row<T>(const T*, const T*, const T*, std::size_t, \
                                       int, int, const std::uint8_t*, const T*, T, \
                                       T*, T*);                                  \
  template void kernels::matmul<T>(const T*, const T*, T*, int, int, int);       \
  template void kernels::rmsnorm_rows<T>(const T*, const T*, T*, int, int, T);   \
  template Var ops::matmul<T>(Tape<T>&, Var, Var);                               \
  template Var ops::add<T>(Tape<T>&, Var, Var);                                  \
  template Var ops::mul<T>(Tape<T>&, Var, Var);                                  \
  template Var ops::scale<T>(Tape<T>&, Var, T);                                  \
  template Var ops::relu<T>(Tape<T>&, Var);                                      \
  template Var ops::sum<T>(Tape<T>&, Var);                                       \
  template Var ops::rmsnorm<T>(Tape<T>&, Var, Var, T);                           \
  template Var ops::embedding<T>(Tape<T>&, Var, std::span<const int>);           \
  template Var ops::dropout<T>(Tape<T>&, Var, T, std::mt19937_64&);              \
  template Var ops::masked_softmax<T>(Tape<T>&, Var, std::span<const std::uint8_t>); \
  template Var ops::attention<T>(Tape<T>&, Var, Var, Var,                        \
                                 std::shared_ptr<const AttentionLayout>, Var);   \
  template Var ops::weighted_nll<T>(Tape<T>&, Var, std::span<const int>,         \
                                    std::span<const T>, std::vector<T>*);

PIPEDEC_INSTANTIATE(float)
PIPEDEC_INSTANTIATE(double)

}  // namespace pipedec
