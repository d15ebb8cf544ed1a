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

#pragma once

// Reverse-mode automatic differentiation over Tensor values. Every primitive
// appends one node holding its output and an adjoint rule; backward() replays
// the rules in reverse insertion order.

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "pipedec/tensor.hpp"

namespace pipedec {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&)>;

  // A tape constructed with record_grad=false evaluates forward only.
  explicit Tape(bool record_grad = true) : record_(record_grad) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Tensor<T> value);
  // Binds an externally owned tensor without copying; it must outlive the
  // tape. No gradient flows to it.
  Var constant_ref(const Tensor<T>& value);
  // Binds a parameter by reference; its gradient is accumulated into
  // param.grad by backward().
  Var parameter(Parameter<T>& param);

  // Appends a primitive's output. `fn` is dropped when no parent needs a
  // gradient or the tape is not recording.
  Var emit(Tensor<T> value, std::initializer_list<Var> parents, BackwardFn fn);

  const Tensor<T>& value(Var v) const;
  bool needs_grad(Var v) const;
  // Lazily allocated, zero-initialized adjoint of v.
  Tensor<T>& grad(Var v);

  // Seeds d(loss)/d(loss) = 1 and propagates. Callable once per tape.
  void backward(Var loss);

 private:
  struct Node {
    Tensor<T> value;
    const Tensor<T>* external = nullptr;
    Tensor<T> grad;
    Parameter<T>* param = nullptr;
    BackwardFn backward;
    bool needs_grad = false;
  };

  Node& node(Var v);
  const Node& node(Var v) const;

  std::deque<Node> nodes_;
  bool record_;
  bool backward_done_ = false;
};

// Description of a batched multi-head attention call. Queries and keys of
// example b occupy rows [b*len, (b+1)*len) of their matrices.
struct AttentionLayout {
  int batch = 1;
  int query_len = 0;
  int key_len = 0;
  int heads = 1;
  // batch * query_len * key_len, nonzero where the query may attend the key.
  std::vector<std::uint8_t> mask;
  // batch * query_len; excluded (padding) queries produce zero output.
  std::vector<std::uint8_t> query_valid;
  // batch * query_len * key_len relative-position buckets, or empty when the
  // attention carries no position bias.
  std::vector<int> bucket;
};

namespace ops {

template <typename T> Var matmul(Tape<T>& tape, Var a, Var b);
template <typename T> Var add(Tape<T>& tape, Var a, Var b);
template <typename T> Var mul(Tape<T>& tape, Var a, Var b);
template <typename T> Var scale(Tape<T>& tape, Var x, T factor);
template <typename T> Var relu(Tape<T>& tape, Var x);
template <typename T> Var sum(Tape<T>& tape, Var x);
template <typename T> Var rmsnorm(Tape<T>& tape, Var x, Var gain, T eps = T(1e-6));
template <typename T>
Var embedding(Tape<T>& tape, Var table, std::span<const int> ids);
// Inverted dropout; identity when rate == 0.
template <typename T>
Var dropout(Tape<T>& tape, Var x, T rate, std::mt19937_64& rng);
// Row-wise softmax restricted to permitted entries. `mask` is row-major with
// the same element count as scores.
template <typename T>
Var masked_softmax(Tape<T>& tape, Var scores, std::span<const std::uint8_t> mask);
// Scaled dot-product multi-head attention with optional bucketed bias.
// `bias_table` has shape [heads, buckets] and may be an invalid Var.
template <typename T>
Var attention(Tape<T>& tape, Var q, Var k, Var v,
              std::shared_ptr<const AttentionLayout> layout, Var bias_table);
// sum_i weights[i] * -log softmax(logits[i])[targets[i]]; rows with a
// negative target are skipped. Per-row losses are written to row_loss when
// non-null.
template <typename T>
Var weighted_nll(Tape<T>& tape, Var logits, std::span<const int> targets,
                 std::span<const T> weights, std::vector<T>* row_loss = nullptr);

}  // namespace ops

namespace kernels {

// Softmax over permitted entries in place; forbidden entries become exactly
// zero. Throws DegenerateRowError when nothing is permitted.
template <typename T>
void masked_softmax_row(T* row, const std::uint8_t* mask, int n);

// One attention row for one head. Keys/values are strided rows; `bias`
// (per key, may be null) is added to the scaled scores before masking.
// `probs` receives the attention weights, `out` (head_dim) the weighted sum.
template <typename T>
void attend_row(const T* query, const T* keys, const T* values,
                std::size_t stride, int num_keys, int head_dim,
                const std::uint8_t* mask, const T* bias, T scale, T* probs,
                T* out);

// C[M,N] = A[M,K] * B[K,N] (overwrites C).
template <typename T>
void matmul(const T* a, const T* b, T* c, int m, int k, int n);

template <typename T>
void rmsnorm_rows(const T* x, const T* gain, T* y, int rows, int cols, T eps);

}  // namespace kernels

}  // namespace pipedec
