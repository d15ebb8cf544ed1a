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

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pipedec/errors.hpp"

namespace pipedec {

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& shape);

// Rejects negative dimensions before anything is sized from them.
inline std::size_t shape_numel(const Shape& shape) {
  for (int d : shape) {
    if (d < 0) throw DimensionError("negative dimension in " + shape_str(shape));
  }
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t acc, int d) {
                           return acc * static_cast<std::size_t>(d);
                         });
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// Dense row-major tensor. float is the working precision; double is used
// for gradient verification.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
  }
  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_)) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_str(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // 2-D view helpers; a rank-1 tensor is treated as a single row.
  int rows() const { return rank() >= 2 ? shape_[0] : 1; }
  int cols() const { return rank() >= 2 ? shape_[1] : (rank() == 1 ? shape_[0] : 1); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& at(int r, int c) { return data_[static_cast<std::size_t>(r) * cols() + c]; }
  const T& at(int r, int c) const {
    return data_[static_cast<std::size_t>(r) * cols() + c];
  }
  std::span<T> row(int r) {
    return std::span<T>(data_).subspan(static_cast<std::size_t>(r) * cols(), cols());
  }
  std::span<const T> row(int r) const {
    return std::span<const T>(data_).subspan(static_cast<std::size_t>(r) * cols(),
                                             cols());
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

// A named trainable tensor with its accumulated gradient.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(T{0}); }
};

}  // namespace pipedec
