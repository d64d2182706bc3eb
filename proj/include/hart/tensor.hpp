/*
 * Copyright 2026 The hart-cpp authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "hart/error.hpp"

namespace hart {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

/// Dense row-major tensor with copy-on-write storage. Copies share the
/// buffer; mutable_data() detaches when shared, so values captured by
/// autodiff closures stay stable.
template <typename T>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(Shape shape)
      : shape_(std::move(shape)),
        buf_(std::make_shared<std::vector<T>>(checked_numel(shape_), T(0))) {}

  TensorT(Shape shape, std::vector<T> values)
      : shape_(std::move(shape)),
        buf_(std::make_shared<std::vector<T>>(std::move(values))) {
    if (static_cast<int64_t>(buf_->size()) != shape_numel(shape_))
      throw ShapeError("tensor value count " + std::to_string(buf_->size()) +
                       " does not match shape " + shape_str(shape_));
  }

  static TensorT full(Shape shape, T v) {
    TensorT t(std::move(shape));
    std::fill(t.buf_->begin(), t.buf_->end(), v);
    return t;
  }

  static TensorT scalar(T v) { return TensorT(Shape{1}, std::vector<T>{v}); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return buf_ ? static_cast<int64_t>(buf_->size()) : 0; }
  bool defined() const { return static_cast<bool>(buf_); }

  const T* data() const { return buf_->data(); }

  T* mutable_data() {
    if (buf_.use_count() > 1) buf_ = std::make_shared<std::vector<T>>(*buf_);
    return buf_->data();
  }

  T at(std::initializer_list<int> idx) const {
    int64_t off = 0;
    size_t i = 0;
    for (int v : idx) off = off * shape_[i++] + v;
    return (*buf_)[static_cast<size_t>(off)];
  }

  /// Same buffer, new shape. A dim of -1 is inferred.
  TensorT reshaped(Shape shape) const {
    int64_t known = 1;
    int infer = -1;
    for (size_t i = 0; i < shape.size(); ++i) {
      if (shape[i] == -1) {
        if (infer >= 0) throw ShapeError("reshape with two inferred dims");
        infer = static_cast<int>(i);
      } else {
        known *= shape[i];
      }
    }
    if (infer >= 0) shape[static_cast<size_t>(infer)] = static_cast<int>(numel() / known);
    if (shape_numel(shape) != numel())
      throw ShapeError("cannot reshape " + shape_str(shape_) + " (" +
                       std::to_string(numel()) + " values) to " + shape_str(shape));
    TensorT out;
    out.shape_ = std::move(shape);
    out.buf_ = buf_;
    return out;
  }

  bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

  template <typename U>
  TensorT<U> cast() const {
    std::vector<U> v(static_cast<size_t>(numel()));
    const T* src = data();
    for (int64_t i = 0; i < numel(); ++i) v[static_cast<size_t>(i)] = static_cast<U>(src[i]);
    return TensorT<U>(shape_, std::move(v));
  }

 private:
  static int64_t checked_numel(const Shape& s) {
    for (int d : s)
      if (d <= 0) throw ShapeError("non-positive dim in shape " + shape_str(s));
    return shape_numel(s);
  }

  Shape shape_;
  std::shared_ptr<std::vector<T>> buf_;
};

using Tensor = TensorT<float>;

template <typename T>
void check_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* what) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
}

}  // namespace hart
