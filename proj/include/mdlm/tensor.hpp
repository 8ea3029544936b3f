// Copyright 2026 The mdlm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mdlm/common.hpp"

namespace mdlm {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Flat, insertion-ordered namespace of named 2-D tensors. Vectors (biases,
/// layernorm parameters) are stored as a single row.
template <typename T>
class TensorStore {
 public:
  using Entry = std::pair<std::string, Matrix<T>>;

  void add(std::string name, Matrix<T> value) {
    if (index_.contains(name)) throw Error("duplicate tensor name: " + name);
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(value));
  }

  bool contains(const std::string& name) const { return index_.contains(name); }

  Matrix<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &entries_[it->second].second;
  }
  const Matrix<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &entries_[it->second].second;
  }

  Matrix<T>& at(const std::string& name) {
    if (auto* m = find(name)) return *m;
    throw Error("unknown tensor: " + name);
  }
  const Matrix<T>& at(const std::string& name) const {
    if (const auto* m = find(name)) return *m;
    throw Error("unknown tensor: " + name);
  }

  void erase(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) return;
    entries_.erase(entries_.begin() + static_cast<std::ptrdiff_t>(it->second));
    reindex();
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  std::size_t element_count() const {
    std::size_t n = 0;
    for (const auto& [_, m] : entries_) n += static_cast<std::size_t>(m.size());
    return n;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, _] : entries_) out.push_back(name);
    return out;
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void set_zero() {
    for (auto& [_, m] : entries_) m.setZero();
  }

  /// Same names and shapes, all zeros.
  TensorStore zeros_like() const {
    TensorStore out;
    for (const auto& [name, m] : entries_) out.add(name, Matrix<T>::Zero(m.rows(), m.cols()));
    return out;
  }

  /// Elementwise += over matching names; `other` must be a subset of this.
  void accumulate(const TensorStore& other) {
    for (const auto& [name, m] : other) at(name) += m;
  }

  void scale(T factor) {
    for (auto& [_, m] : entries_) m *= factor;
  }

  bool all_finite() const {
    for (const auto& [_, m] : entries_) {
      if (!m.allFinite()) return false;
    }
    return true;
  }

  template <typename U>
  TensorStore<U> cast() const {
    TensorStore<U> out;
    for (const auto& [name, m] : entries_) out.add(name, m.template cast<U>());
    return out;
  }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < entries_.size(); ++i) index_.emplace(entries_[i].first, i);
  }

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
using ModelParameters = TensorStore<T>;

template <typename T>
using Gradients = TensorStore<T>;

}  // namespace mdlm
