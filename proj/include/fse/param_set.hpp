#pragma once

#include <string>
#include <vector>

#include "fse/error.hpp"
#include "fse/tensor.hpp"

namespace fse {

// Named ordered collection of parameter tensors. Flattening order is the
// insertion order and is what defines the Fisher-score coordinate system, so
// it must stay stable across save/load.
template <typename T>
class ParamSet {
 public:
  void add(std::string name, Tensor<T> t) {
    for (const auto& e : entries_)
      if (e.name == name) fail("param_set: duplicate parameter name '", name, "'");
    entries_.push_back({std::move(name), std::move(t)});
  }

  size_t count() const { return entries_.size(); }

  const std::string& name(size_t i) const { return entries_.at(i).name; }
  Tensor<T>& tensor(size_t i) { return entries_.at(i).tensor; }
  const Tensor<T>& tensor(size_t i) const { return entries_.at(i).tensor; }

  Tensor<T>& get(const std::string& name) {
    for (auto& e : entries_)
      if (e.name == name) return e.tensor;
    fail("param_set: no parameter named '", name, "'");
  }
  const Tensor<T>& get(const std::string& name) const {
    return const_cast<ParamSet*>(this)->get(name);
  }

  int64_t total_size() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.tensor.size();
    return n;
  }

  std::vector<T> flatten() const {
    std::vector<T> out;
    out.reserve(static_cast<size_t>(total_size()));
    for (const auto& e : entries_)
      out.insert(out.end(), e.tensor.vec().begin(), e.tensor.vec().end());
    return out;
  }

  void unflatten(const std::vector<T>& flat) {
    require(static_cast<int64_t>(flat.size()) == total_size(), "param_set: flat vector length ",
            flat.size(), " != total parameter count ", total_size());
    size_t off = 0;
    for (auto& e : entries_) {
      std::copy(flat.begin() + off, flat.begin() + off + e.tensor.vec().size(),
                e.tensor.vec().begin());
      off += e.tensor.vec().size();
    }
  }

  // offset of a named block in the flattened vector
  int64_t offset_of(size_t i) const {
    require(i < entries_.size(), "param_set: block index ", i, " out of range");
    int64_t off = 0;
    for (size_t k = 0; k < i; ++k) off += entries_[k].tensor.size();
    return off;
  }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& e : entries_) {
      std::vector<U> data(e.tensor.vec().begin(), e.tensor.vec().end());
      out.add(e.name, Tensor<U>::from_data(e.tensor.shape(), std::move(data)));
    }
    return out;
  }

 private:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
  };
  std::vector<Entry> entries_;
};

}  // namespace fse
