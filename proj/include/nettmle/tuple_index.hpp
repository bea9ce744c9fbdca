#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <unordered_map>
#include <vector>

#include "nettmle/core.hpp"

namespace nettmle {

/// Interns fixed-width tuples of doubles (discretized summary values) and
/// hands out dense ids. Lookups do not allocate.
class TupleIndex {
 public:
  explicit TupleIndex(Index dims = 0) : dims_(dims) {}

  Index dims() const { return dims_; }
  Index size() const { return static_cast<Index>(hashes_.size()); }

  Index find(std::span<const double> row) const {
    const std::uint64_t h = hash(row);
    auto it = head_.find(h);
    if (it == head_.end()) return -1;
    for (Index id = it->second; id >= 0; id = next_[id])
      if (equal(id, row)) return id;
    return -1;
  }

  /// Returns the existing id or assigns a new one.
  Index insert(std::span<const double> row) {
    const std::uint64_t h = hash(row);
    auto [it, inserted] = head_.try_emplace(h, -1);
    for (Index id = it->second; id >= 0; id = next_[id])
      if (equal(id, row)) return id;
    const Index id = size();
    for (double v : row) rows_.push_back(normalize(v));
    hashes_.push_back(h);
    next_.push_back(it->second);
    it->second = id;
    return id;
  }

  std::span<const double> row(Index id) const {
    return {rows_.data() + id * dims_, static_cast<std::size_t>(dims_)};
  }

 private:
  static double normalize(double v) { return v == 0.0 ? 0.0 : v; }

  static std::uint64_t hash(std::span<const double> row) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (double v : row) {
      v = normalize(v);
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      h ^= bits + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  bool equal(Index id, std::span<const double> row) const {
    const double* stored = rows_.data() + id * dims_;
    for (Index k = 0; k < dims_; ++k)
      if (stored[k] != normalize(row[k])) return false;
    return true;
  }

  Index dims_;
  std::vector<double> rows_;
  std::vector<std::uint64_t> hashes_;
  std::vector<Index> next_;
  std::unordered_map<std::uint64_t, Index> head_;
};

inline std::span<const double> row_span(const Table& t, Index i) {
  return {t.data() + i * t.cols(), static_cast<std::size_t>(t.cols())};
}

}  // namespace nettmle
