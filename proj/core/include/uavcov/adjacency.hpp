#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "uavcov/errors.hpp"

namespace uavcov {

/// One-hop communication links among N agents. Symmetric, unit diagonal.
class AdjacencyMatrix {
 public:
  AdjacencyMatrix() = default;

  /// Identity matrix (every node linked only to itself).
  explicit AdjacencyMatrix(std::size_t n) : n_(n), a_(n * n, 0) {
    for (std::size_t i = 0; i < n; ++i) a_[i * n + i] = 1;
  }

  static AdjacencyMatrix complete(std::size_t n) {
    AdjacencyMatrix m(n);
    for (auto& v : m.a_) v = 1;
    return m;
  }

  std::size_t size() const { return n_; }

  bool linked(std::size_t i, std::size_t j) const {
    require(i < n_ && j < n_, "adjacency index out of range");
    return a_[i * n_ + j] != 0;
  }
  int at(std::size_t i, std::size_t j) const { return linked(i, j) ? 1 : 0; }

  /// Sets both (i, j) and (j, i). Diagonal entries are fixed at 1.
  void link(std::size_t i, std::size_t j, bool on = true) {
    require(i < n_ && j < n_, "adjacency index out of range");
    if (i == j) return;
    a_[i * n_ + j] = on ? 1 : 0;
    a_[j * n_ + i] = on ? 1 : 0;
  }

  std::size_t degree(std::size_t i) const {
    std::size_t d = 0;
    for (std::size_t j = 0; j < n_; ++j) d += a_[i * n_ + j];
    return d;
  }

  bool is_symmetric() const {
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = i + 1; j < n_; ++j)
        if (a_[i * n_ + j] != a_[j * n_ + i]) return false;
    return true;
  }

  bool has_unit_diagonal() const {
    for (std::size_t i = 0; i < n_; ++i)
      if (a_[i * n_ + i] != 1) return false;
    return true;
  }

  friend bool operator==(const AdjacencyMatrix&, const AdjacencyMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> a_;
};

/// True iff a breadth-first search from node 0 reaches every node.
bool is_connected(const AdjacencyMatrix& adj);

}  // namespace uavcov
