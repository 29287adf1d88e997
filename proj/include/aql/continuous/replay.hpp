#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "aql/approx.hpp"
#include "aql/rng.hpp"

namespace aql {

struct Transition {
  Vector s;
  Vector a;
  double r = 0.0;
  Vector s_next;
  bool done = false;  ///< terminal; truncation is stored as not done
};

/// Column-stacked minibatch.
struct Batch {
  Matrix s, a, s_next;
  Vector r;
  Vector done;  ///< 1.0 where terminal
  std::size_t size() const noexcept { return static_cast<std::size_t>(r.size()); }
};

/// Fixed-capacity FIFO ring of transitions with uniform sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
    items_.reserve(std::min<std::size_t>(capacity, 1u << 16));
  }

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return items_.size(); }
  bool empty() const noexcept { return items_.empty(); }

  void add(Transition t) {
    if (!std::isfinite(t.r)) throw std::invalid_argument("ReplayBuffer::add: non-finite reward");
    if (items_.size() < capacity_) {
      items_.push_back(std::move(t));
    } else {
      items_[head_] = std::move(t);
      head_ = (head_ + 1) % capacity_;
    }
  }

  /// i-th oldest stored transition.
  const Transition& oldest(std::size_t i) const {
    if (i >= items_.size()) throw std::out_of_range("ReplayBuffer::oldest: index out of range");
    return items_[(head_ + i) % items_.size()];
  }

  /// Slot indices drawn uniformly with replacement.
  std::vector<std::size_t> sample_indices(std::size_t n, RandomStream& rng) const {
    if (items_.empty()) throw std::logic_error("ReplayBuffer::sample: buffer is empty");
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = static_cast<std::size_t>(rng.index(items_.size()));
    return idx;
  }

  const Transition& slot(std::size_t i) const { return items_.at(i); }

  Batch gather(const std::vector<std::size_t>& idx) const {
    if (idx.empty()) throw std::invalid_argument("ReplayBuffer::gather: empty index list");
    const auto& first = items_.at(idx.front());
    const auto n = static_cast<Eigen::Index>(idx.size());
    Batch b;
    b.s.resize(first.s.size(), n);
    b.a.resize(first.a.size(), n);
    b.s_next.resize(first.s_next.size(), n);
    b.r.resize(n);
    b.done.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& t = items_.at(idx[static_cast<std::size_t>(j)]);
      b.s.col(j) = t.s;
      b.a.col(j) = t.a;
      b.s_next.col(j) = t.s_next;
      b.r(j) = t.r;
      b.done(j) = t.done ? 1.0 : 0.0;
    }
    return b;
  }

  Batch sample(std::size_t n, RandomStream& rng) const { return gather(sample_indices(n, rng)); }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Transition> items_;
};

}  // namespace aql
