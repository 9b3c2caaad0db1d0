// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <vector>

namespace opsched {

/// Strongly typed dense identifiers. Values are 0..N-1 within one graph.
enum class TensorId : std::uint32_t {};
enum class OperatorId : std::uint32_t {};

constexpr std::size_t index(TensorId id) noexcept {
  return static_cast<std::size_t>(id);
}
constexpr std::size_t index(OperatorId id) noexcept {
  return static_cast<std::size_t>(id);
}

/// A set of dense ids stored as a bitmask.
///
/// Equality and hashing only look at members: trailing zero words are
/// ignored, so two sets built over different universes still compare equal
/// when they hold the same ids. This makes the type usable as a memo key.
template <class Id> class IdSet {
public:
  IdSet() = default;
  explicit IdSet(std::size_t universe) : words_((universe + 63) / 64, 0) {}
  IdSet(std::size_t universe, std::initializer_list<Id> ids) : IdSet(universe) {
    for (Id id : ids)
      insert(id);
  }

  void insert(Id id) {
    const std::size_t i = index(id);
    if (i / 64 >= words_.size())
      words_.resize(i / 64 + 1, 0);
    words_[i / 64] |= std::uint64_t{1} << (i % 64);
  }

  void erase(Id id) {
    const std::size_t i = index(id);
    if (i / 64 < words_.size())
      words_[i / 64] &= ~(std::uint64_t{1} << (i % 64));
  }

  bool contains(Id id) const {
    const std::size_t i = index(id);
    return i / 64 < words_.size() &&
           ((words_[i / 64] >> (i % 64)) & std::uint64_t{1}) != 0;
  }

  bool empty() const {
    return std::all_of(words_.begin(), words_.end(),
                       [](std::uint64_t w) { return w == 0; });
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (std::uint64_t w : words_)
      n += static_cast<std::size_t>(std::popcount(w));
    return n;
  }

  IdSet &operator|=(const IdSet &other) {
    if (other.words_.size() > words_.size())
      words_.resize(other.words_.size(), 0);
    for (std::size_t i = 0; i < other.words_.size(); ++i)
      words_[i] |= other.words_[i];
    return *this;
  }

  bool intersects(const IdSet &other) const {
    const std::size_t n = std::min(words_.size(), other.words_.size());
    for (std::size_t i = 0; i < n; ++i)
      if ((words_[i] & other.words_[i]) != 0)
        return true;
    return false;
  }

  /// Members in increasing id order.
  std::vector<Id> members() const {
    std::vector<Id> out;
    for_each([&](Id id) { out.push_back(id); });
    return out;
  }

  template <class F> void for_each(F &&f) const {
    for (std::size_t w = 0; w < words_.size(); ++w) {
      std::uint64_t bits = words_[w];
      while (bits != 0) {
        const int bit = std::countr_zero(bits);
        f(static_cast<Id>(w * 64 + static_cast<std::size_t>(bit)));
        bits &= bits - 1;
      }
    }
  }

  friend bool operator==(const IdSet &a, const IdSet &b) {
    const std::size_t n = std::max(a.words_.size(), b.words_.size());
    for (std::size_t i = 0; i < n; ++i)
      if (a.word(i) != b.word(i))
        return false;
    return true;
  }

  std::size_t hash() const noexcept {
    std::size_t last = words_.size();
    while (last > 0 && words_[last - 1] == 0)
      --last;
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < last; ++i) {
      h ^= words_[i];
      h *= 0x100000001b3ULL;
      h ^= h >> 29;
    }
    return static_cast<std::size_t>(h);
  }

private:
  std::uint64_t word(std::size_t i) const {
    return i < words_.size() ? words_[i] : 0;
  }

  std::vector<std::uint64_t> words_;
};

using TensorSet = IdSet<TensorId>;
using OperatorSet = IdSet<OperatorId>;

} // namespace opsched

template <class Id> struct std::hash<opsched::IdSet<Id>> {
  std::size_t operator()(const opsched::IdSet<Id> &s) const noexcept {
    return s.hash();
  }
};
