#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cxlsim/address.hpp"

namespace cxlsim {

// Set-associative cache with true LRU per set. Sets are allocated on first
// touch so an 8 MiB LLC per CN costs nothing until it fills.
template <class V>
class LruCache {
 public:
  struct Way {
    Addr line;
    V value;
    std::uint64_t stamp;
  };

  LruCache(std::uint64_t size_bytes, std::uint32_t assoc, std::uint32_t line_bytes)
      : assoc_(assoc),
        line_bytes_(line_bytes),
        num_sets_(std::max<std::uint64_t>(1, size_bytes / (static_cast<std::uint64_t>(assoc) * line_bytes))) {}

  std::uint32_t assoc() const { return assoc_; }
  std::uint64_t num_sets() const { return num_sets_; }
  std::size_t size() const { return size_; }

  V* find(Addr line) {
    auto* w = locate(line);
    return w ? &w->value : nullptr;
  }
  const V* find(Addr line) const {
    auto it = sets_.find(set_of(line));
    if (it == sets_.end()) return nullptr;
    for (const auto& w : it->second) {
      if (w.line == line) return &w.value;
    }
    return nullptr;
  }

  // Lookup that counts as a use for LRU.
  V* touch(Addr line) {
    auto* w = locate(line);
    if (!w) return nullptr;
    w->stamp = ++clock_;
    return &w->value;
  }

  // Inserts or overwrites; returns the evicted (line, value) if the set was full.
  std::optional<std::pair<Addr, V>> insert(Addr line, V value) {
    auto& set = sets_[set_of(line)];
    for (auto& w : set) {
      if (w.line == line) {
        w.value = std::move(value);
        w.stamp = ++clock_;
        return std::nullopt;
      }
    }
    std::optional<std::pair<Addr, V>> evicted;
    if (set.size() >= assoc_) {
      auto victim = set.begin();
      for (auto it = set.begin(); it != set.end(); ++it) {
        if (it->stamp < victim->stamp) victim = it;
      }
      evicted.emplace(victim->line, std::move(victim->value));
      set.erase(victim);
      --size_;
    }
    set.push_back(Way{line, std::move(value), ++clock_});
    ++size_;
    return evicted;
  }

  bool erase(Addr line) {
    auto it = sets_.find(set_of(line));
    if (it == sets_.end()) return false;
    auto& set = it->second;
    for (auto w = set.begin(); w != set.end(); ++w) {
      if (w->line == line) {
        set.erase(w);
        --size_;
        return true;
      }
    }
    return false;
  }

  void clear() {
    sets_.clear();
    size_ = 0;
  }

  // Visits every resident line; iteration order is unspecified.
  template <class F>
  void for_each(F&& f) const {
    for (const auto& [idx, set] : sets_) {
      for (const auto& w : set) f(w.line, w.value);
    }
  }

 private:
  std::uint64_t set_of(Addr line) const { return (line / line_bytes_) % num_sets_; }

  Way* locate(Addr line) {
    auto it = sets_.find(set_of(line));
    if (it == sets_.end()) return nullptr;
    for (auto& w : it->second) {
      if (w.line == line) return &w;
    }
    return nullptr;
  }

  std::uint32_t assoc_;
  std::uint32_t line_bytes_;
  std::uint64_t num_sets_;
  std::uint64_t clock_ = 0;
  std::size_t size_ = 0;
  std::unordered_map<std::uint64_t, std::vector<Way>> sets_;
};

}  // namespace cxlsim
