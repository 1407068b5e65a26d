#pragma once

#include <cstdint>

namespace cxlsim {

using Addr = std::uint64_t;

// Bit 47 set marks the MN-backed shared range; clear means CN-local memory.
inline constexpr Addr kRemoteBit = 1ULL << 47;
// Synchronization variables live in dedicated remote lines, disjoint from data.
inline constexpr Addr kLockLineBase = kRemoteBit | (1ULL << 44);
inline constexpr Addr kBarrierLineBase = kRemoteBit | (1ULL << 45);
// Lock-protected data regions (one small region per lock id).
inline constexpr Addr kLockDataBase = kRemoteBit | (1ULL << 43);

constexpr bool is_remote(Addr a) { return (a & kRemoteBit) != 0; }

constexpr Addr line_of(Addr a, std::uint32_t line_bytes) { return a - a % line_bytes; }

constexpr std::uint32_t word_of(Addr a, std::uint32_t line_bytes, std::uint32_t word_bytes) {
  return static_cast<std::uint32_t>((a % line_bytes) / word_bytes);
}

constexpr std::uint64_t line_index(Addr line, std::uint32_t line_bytes) { return line / line_bytes; }

constexpr std::uint32_t home_mn(Addr line, std::uint32_t line_bytes, std::uint32_t num_mns) {
  return static_cast<std::uint32_t>(line_index(line, line_bytes) % num_mns);
}

constexpr Addr lock_line(std::uint32_t id, std::uint32_t line_bytes) {
  return kLockLineBase + static_cast<Addr>(id) * line_bytes;
}

constexpr Addr barrier_line(std::uint32_t id, std::uint32_t line_bytes) {
  return kBarrierLineBase + static_cast<Addr>(id) * line_bytes;
}

constexpr bool is_sync_line(Addr line) {
  return is_remote(line) && (line & ((1ULL << 44) | (1ULL << 45))) != 0;
}

// Value written by the store at trace position `op_index` of global core
// `core`. Unique per store so the oracle can tell every update apart.
constexpr std::uint64_t store_value(std::uint32_t core, std::uint64_t op_index) {
  return (static_cast<std::uint64_t>(core + 1) << 32) | (op_index + 1);
}

}  // namespace cxlsim
