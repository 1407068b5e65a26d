#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cxlsim/trace.hpp"

namespace cxlsim::oracle {

struct Race {
  Addr word = 0;
  std::uint32_t first_core = 0;
  std::uint32_t second_core = 0;
  bool write_write = false;
};

struct TraceAnalysis {
  std::vector<Race> races;  // first few only
  std::uint64_t race_count = 0;
  // Final remote image of one sequentially consistent execution. For a
  // race-free trace where each word's writers are ordered independently of
  // lock acquisition order, every TSO execution ends in this image.
  std::map<Addr, std::uint64_t> final_image;
  // Words written by more than one core with at least one pair ordered only
  // through a lock; their final value depends on acquisition order.
  std::uint64_t lock_order_dependent = 0;
  bool deadlocked = false;
};

// Replays the trace round-robin under lock and barrier semantics with vector
// clocks and reports conflicting remote accesses not ordered by
// happens-before. Values follow the simulator's store encoding.
TraceAnalysis analyze_trace(const Trace& trace, std::uint32_t cores_per_cn, std::uint32_t word_bytes = 8);

// Word map with zero-valued words dropped, for comparing images whose line
// sets may differ by lines that were only read.
std::map<Addr, std::uint64_t> nonzero(const std::map<Addr, std::uint64_t>& image);

}  // namespace cxlsim::oracle
