#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cxlsim/config.hpp"
#include "cxlsim/message.hpp"
#include "cxlsim/recovery.hpp"
#include "cxlsim/sim_time.hpp"

namespace cxlsim {

using ClassTotals = std::array<std::uint64_t, kNumTrafficClasses>;

struct DumpStats {
  std::uint64_t rounds = 0;
  std::uint64_t messages = 0;
  std::uint64_t entries = 0;
  std::uint64_t cleared = 0;
};

struct RunResult {
  bool completed = false;
  std::string error;
  std::string protocol;
  std::uint64_t seed = 0;
  std::uint32_t num_cns = 0;
  std::uint32_t num_mns = 0;
  std::uint32_t cores_per_cn = 0;
  std::uint32_t replication_factor = 0;

  SimTime sim_time{};  // last core done and drained
  std::uint64_t ops = 0;
  std::uint64_t loads = 0;
  std::uint64_t stores = 0;
  std::uint64_t remote_stores = 0;
  std::uint64_t commits = 0;
  std::uint64_t remote_commits = 0;
  std::uint64_t coalesced = 0;
  std::uint64_t repl_txns = 0;
  std::uint64_t repl_at_head = 0;
  std::uint64_t repl_reissued = 0;
  std::uint64_t repl_messages = 0;
  std::uint64_t val_messages = 0;
  std::uint64_t sb_full_stall_ps = 0;
  std::uint64_t deferred_invs = 0;
  std::uint64_t heads = 0;          // remote SB heads examined
  std::uint64_t heads_unowned = 0;  // of which still waiting for ownership

  ClassTotals bytes{};  // all traffic, by class
  std::vector<ClassTotals> cn_bytes;
  // Per CN, per 100 us window.
  std::vector<std::vector<ClassTotals>> cn_windows;
  std::vector<std::uint64_t> max_dram_log_bytes;  // per CN
  std::vector<std::uint64_t> max_sram_entries;    // per CN
  DumpStats dumps;

  std::uint64_t messages = 0;
  std::uint64_t reordered = 0;
  std::uint64_t dropped_viral = 0;
  std::uint64_t gating_violations = 0;
  std::uint64_t tso_violations = 0;
  std::uint64_t ts_inversions = 0;
  std::uint64_t backpressured = 0;

  Verdict verdict;
  std::vector<RecoveryReport> recoveries;

  double at_head_fraction() const {
    return repl_txns == 0 ? 0.0 : static_cast<double>(repl_at_head) / static_cast<double>(repl_txns);
  }
  // Bytes moved per CN per microsecond of runtime, by class.
  double class_rate(TrafficClass c) const;
  std::uint64_t max_window_bytes(TrafficClass c) const;
};

std::string to_json(const RunResult& r, int indent = 2);
// A few human-readable lines.
std::string summary(const RunResult& r);

}  // namespace cxlsim
