#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "cxlsim/config.hpp"
#include "cxlsim/engine.hpp"
#include "cxlsim/message.hpp"

namespace cxlsim {

enum class DirState : std::uint8_t { Uncached, Shared, Owned };

struct DirectoryEntry {
  bool owned = false;
  std::uint32_t owner = 0;
  std::uint64_t owner_seq = 0;
  std::map<std::uint32_t, std::uint64_t> sharers;  // CN -> grant it holds
  std::uint64_t grants = 0;
  LineData data{};

  DirState state() const {
    if (owned) return DirState::Owned;
    return sharers.empty() ? DirState::Uncached : DirState::Shared;
  }
};

struct PersistedSegment {
  std::uint32_t unit = 0;
  std::uint64_t round = 0;
  std::vector<LogRecord> records;  // oldest first
};

struct RepairInfo {
  std::uint32_t owner = 0;
  std::uint64_t grant = 0;
  std::uint8_t from_logs = 0;       // word mask repaired from Logging Units
  std::uint8_t from_persisted = 0;  // word mask repaired from dumped segments
  std::uint8_t divergent = 0;       // words whose replica logs disagreed
};

struct MemoryNodeStats {
  std::uint64_t requests = 0;
  std::uint64_t invalidations = 0;
  std::uint64_t stale_writebacks = 0;
  std::uint64_t wt_stores = 0;
  std::uint64_t max_queue = 0;
  std::uint64_t held_for_crashed_owner = 0;
  std::uint64_t persisted_segments = 0;
  std::uint64_t persisted_entries = 0;
  std::uint64_t repaired_lines = 0;
  std::uint64_t repaired_words_logs = 0;
  std::uint64_t repaired_words_persisted = 0;
  std::uint64_t divergent_words = 0;
  std::uint64_t fetches_sent = 0;
  std::uint64_t sharer_bits_removed = 0;
};

struct MemoryNodeHooks {
  std::function<bool(std::uint32_t cn)> is_dead;
  // Replica group of a line under the map in force when the crash happened.
  std::function<std::vector<std::uint32_t>(Addr line)> replicas;
  std::function<void(std::uint32_t core, Addr line, std::uint8_t mask, const LineData& values)> on_wt_apply;
  std::function<void(Addr line, const LineData& after, const RepairInfo& info)> on_repair;
};

// Memory node: full-map directory over its interleaved share of remote lines,
// the backing memory image, the persisted log region, and (on MN0) the dump
// round coordinator.
class MemoryNode {
 public:
  using Send = std::function<void(Message)>;

  MemoryNode(std::uint32_t index, Engine& engine, const ClusterConfig& cfg, Send send, MemoryNodeHooks hooks);

  std::uint32_t index() const { return index_; }
  NodeId node() const { return cfg_.num_cns + index_; }

  void handle(const Message& m);

  // Persisted log region.
  void apply_log_dump(std::uint32_t unit, std::uint64_t round, std::vector<LogRecord> records);
  // Entries for `line`, newest segment first, newest entry first.
  std::vector<LogRecord> query_persisted(Addr line) const;
  const std::vector<PersistedSegment>& persisted() const { return persisted_; }

  // Dump round coordination (meaningful on MN0 only).
  void begin_dump_round(std::uint64_t round, const std::vector<std::uint32_t>& units);
  bool dump_round_open() const { return dump_.has_value(); }

  // Line repair, driven by InitRecov; exposed for direct testing.
  void recover(const std::vector<std::uint32_t>& victims, NodeId reply_to, std::uint64_t recovery_id);
  bool recovery_pending() const { return recovery_.has_value(); }

  const std::map<Addr, DirectoryEntry>& entries() const { return entries_; }
  const DirectoryEntry* entry(Addr line) const;
  LineData memory(Addr line) const;
  std::size_t busy_lines() const;
  const MemoryNodeStats& stats() const { return stats_; }

  // Test helper: install a directory state without running a transaction.
  DirectoryEntry& poke(Addr line) { return entries_[line]; }

 private:
  struct Txn {
    std::uint64_t id = 0;
    Message req;
    std::set<std::uint32_t> waiting;
    bool need_owner_data = false;
    bool downgrade = false;
    bool finishing = false;
  };
  struct Line {
    std::optional<Txn> busy;
    std::deque<Message> queue;
  };
  struct DumpRound {
    std::uint64_t id = 0;
    std::set<std::uint32_t> expected;
    std::set<std::uint32_t> done;
    std::uint64_t segments_expected = 0;
    std::uint64_t notices = 0;
    std::map<std::uint32_t, std::vector<std::uint64_t>> marks;  // per unit
  };
  struct Recovery {
    std::uint64_t id = 0;
    NodeId reply_to = 0;
    std::set<std::uint32_t> victims;
    std::vector<Addr> lines;
    std::map<Addr, std::pair<std::uint32_t, std::uint64_t>> owner_of;
    std::uint32_t outstanding = 0;
    // (line, word) -> (replica rank, versions newest first)
    std::map<std::pair<Addr, std::uint8_t>, std::vector<std::pair<std::uint32_t, std::vector<Version>>>> replies;
    std::map<std::uint32_t, std::uint32_t> rank_of_unit;
  };

  void enqueue(const Message& m);
  void start_next(Addr line);
  void start(Addr line, const Message& req);
  void maybe_finish(Addr line);
  void finish(Addr line);
  void on_inv_ack(const Message& m);
  void on_wb_evict(const Message& m);
  void on_log_dump(const Message& m);
  void on_dump_done(const Message& m);
  void on_dump_notice(const Message& m);
  void check_dump_round();
  void on_fetch_resp(const Message& m);
  void complete_recovery();
  void send_inv(Addr line, std::uint32_t cn, std::uint64_t seq, std::uint64_t txn, bool downgrade);
  bool dead(std::uint32_t cn) const { return hooks_.is_dead && hooks_.is_dead(cn); }

  std::uint32_t index_;
  Engine& engine_;
  const ClusterConfig& cfg_;
  Send send_;
  MemoryNodeHooks hooks_;
  std::map<Addr, DirectoryEntry> entries_;
  std::map<Addr, Line> lines_;
  std::uint64_t next_txn_ = 1;
  std::vector<PersistedSegment> persisted_;
  std::optional<DumpRound> dump_;
  std::optional<Recovery> recovery_;
  MemoryNodeStats stats_;
};

}  // namespace cxlsim
