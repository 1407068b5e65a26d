#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "cxlsim/config.hpp"
#include "cxlsim/engine.hpp"
#include "cxlsim/message.hpp"

namespace cxlsim {

inline constexpr std::uint32_t kSramEntryBytes = 24;
inline constexpr std::uint32_t kDramEntryBytes = 16;

struct LoggingUnitStats {
  std::uint64_t repls = 0;
  std::uint64_t entries_logged = 0;
  std::uint64_t vals = 0;
  std::uint64_t migrated = 0;
  std::uint64_t backpressured = 0;
  std::uint64_t ts_inversions = 0;
  std::uint64_t max_sram_entries = 0;
  std::uint64_t max_dram_bytes = 0;
  std::uint64_t dump_rounds = 0;
  std::uint64_t dump_messages = 0;
  std::uint64_t dumped_entries = 0;
  std::uint64_t cleared_entries = 0;
  std::uint64_t gc_dropped = 0;
  std::uint64_t stale_repls = 0;
  std::uint64_t invalid_skipped = 0;  // un-VALed entries ignored by traversals
  std::uint64_t traversals = 0;
};

// Per-CN hardware log. REPLs land as invalid SRAM entries; a VAL validates
// them, and validated groups move to the DRAM log in per-source timestamp
// order. Periodic dumps ship a partition of the DRAM log to the MNs.
class LoggingUnit {
 public:
  using Send = std::function<void(Message)>;
  // Returns the compressed byte count of a segment.
  using Compressor = std::function<std::uint64_t(const std::vector<LogRecord>&)>;
  // Unit that ships a line's entries this round.
  using Responsible = std::function<std::uint32_t(Addr line)>;

  LoggingUnit(std::uint32_t cn, Engine& engine, const ClusterConfig& cfg, Send send);

  std::uint32_t cn() const { return cn_; }
  std::uint32_t sram_capacity() const { return sram_capacity_; }
  std::uint32_t sram_used() const { return sram_used_; }
  std::size_t dram_entries() const { return dram_.size(); }
  std::uint64_t dram_bytes() const { return dram_.size() * kDramEntryBytes; }
  const std::vector<LogRecord>& dram_log() const { return dram_; }
  // VAL timestamps retained beside the DRAM log for the ordering audit only.
  const std::vector<std::uint64_t>& shadow_ts() const { return shadow_ts_; }
  std::uint32_t epoch() const { return epoch_; }
  const LoggingUnitStats& stats() const { return stats_; }
  bool crashed() const { return crashed_; }
  bool dump_in_progress() const { return round_.has_value(); }

  void set_compressor(Compressor c) { compressor_ = std::move(c); }
  std::uint64_t compressed_bytes(const std::vector<LogRecord>& seg) const;

  void on_repl(const Message& m);
  void on_val(const Message& m);
  void on_fetch(const Message& m);
  void on_clear_grant(const Message& m);

  // Ships the entries this unit is responsible for (all of them when `all`)
  // to their home MNs, then reports its marks to the coordinating MN. At
  // ClearGrant an entry below the watermark is dropped if this unit shipped
  // it or the responsible unit's mark shows that unit shipped it. Returns
  // false if a previous round is still open.
  bool start_dump_round(std::uint64_t round, const Responsible& responsible, bool all, NodeId coordinator);

  // Log traversal: one newest-to-oldest pass collecting, per requested line,
  // the owner's updates from its current tenure. Valid SRAM entries come
  // first. `cost` receives the scan time at the unit's clock.
  std::vector<FetchReply> traverse(const std::vector<FetchRequest>& reqs, SimTime* cost);

  // Drops invalid entries from older epochs and any queued stale REPLs.
  void recov_end(std::uint32_t new_epoch);
  void crash() { crashed_ = true; }

 private:
  struct GroupKey {
    std::uint32_t src;
    std::uint64_t txn;
    std::uint32_t epoch;
    auto operator<=>(const GroupKey&) const = default;
  };
  struct Group {
    std::vector<LogRecord> entries;
    bool valid = false;
    std::uint64_t ts = 0;
  };

  void accept(const Message& m);
  void drain_source(std::uint32_t src);
  void process_backlog();
  void note_sram();

  std::uint32_t cn_;
  Engine& engine_;
  const ClusterConfig& cfg_;
  Send send_;
  Compressor compressor_;
  std::uint32_t sram_capacity_;
  std::uint32_t sram_used_ = 0;
  SimTime sram_port_free_{};
  std::uint32_t epoch_ = 0;
  bool crashed_ = false;

  std::map<GroupKey, Group> groups_;
  // Validated groups waiting for earlier timestamps, per source.
  std::map<std::uint32_t, std::map<std::uint64_t, GroupKey>> waiting_;
  std::map<std::uint32_t, std::uint64_t> next_expected_;
  std::map<std::uint32_t, std::uint64_t> last_migrated_ts_;
  std::deque<Message> backlog_;

  std::vector<LogRecord> dram_;
  std::vector<std::uint64_t> shadow_ts_;

  struct Round {
    std::uint64_t id;
    std::size_t watermark;
    Responsible responsible;
    bool all;
  };
  std::optional<Round> round_;
  LoggingUnitStats stats_;
};

}  // namespace cxlsim
