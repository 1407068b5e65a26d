#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cxlsim/cache.hpp"
#include "cxlsim/logging_unit.hpp"
#include "cxlsim/message.hpp"
#include "cxlsim/replication.hpp"
#include "cxlsim/trace.hpp"

namespace cxlsim {

class Cluster;

enum class Mesi : std::uint8_t { I, S, E, M };

struct LlcLine {
  Mesi state = Mesi::I;
  bool remote = false;
  LineData data{};
};

struct StoreBufferSlot {
  std::uint64_t id = 0;
  Addr line = 0;
  bool remote = false;
  std::uint8_t word_mask = 0;
  LineData word_values{};
  ReplState repl_state = ReplState::NotSent;
  std::uint64_t txn = 0;
  std::uint32_t epoch = 0;
  std::vector<std::uint32_t> replicas;
  std::uint64_t acked = 0;  // bit per CN
  bool at_head_repl = false;
  bool credits_held = false;
  bool wt_sent = false;
  bool reached_head = false;
  SimTime enqueue_time{};
};

enum class CoreWait : std::uint8_t { None, Busy, Load, SbFull, Drain, SyncLine, Lock, Barrier, Paused, Done };

struct CoreStats {
  std::uint64_t ops = 0;
  std::uint64_t loads = 0;
  std::uint64_t remote_loads = 0;
  std::uint64_t stores = 0;
  std::uint64_t remote_stores = 0;
  std::uint64_t coalesced = 0;
  std::uint64_t commits = 0;
  std::uint64_t remote_commits = 0;
  std::uint64_t load_latency_ps = 0;
  std::uint64_t sb_full_stall_ps = 0;
  std::uint64_t sync_wait_ps = 0;
  std::uint64_t max_sb = 0;
  SimTime done_time{};
};

struct NodeStats {
  std::uint64_t repl_txns = 0;
  std::uint64_t repl_at_head = 0;
  std::uint64_t repl_reissued = 0;
  std::uint64_t val_fanout = 0;
  std::uint64_t gating_violations = 0;
  std::uint64_t evictions = 0;
  std::uint64_t writebacks = 0;
  std::uint64_t deferred_invs = 0;
  std::uint64_t wt_stores = 0;
  std::uint64_t heads_unowned = 0;  // remote heads that arrived before their RdX_ACK
  std::uint64_t heads = 0;
};

// A compute node: cores replaying traces through private L1s (tags only), a
// shared LLC holding MESI state and data, per-core TSO store buffers, the
// CN-side coherence agent, and the node's Logging Unit.
class ComputeNode {
 public:
  ComputeNode(std::uint32_t cn, Cluster& cluster);

  std::uint32_t id() const { return cn_; }
  void start();
  void handle(const Message& m);

  void crash();
  bool crashed() const { return crashed_; }
  bool paused() const { return paused_; }
  void pause();
  void resume(std::uint32_t epoch);
  void wake(std::uint32_t global_core);
  void barrier_release(std::uint32_t global_core);

  bool done() const;
  std::uint32_t epoch() const { return epoch_; }
  LoggingUnit& lu() { return *lu_; }
  const LoggingUnit& lu() const { return *lu_; }

  const LlcLine* llc_line(Addr line) const { return llc_.find(line); }
  bool owns(Addr line) const;
  std::uint64_t received_grant(Addr line) const;
  template <class F>
  void for_each_llc_line(F&& f) const {
    llc_.for_each(f);
  }

  std::size_t sb_occupancy(std::uint32_t local_core) const { return cores_[local_core].sb.size(); }
  const std::deque<StoreBufferSlot>& sb(std::uint32_t local_core) const { return cores_[local_core].sb; }
  const CoreStats& core_stats(std::uint32_t local_core) const { return cores_[local_core].stats; }
  CoreWait core_wait(std::uint32_t local_core) const { return cores_[local_core].wait; }
  const NodeStats& stats() const { return stats_; }
  std::uint32_t credits(std::uint32_t lu) const { return credits_.at(lu); }
  std::uint64_t ts_issued(std::uint32_t dst) const { return ts_.issued(dst); }
  std::vector<std::string> blocked() const;

 private:
  struct Core {
    std::uint32_t gid = 0;
    std::uint32_t local = 0;
    const CoreTrace* trace = nullptr;
    std::size_t pc = 0;
    CoreWait wait = CoreWait::None;
    SimTime wait_since{};
    bool resume_pending = false;
    std::deque<StoreBufferSlot> sb;
    std::uint64_t next_slot = 1;
    SimTime drain_free{};
    bool drain_event = false;
    bool barrier_arrived = false;
    bool barrier_released = false;
    LruCache<char> l1;
    CoreStats stats;
    Core(std::uint64_t l1_bytes, std::uint32_t assoc, std::uint32_t line) : l1(l1_bytes, assoc, line) {}
  };
  struct Mshr {
    bool exclusive = false;
    bool want_exclusive = false;
  };

  SimTime cyc(std::uint64_t n) const;
  void schedule_step(Core& c, SimTime delay);
  void step(Core& c);
  void finish_op(Core& c, SimTime latency);
  void do_load(Core& c, const TraceOp& op);
  void do_store(Core& c, const TraceOp& op);
  void do_sync(Core& c, const TraceOp& op);
  void block(Core& c, CoreWait why);

  void request(Addr line, bool exclusive);
  void install(Addr line, LlcLine l);
  void drop_from_l1s(Addr line);
  void on_grant(const Message& m);
  void on_inv(const Message& m);
  void process_inv(const Message& m);

  void maybe_issue_proactive(Core& c, StoreBufferSlot& s);
  void issue_repl(Core& c, StoreBufferSlot& s, bool at_head);
  void on_repl_ack(const Message& m);
  void on_wt_ack(const Message& m);
  void try_drain(Core& c);
  void drain_all();
  void commit_head(Core& c);
  void after_slot_freed(Core& c);

  std::uint32_t cn_;
  Cluster& cl_;
  const ClusterConfig& cfg_;
  std::unique_ptr<LoggingUnit> lu_;
  std::vector<Core> cores_;
  LruCache<LlcLine> llc_;
  std::map<Addr, Mshr> mshr_;
  std::map<Addr, std::vector<std::uint32_t>> line_waiters_;  // local core ids
  std::map<Addr, std::uint64_t> grant_seq_;
  std::map<Addr, std::vector<Message>> deferred_inv_;
  TimestampCounters ts_;
  std::vector<std::uint32_t> credits_;
  std::uint32_t credit_init_ = 0;
  std::uint64_t next_txn_ = 1;
  std::uint64_t commit_seq_ = 0;
  std::uint32_t epoch_ = 0;
  bool crashed_ = false;
  bool paused_ = false;
  NodeStats stats_;
};

}  // namespace cxlsim
