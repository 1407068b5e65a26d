#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cxlsim/compute_node.hpp"
#include "cxlsim/config.hpp"
#include "cxlsim/directory.hpp"
#include "cxlsim/engine.hpp"
#include "cxlsim/fabric.hpp"
#include "cxlsim/metrics.hpp"
#include "cxlsim/recovery.hpp"
#include "cxlsim/replication.hpp"
#include "cxlsim/sync.hpp"
#include "cxlsim/trace.hpp"

namespace cxlsim {

struct ClusterOptions {
  std::uint64_t seed = 1;
  std::vector<CrashPlan> crashes;
  // Hard stop on simulated time; a run past it is reported as a failure.
  SimTime time_limit = SimTime::from_us(1000000);
};

// Owns every component of one simulation and runs it to completion.
class Cluster : private RecoveryHost {
 public:
  Cluster(const ClusterConfig& cfg, Trace trace, ClusterOptions opts = {});
  ~Cluster() override;
  Cluster(const Cluster&) = delete;
  Cluster& operator=(const Cluster&) = delete;

  // Runs until every surviving core has finished and drained, lets in-flight
  // traffic settle, verifies the final image, and returns the metrics.
  RunResult run();

  // Lower-level control used by tests.
  void start();
  bool finished() const;
  void settle();

  Engine& engine() { return engine_; }
  Fabric& fabric() { return *fabric_; }
  const ClusterConfig& config() const { return cfg_; }
  const Trace& trace() const { return trace_; }
  GoldenHistory& oracle() { return oracle_; }
  const GoldenHistory& oracle() const { return oracle_; }
  LockTable& locks() { return *locks_; }
  BarrierManager& barriers() { return *barriers_; }
  ComputeNode& cn(std::uint32_t i) { return *cns_.at(i); }
  const ComputeNode& cn(std::uint32_t i) const { return *cns_.at(i); }
  MemoryNode& mn(std::uint32_t i) { return *mns_.at(i); }
  const MemoryNode& mn(std::uint32_t i) const { return *mns_.at(i); }
  const RecoveryCoordinator& coordinator() const { return *coordinator_; }
  const std::vector<RecoveryReport>& recovery_reports() const { return coordinator_->reports(); }

  const ReplicaMap& replica_map() const { return maps_.back(); }
  std::uint32_t epoch() const { return static_cast<std::uint32_t>(maps_.size() - 1); }
  NodeId home_node(Addr line) const;
  const CoreTrace& trace_of(std::uint32_t global_core) const { return trace_.cores.at(global_core); }

  void send(Message m) { fabric_->send(std::move(m)); }
  void inject_crash(const std::vector<std::uint32_t>& victims);
  bool crashed(std::uint32_t cn) const { return crashed_.count(cn) > 0; }
  void on_remote_commit();
  void wake_core(std::uint32_t global_core);

  // Memory image: MN memory overlaid with lines held M/E by live CNs.
  std::map<Addr, std::uint64_t> image() const;
  // Directory residue of dead CNs and cluster-wide single-owner check.
  Verdict check_directory(const std::set<std::uint32_t>& dead) const;
  std::uint64_t gating_violations() const;
  std::uint64_t ts_inversions() const;

 private:
  // RecoveryHost
  Engine& host_engine() override { return engine_; }
  void host_send(Message m) override { send(std::move(m)); }
  std::vector<std::uint32_t> live_cns() const override;
  std::vector<std::uint32_t> pending_victims() const override;
  std::uint32_t num_mns() const override { return cfg_.num_mns; }
  NodeId mn_node(std::uint32_t i) const override { return cfg_.num_cns + i; }
  std::uint64_t recovery_messages_sent() const override;
  std::uint32_t prepare_recov_end(const std::vector<std::uint32_t>& victims, RecoveryReport& report) override;

  void deliver(const Message& m);
  void schedule_dump_timer();
  void dump_tick();
  void arm_crashes();
  RunResult collect(bool completed, const std::string& error) const;

  ClusterConfig cfg_;
  Trace trace_;
  ClusterOptions opts_;
  Engine engine_;
  std::unique_ptr<Fabric> fabric_;
  GoldenHistory oracle_;
  std::unique_ptr<LockTable> locks_;
  std::unique_ptr<BarrierManager> barriers_;
  std::vector<ReplicaMap> maps_;
  std::vector<std::unique_ptr<ComputeNode>> cns_;
  std::vector<std::unique_ptr<MemoryNode>> mns_;
  std::unique_ptr<RecoveryCoordinator> coordinator_;

  std::set<std::uint32_t> crashed_;
  std::set<std::uint32_t> recovered_;
  struct CrashRecord {
    std::vector<std::uint32_t> victims;
    SimTime at{};
    std::uint64_t owned = 0;
    std::uint64_t shared = 0;
  };
  std::vector<CrashRecord> crash_log_;
  std::vector<EventHandle> crash_events_;
  std::vector<bool> crash_fired_;
  std::uint64_t remote_commits_ = 0;
  std::uint64_t dump_round_ = 0;
  bool dump_all_next_ = false;
  bool finished_ = false;
  bool started_ = false;
  SimTime finish_time_{};
  Verdict recovery_checks_;
  MemoryNodeStats mn_base_;  // MN totals when the last recovery ended
  MemoryNodeStats mn_totals() const;
};

}  // namespace cxlsim
