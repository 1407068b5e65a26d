#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "cxlsim/config.hpp"
#include "cxlsim/engine.hpp"
#include "cxlsim/message.hpp"
#include "cxlsim/rng.hpp"

namespace cxlsim {

using ClassBytes = std::array<std::uint64_t, kNumTrafficClasses>;

struct FabricStats {
  std::uint64_t sent = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped_viral = 0;
  std::uint64_t reordered = 0;
  std::uint64_t msi_sent = 0;
  std::array<std::uint64_t, kNumMsgKinds> sent_by_kind{};
  std::array<std::uint64_t, kNumMsgKinds> bytes_by_kind{};
};

// Single switch with one full-duplex link per node. A message serializes on
// the sender's egress link, crosses the switch in RTT/2, then queues on the
// receiver's ingress link (cut-through: serialization is paid once when the
// ingress link is idle).
class Fabric {
 public:
  using Handler = std::function<void(const Message&)>;

  static constexpr std::uint64_t kWindowPs = 100ULL * 1000 * 1000;  // 100 us

  Fabric(Engine& engine, const ClusterConfig& cfg, std::uint64_t seed);

  void set_handler(Handler h) { handler_ = std::move(h); }

  std::uint32_t num_cns() const { return num_cns_; }
  std::uint32_t num_mns() const { return num_mns_; }
  NodeId mn_node(std::uint32_t mn) const { return num_cns_ + mn; }
  NodeId switch_node() const { return num_cns_ + num_mns_; }
  bool is_cn(NodeId n) const { return n < num_cns_; }
  bool is_mn(NodeId n) const { return n >= num_cns_ && n < num_cns_ + num_mns_; }

  SimTime serialization(std::uint32_t bytes) const;
  SimTime one_way() const { return one_way_; }
  SimTime min_latency(std::uint32_t bytes) const { return one_way_ + serialization(bytes); }

  // Throws UnknownDestination for ids outside the topology.
  void send(Message msg);

  // Sets the CN's Viral_Status bit and emits one MSI to the Configuration
  // Manager (core 0 of the lowest-numbered CN whose bit is clear). Idempotent.
  void detect_failure(std::uint32_t cn);
  bool viral(std::uint32_t cn) const { return viral_.at(cn); }
  std::optional<std::uint32_t> lowest_live_cn() const;

  const FabricStats& stats() const { return stats_; }
  // Bytes sent or received by each CN, by traffic class.
  const std::vector<ClassBytes>& cn_bytes() const { return cn_bytes_; }
  // Per CN, per 100 us window of send time.
  const std::vector<std::vector<ClassBytes>>& cn_windows() const { return cn_windows_; }
  std::uint64_t in_flight() const { return stats_.sent - stats_.delivered - stats_.dropped_viral; }

 private:
  struct Pending {
    EventHandle handle;
    SimTime at;
    SimTime earliest;
    Message msg;
    bool swapped = false;
  };

  EventHandle schedule_delivery(const Message& msg, SimTime at);
  void deliver(const Message& msg);
  void account(const Message& msg);

  Engine& engine_;
  std::uint32_t num_cns_;
  std::uint32_t num_mns_;
  std::uint64_t link_GBps_;
  SimTime one_way_;
  double p_reorder_;
  SeededRng rng_;
  Handler handler_;
  std::vector<SimTime> egress_free_;
  std::vector<SimTime> ingress_free_;
  std::vector<std::optional<Pending>> last_to_;
  std::vector<bool> viral_;
  FabricStats stats_;
  std::vector<ClassBytes> cn_bytes_;
  std::vector<std::vector<ClassBytes>> cn_windows_;
};

}  // namespace cxlsim
