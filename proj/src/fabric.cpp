#include "cxlsim/fabric.hpp"

#include <algorithm>

namespace cxlsim {

Fabric::Fabric(Engine& engine, const ClusterConfig& cfg, std::uint64_t seed)
    : engine_(engine),
      num_cns_(cfg.num_cns),
      num_mns_(cfg.num_mns),
      link_GBps_(cfg.link_GBps),
      one_way_(SimTime::from_ps(cfg.net_rtt_ns * 1000 / 2)),
      p_reorder_(cfg.p_reorder),
      rng_(seed, 0xfab),
      egress_free_(num_cns_ + num_mns_ + 1),
      ingress_free_(num_cns_ + num_mns_ + 1),
      last_to_(num_cns_ + num_mns_ + 1),
      viral_(num_cns_, false),
      cn_bytes_(num_cns_),
      cn_windows_(num_cns_) {}

SimTime Fabric::serialization(std::uint32_t bytes) const {
  // bytes / (GB/s) in ps: bytes * 1000 / GBps, rounded up.
  return SimTime::from_ps((static_cast<std::uint64_t>(bytes) * 1000 + link_GBps_ - 1) / link_GBps_);
}

void Fabric::account(const Message& msg) {
  ++stats_.sent;
  const auto k = static_cast<std::size_t>(msg.kind);
  ++stats_.sent_by_kind[k];
  stats_.bytes_by_kind[k] += msg.size_bytes;
  const auto cls = static_cast<std::size_t>(traffic_class(msg.kind));
  const std::size_t window = engine_.now().ps / kWindowPs;
  auto charge = [&](NodeId n) {
    if (!is_cn(n)) return;
    cn_bytes_[n][cls] += msg.size_bytes;
    auto& w = cn_windows_[n];
    if (w.size() <= window) w.resize(window + 1, ClassBytes{});
    w[window][cls] += msg.size_bytes;
  };
  charge(msg.src);
  if (msg.dst != msg.src) charge(msg.dst);
}

void Fabric::send(Message msg) {
  const NodeId limit = num_cns_ + num_mns_;
  if (msg.dst >= limit) throw UnknownDestination("no node with id " + std::to_string(msg.dst));
  if (msg.src > limit) throw UnknownDestination("no source node " + std::to_string(msg.src));
  account(msg);

  const SimTime now = engine_.now();
  const SimTime ser = serialization(msg.size_bytes);
  SimTime depart = now + ser;
  if (msg.src != switch_node()) {
    depart = std::max(now, egress_free_[msg.src]) + ser;
    egress_free_[msg.src] = depart;
  }
  const SimTime at_switch = depart + one_way_ - ser;
  SimTime at = std::max(at_switch + ser, ingress_free_[msg.dst] + ser);
  ingress_free_[msg.dst] = at;
  const SimTime earliest = now + one_way_ + ser;

  // Always draw so the stream does not depend on queue contents.
  const bool want_swap = rng_.chance(p_reorder_);
  auto& last = last_to_[msg.dst];
  if (want_swap && last && !last->swapped && last->at > now && last->at >= earliest &&
      last->at < at && engine_.cancel(last->handle)) {
    // Adjacent swap: the newcomer takes the earlier slot.
    const SimTime earlier = last->at;
    last->handle = schedule_delivery(last->msg, at);
    last->at = at;
    last->swapped = true;
    ++stats_.reordered;
    schedule_delivery(msg, earlier);
    return;
  }
  last = Pending{schedule_delivery(msg, at), at, earliest, msg, false};
}

EventHandle Fabric::schedule_delivery(const Message& msg, SimTime at) {
  return engine_.schedule(at, msg.dst, [this, msg] { deliver(msg); });
}

void Fabric::deliver(const Message& msg) {
  if (is_cn(msg.dst) && viral_[msg.dst]) {
    ++stats_.dropped_viral;
    return;
  }
  ++stats_.delivered;
  if (handler_) handler_(msg);
}

std::optional<std::uint32_t> Fabric::lowest_live_cn() const {
  for (std::uint32_t c = 0; c < num_cns_; ++c) {
    if (!viral_[c]) return c;
  }
  return std::nullopt;
}

void Fabric::detect_failure(std::uint32_t cn) {
  if (cn >= num_cns_) throw UnknownDestination("no CN " + std::to_string(cn));
  if (viral_[cn]) return;
  viral_[cn] = true;
  // The MSI goes out as its own event so simultaneous detections all land
  // before the CM is chosen.
  engine_.schedule_after(SimTime::zero(), switch_node(), [this, cn] {
    const auto cm = lowest_live_cn();
    if (!cm) return;
    Message m;
    m.kind = MsgKind::MSI;
    m.src = switch_node();
    m.dst = *cm;
    m.count = cn;
    ++stats_.msi_sent;
    send(m);
  });
}

}  // namespace cxlsim
