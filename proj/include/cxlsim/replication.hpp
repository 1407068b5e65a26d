#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "cxlsim/address.hpp"
#include "cxlsim/config.hpp"

namespace cxlsim {

// Group g = (line / line_bytes) mod num_cns; replicas g, g+1, ..., g+Nr-1.
std::vector<std::uint32_t> select_replicas(Addr line, std::uint32_t num_cns, std::uint32_t nr,
                                           std::uint32_t line_bytes = 64);

// Replica groups over a list of member CNs. Starts as all CNs; after a crash
// it is rebuilt over the survivors so the victim never appears again.
class ReplicaMap {
 public:
  ReplicaMap() = default;
  ReplicaMap(std::vector<std::uint32_t> members, std::uint32_t nr, std::uint32_t line_bytes);
  static ReplicaMap all(std::uint32_t num_cns, std::uint32_t nr, std::uint32_t line_bytes);

  std::vector<std::uint32_t> replicas(Addr line) const;
  // Position of `cn` inside the line's group, or -1 if not a member.
  int rank_of(Addr line, std::uint32_t cn) const;
  std::uint32_t nr() const { return nr_; }
  const std::vector<std::uint32_t>& members() const { return members_; }

 private:
  std::vector<std::uint32_t> members_;
  std::uint32_t nr_ = 0;
  std::uint32_t line_bytes_ = 64;
};

enum class ReplState : std::uint8_t { NotSent, ReplsSent, AcksComplete, Validated };
enum class CohState : std::uint8_t { NotStarted, InFlight, Complete };

std::string_view to_string(ReplState s);

enum class GateReason : std::uint8_t { None, Coherence, Replication, Both, WriteThrough };

struct GateResult {
  bool ready = false;
  GateReason reason = GateReason::None;
};

std::string_view to_string(GateReason r);

// Whether the SB head may commit. Local stores always may; WB needs the line
// owned; the replicating variants additionally need every REPL_ACK.
GateResult commit_gate(Protocol protocol, bool remote, ReplState repl, CohState coh);

// Per-destination logical timestamp counters of one CN. Each VAL to CN d
// carries the next value of counter d: 1, 2, 3, ...
class TimestampCounters {
 public:
  explicit TimestampCounters(std::uint32_t num_cns) : next_(num_cns, 0) {}
  std::uint64_t next(std::uint32_t dst) { return ++next_.at(dst); }
  std::uint64_t issued(std::uint32_t dst) const { return next_.at(dst); }

 private:
  std::vector<std::uint64_t> next_;
};

}  // namespace cxlsim
