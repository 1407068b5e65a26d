#include "cxlsim/replication.hpp"

#include <algorithm>

namespace cxlsim {

std::vector<std::uint32_t> select_replicas(Addr line, std::uint32_t num_cns, std::uint32_t nr,
                                           std::uint32_t line_bytes) {
  std::vector<std::uint32_t> out;
  if (num_cns == 0) return out;
  const auto g = static_cast<std::uint32_t>((line / line_bytes) % num_cns);
  nr = std::min(nr, num_cns);
  out.reserve(nr);
  for (std::uint32_t i = 0; i < nr; ++i) out.push_back((g + i) % num_cns);
  return out;
}

ReplicaMap::ReplicaMap(std::vector<std::uint32_t> members, std::uint32_t nr, std::uint32_t line_bytes)
    : members_(std::move(members)), nr_(nr), line_bytes_(line_bytes) {}

ReplicaMap ReplicaMap::all(std::uint32_t num_cns, std::uint32_t nr, std::uint32_t line_bytes) {
  std::vector<std::uint32_t> m(num_cns);
  for (std::uint32_t i = 0; i < num_cns; ++i) m[i] = i;
  return ReplicaMap(std::move(m), nr, line_bytes);
}

std::vector<std::uint32_t> ReplicaMap::replicas(Addr line) const {
  const auto n = static_cast<std::uint32_t>(members_.size());
  auto idx = select_replicas(line, n, nr_, line_bytes_);
  for (auto& i : idx) i = members_[i];
  return idx;
}

int ReplicaMap::rank_of(Addr line, std::uint32_t cn) const {
  const auto r = replicas(line);
  auto it = std::find(r.begin(), r.end(), cn);
  return it == r.end() ? -1 : static_cast<int>(it - r.begin());
}

std::string_view to_string(ReplState s) {
  switch (s) {
    case ReplState::NotSent: return "NotSent";
    case ReplState::ReplsSent: return "ReplsSent";
    case ReplState::AcksComplete: return "AcksComplete";
    case ReplState::Validated: return "Validated";
  }
  return "?";
}

std::string_view to_string(GateReason r) {
  switch (r) {
    case GateReason::None: return "none";
    case GateReason::Coherence: return "coherence";
    case GateReason::Replication: return "replication";
    case GateReason::Both: return "coherence+replication";
    case GateReason::WriteThrough: return "write-through";
  }
  return "?";
}

GateResult commit_gate(Protocol protocol, bool remote, ReplState repl, CohState coh) {
  if (!remote) return {true, GateReason::None};
  if (protocol == Protocol::WT) return {false, GateReason::WriteThrough};
  const bool coh_ok = coh == CohState::Complete;
  if (!replicates(protocol)) {
    return coh_ok ? GateResult{true, GateReason::None} : GateResult{false, GateReason::Coherence};
  }
  const bool repl_ok = repl == ReplState::AcksComplete;
  if (coh_ok && repl_ok) return {true, GateReason::None};
  if (!coh_ok && !repl_ok) return {false, GateReason::Both};
  return {false, coh_ok ? GateReason::Replication : GateReason::Coherence};
}

}  // namespace cxlsim
