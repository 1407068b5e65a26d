#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string_view>
#include <vector>

#include "cxlsim/address.hpp"

namespace cxlsim {

// Node ids: CNs are 0..N-1, MNs N..N+M-1, the switch is N+M.
using NodeId = std::uint32_t;

inline constexpr std::uint32_t kMaxWords = 8;
using LineData = std::array<std::uint64_t, kMaxWords>;

enum class MsgKind : std::uint8_t {
  Rd,
  RdX,
  Rd_ACK,
  RdX_ACK,
  Inv,
  Inv_ACK,
  WB_Evict,
  WT_Store,
  WT_ACK,
  REPL,
  REPL_ACK,
  VAL,
  LogDump,
  DumpDone,    // unit -> coordinating MN: my share of the round is out
  DumpNotice,  // home MN -> coordinating MN: a segment landed
  ClearGrant,  // coordinating MN -> units: round persisted, clear
  Interrupt,
  InterruptResp,
  InitRecov,
  InitRecovResp,
  FetchLatestVers,
  FetchLatestVersResp,
  RecovEnd,
  RecovEndResp,
  MSI,
};

inline constexpr std::size_t kNumMsgKinds = static_cast<std::size_t>(MsgKind::MSI) + 1;

std::string_view to_string(MsgKind k);

enum class TrafficClass : std::uint8_t { Coherence, Replication, LogDump, Recovery };
inline constexpr std::size_t kNumTrafficClasses = 4;

TrafficClass traffic_class(MsgKind k);
std::string_view to_string(TrafficClass c);

// One logged word update as it travels in dump segments and fetch replies.
struct LogRecord {
  std::uint32_t requester_cn = 0;
  std::uint32_t core = 0;
  Addr line = 0;
  std::uint8_t word = 0;
  std::uint64_t value = 0;
  // Directory grant under which the requester committed; lets recovery keep
  // only updates from the owner's current tenure of the line.
  std::uint64_t grant = 0;
  // Requester's commit order, shared by every replica of the same store.
  std::uint64_t commit_seq = 0;

  bool operator==(const LogRecord&) const = default;
};

struct FetchRequest {
  Addr line = 0;
  std::uint32_t owner = 0;
  std::uint64_t grant = 0;
};

struct Version {
  std::uint64_t value = 0;
  bool from_dram = false;
};

struct FetchReply {
  Addr line = 0;
  std::uint8_t word = 0;
  std::vector<Version> versions;  // newest first
};

struct Bulk {
  std::vector<FetchRequest> requests;
  std::vector<FetchReply> replies;
  std::vector<LogRecord> segment;
  std::vector<std::uint32_t> nodes;  // victims (InitRecov / RecovEnd)
  // Dump marks: highest commit_seq per source below a unit's watermark.
  // DumpDone carries one row; ClearGrant the rows of every unit in the round,
  // flattened as marks[unit * num_cns + source].
  std::vector<std::uint64_t> marks;
};

struct Message {
  MsgKind kind = MsgKind::Rd;
  NodeId src = 0;
  NodeId dst = 0;
  std::uint32_t size_bytes = 64;

  Addr line = 0;
  std::uint8_t mask = 0;
  LineData data{};
  std::uint64_t txn = 0;    // directory txn, replication txn, or dump round
  std::uint64_t seq = 0;    // directory grant sequence
  std::uint64_t ts = 0;     // logical timestamp on VAL
  std::uint64_t cseq = 0;   // requester commit order on VAL
  std::uint32_t epoch = 0;  // replica-map epoch
  std::uint32_t core = 0;   // requesting core (global id)
  bool flag = false;        // has-data / downgrade / at-head, by kind
  std::uint32_t count = 0;  // kind-specific counter
  std::shared_ptr<const Bulk> bulk;
};

inline constexpr std::uint32_t kFlitBytes = 64;
inline constexpr std::uint32_t kReplHeaderBytes = 16;
inline constexpr std::uint32_t kLogRecordBytes = 16;

// REPL wire size: one flit if header plus k words fits, else two.
constexpr std::uint32_t repl_size(std::uint32_t words) {
  return kReplHeaderBytes + 8 * words <= kFlitBytes ? kFlitBytes : 2 * kFlitBytes;
}

constexpr std::uint32_t round_up_flits(std::uint64_t bytes) {
  const std::uint64_t flits = (bytes + kFlitBytes - 1) / kFlitBytes;
  return static_cast<std::uint32_t>((flits == 0 ? 1 : flits) * kFlitBytes);
}

}  // namespace cxlsim
