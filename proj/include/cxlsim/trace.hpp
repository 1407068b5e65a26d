#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "cxlsim/address.hpp"

namespace cxlsim {

enum class OpKind : std::uint8_t { Load, Store, LockAcq, LockRel, Barrier, Compute };

struct TraceOp {
  OpKind kind = OpKind::Compute;
  bool remote = false;
  std::uint32_t sync_id = 0;
  std::uint32_t cycles = 0;
  Addr addr = 0;

  static TraceOp load(Addr a) { return {OpKind::Load, is_remote(a), 0, 0, a}; }
  static TraceOp store(Addr a) { return {OpKind::Store, is_remote(a), 0, 0, a}; }
  static TraceOp lock(std::uint32_t id) { return {OpKind::LockAcq, false, id, 0, 0}; }
  static TraceOp unlock(std::uint32_t id) { return {OpKind::LockRel, false, id, 0, 0}; }
  static TraceOp barrier(std::uint32_t id) { return {OpKind::Barrier, false, id, 0, 0}; }
  static TraceOp compute(std::uint32_t n) { return {OpKind::Compute, false, 0, n, 0}; }

  bool operator==(const TraceOp&) const = default;
};

using CoreTrace = std::vector<TraceOp>;

// One op sequence per global core (core = cn * cores_per_cn + local index).
struct Trace {
  std::vector<CoreTrace> cores;

  std::size_t total_ops() const;
  bool operator==(const Trace&) const = default;

  // Throws BarrierMismatch unless every barrier id occurs equally often in
  // every core's sequence.
  void check_barriers() const;
};

void write_trace(std::ostream& out, const Trace& trace);
void write_trace(const std::filesystem::path& path, const Trace& trace);

// Parses the text trace format. Throws ParseError (with line number) or
// BarrierMismatch.
Trace parse_trace(std::istream& in);
Trace load_trace(const std::filesystem::path& path);

}  // namespace cxlsim
