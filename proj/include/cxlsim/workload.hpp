#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cxlsim/trace.hpp"

namespace cxlsim {

enum class AccessDistribution : std::uint8_t { Uniform, Zipf, Stream };

// Statistical stand-in for an application trace. Shared data is split into
// per-core slices that rotate between cores at every barrier; conflicting
// accesses outside a slice only happen inside lock-protected regions, which
// keeps every generated trace data-race-free.
struct WorkloadSpec {
  std::string name = "custom";
  std::uint64_t ops_per_core = 2000;
  double remote_fraction = 1.0;  // over loads + stores
  double write_fraction = 0.2;   // over loads + stores
  AccessDistribution distribution = AccessDistribution::Uniform;
  double zipf_theta = 0.99;
  std::uint64_t footprint_bytes = 64ULL << 20;
  double coalescing_run_length = 1.0;  // mean consecutive same-line stores
  double sync_density = 1.0;           // locks + barriers per kilo-op
  double barrier_share = 0.25;         // fraction of sync events that are barriers
  double compute_fraction = 0.1;
  std::uint32_t compute_cycles = 8;    // COMPUTE cycles drawn from [1, compute_cycles]
  std::uint32_t num_locks = 16;
  std::uint32_t lock_cs_ops = 3;
  std::uint64_t local_footprint_bytes = 32ULL << 10;

  // Throws SpecError when a fraction lies outside [0, 1] or a size is zero.
  void validate() const;
};

std::vector<std::string> preset_names();
// ycsb-like, write-heavy, coalesce-friendly, sparse-sync. Throws SpecError for
// unknown names.
WorkloadSpec preset(const std::string& name);

Trace generate_trace(const WorkloadSpec& spec, std::uint64_t seed, std::uint32_t num_cns,
                     std::uint32_t cores_per_cn, std::uint32_t line_bytes = 64,
                     std::uint32_t word_bytes = 8);

// Address of the word `core` owns inside the data region guarded by `lock_id`.
Addr lock_region_word(std::uint32_t lock_id, std::uint32_t core, std::uint32_t line_bytes,
                      std::uint32_t word_bytes);

}  // namespace cxlsim
