#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace cxlsim {

enum class Protocol : std::uint8_t { WB, WT, Baseline, Parallel, Proactive };

std::string_view to_string(Protocol p);
Protocol parse_protocol(std::string_view s);

// True for the three replicating write-back variants.
constexpr bool replicates(Protocol p) {
  return p == Protocol::Baseline || p == Protocol::Parallel || p == Protocol::Proactive;
}

struct CacheGeometry {
  std::uint64_t size_bytes;
  std::uint32_t assoc;
  std::uint32_t latency_cycles;
};

// Cluster parameters. Defaults follow the architecture table of the evaluated
// system (16 CNs, 16 MNs, 4 cores/CN, 72-entry SB, Nr = 3, 2.5 ms dumps, ...).
struct ClusterConfig {
  std::uint32_t num_cns = 16;
  std::uint32_t num_mns = 16;
  std::uint32_t cores_per_cn = 4;
  std::uint32_t sb_entries = 72;
  std::uint32_t lq_entries = 128;
  CacheGeometry l1{48 * 1024, 12, 5};
  CacheGeometry llc{8 * 1024 * 1024, 16, 36};
  std::uint32_t line_bytes = 64;
  std::uint32_t word_bytes = 8;
  std::uint64_t dram_ns = 45;
  std::uint64_t pmem_ns = 500;
  std::uint64_t link_GBps = 160;
  std::uint64_t net_rtt_ns = 200;
  std::uint64_t sram_log_bytes = 4096;
  std::uint64_t sram_access_ns = 4;
  std::uint64_t dram_log_bytes = 18ULL * 1024 * 1024;
  std::uint64_t dump_period_us = 2500;
  std::uint32_t replication_factor = 3;
  double compression_ratio = 5.8;
  Protocol protocol = Protocol::Proactive;
  bool coalescing_enabled = true;

  // Knobs outside the architecture table.
  double p_reorder = 0.1;
  std::uint64_t detect_timeout_us = 10;
  std::uint64_t cpu_mhz = 2400;
  std::uint64_t lu_mhz = 500;

  std::uint32_t words_per_line() const { return line_bytes / word_bytes; }
  std::uint32_t total_cores() const { return num_cns * cores_per_cn; }

  // Throws RangeError on invariant violations.
  void validate() const;
};

// Applies one `key = value` assignment; throws ConfigError for unknown keys or
// unparsable values. Sizes accept KiB/MiB/GiB suffixes.
void set_config_key(ClusterConfig& cfg, std::string_view key, std::string_view value);

std::vector<std::string> config_keys();

ClusterConfig parse_config_text(std::string_view text);
ClusterConfig parse_config(const std::filesystem::path& path);

std::string format_config(const ClusterConfig& cfg);

}  // namespace cxlsim
