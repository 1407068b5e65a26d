#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cxlsim/config.hpp"
#include "cxlsim/metrics.hpp"
#include "cxlsim/recovery.hpp"
#include "cxlsim/trace.hpp"
#include "cxlsim/workload.hpp"

namespace cxlsim {

struct RunSpec {
  ClusterConfig cfg;
  WorkloadSpec workload = preset("ycsb-like");
  std::optional<Trace> trace;  // replaces the generated workload when set
  std::uint64_t seed = 1;
  std::vector<CrashPlan> crashes;
};

Trace build_trace(const RunSpec& spec);
RunResult run_experiment(const RunSpec& spec);

enum class SweepDimension : std::uint8_t { Protocol, Nr, NumCns, LinkGBps, Coalescing };
SweepDimension parse_dimension(std::string_view s);
std::string_view to_string(SweepDimension d);

struct SweepRow {
  std::string value;
  RunResult result;
};

// One run per value, all with the base seed. A num_cns sweep keeps the total
// op count of the base configuration (ops per core scale inversely).
std::vector<SweepRow> sweep(const RunSpec& base, SweepDimension dim, const std::vector<std::string>& values);
// Raw columns plus sim time and traffic normalised to the first row.
std::string sweep_csv(SweepDimension dim, const std::vector<SweepRow>& rows);
// Whitespace-separated columns for gnuplot: index, value, normalised sim time,
// then normalised bytes per traffic class.
std::string sweep_gnuplot(SweepDimension dim, const std::vector<SweepRow>& rows);

struct FuzzOptions {
  ClusterConfig base;
  std::vector<std::string> presets = {"ycsb-like", "write-heavy", "coalesce-friendly", "sparse-sync"};
  std::uint64_t ops_per_core = 400;
  std::uint32_t trials = 100;
  std::uint64_t seed = 1;
  std::vector<Protocol> protocols = {Protocol::Baseline, Protocol::Parallel, Protocol::Proactive};
  std::vector<double> p_reorder = {0.0, 0.5};
  std::uint32_t victims = 1;
  std::function<void(std::uint32_t index, const struct FuzzTrial&)> on_trial;
};

struct FuzzTrial {
  std::uint32_t index = 0;
  std::uint64_t seed = 0;
  std::string preset;
  Protocol protocol = Protocol::Proactive;
  double p_reorder = 0.0;
  CrashPlan crash;
  bool recovered = false;
  bool pass = false;
  std::uint64_t lost_commits = 0;
  std::uint64_t ts_inversions = 0;
  std::uint64_t gating_violations = 0;
  std::uint64_t tso_violations = 0;
  std::string error;
  std::vector<std::string> problems;
};

struct FuzzSummary {
  std::uint32_t trials = 0;
  std::uint32_t passed = 0;
  std::uint32_t recovered = 0;  // trials where the crash fired and recovery ran
  std::uint64_t lost_commits = 0;
  std::uint64_t ts_inversions = 0;
  std::uint64_t gating_violations = 0;
  std::uint64_t tso_violations = 0;
  std::uint64_t repaired_lines = 0;
  std::uint64_t repaired_from_persisted = 0;
  std::vector<FuzzTrial> failures;
  bool ok() const { return passed == trials; }
};

// Randomised crash trials. Crash times are drawn from [5%, 90%] of the sim
// time of a crash-free pilot with the trial's own seed and settings; a
// trial passes only if the crash fired, recovery verified, the final image
// matches the oracle and no ordering or gating check fired.
FuzzSummary fuzz_recovery(const FuzzOptions& opts);
std::string to_json(const FuzzSummary& s, int indent = 2);

}  // namespace cxlsim
