#include "cxlsim/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <sstream>

#include "cxlsim/cluster.hpp"
#include "cxlsim/errors.hpp"
#include "cxlsim/rng.hpp"

namespace cxlsim {

Trace build_trace(const RunSpec& spec) {
  if (spec.trace) return *spec.trace;
  return generate_trace(spec.workload, spec.seed, spec.cfg.num_cns, spec.cfg.cores_per_cn, spec.cfg.line_bytes,
                        spec.cfg.word_bytes);
}

RunResult run_experiment(const RunSpec& spec) {
  ClusterOptions o;
  o.seed = spec.seed;
  o.crashes = spec.crashes;
  Cluster c(spec.cfg, build_trace(spec), o);
  return c.run();
}

SweepDimension parse_dimension(std::string_view s) {
  if (s == "protocol") return SweepDimension::Protocol;
  if (s == "Nr" || s == "nr" || s == "replication_factor") return SweepDimension::Nr;
  if (s == "num_cns") return SweepDimension::NumCns;
  if (s == "link_GBps") return SweepDimension::LinkGBps;
  if (s == "coalescing" || s == "coalescing_enabled") return SweepDimension::Coalescing;
  throw ConfigError("sweep", "unknown dimension '" + std::string(s) + "'");
}

std::string_view to_string(SweepDimension d) {
  switch (d) {
    case SweepDimension::Protocol: return "protocol";
    case SweepDimension::Nr: return "Nr";
    case SweepDimension::NumCns: return "num_cns";
    case SweepDimension::LinkGBps: return "link_GBps";
    case SweepDimension::Coalescing: return "coalescing";
  }
  return "?";
}

std::vector<SweepRow> sweep(const RunSpec& base, SweepDimension dim, const std::vector<std::string>& values) {
  std::vector<SweepRow> rows;
  for (const auto& v : values) {
    RunSpec s = base;
    switch (dim) {
      case SweepDimension::Protocol: set_config_key(s.cfg, "protocol", v); break;
      case SweepDimension::Nr: set_config_key(s.cfg, "replication_factor", v); break;
      case SweepDimension::LinkGBps: set_config_key(s.cfg, "link_GBps", v); break;
      case SweepDimension::Coalescing: set_config_key(s.cfg, "coalescing_enabled", v); break;
      case SweepDimension::NumCns: {
        set_config_key(s.cfg, "num_cns", v);
        if (s.trace) throw ConfigError("num_cns", "a sweep needs a generated workload, not a trace file");
        const std::uint64_t total = base.workload.ops_per_core * base.cfg.total_cores();
        s.workload.ops_per_core = std::max<std::uint64_t>(1, total / s.cfg.total_cores());
        break;
      }
    }
    rows.push_back(SweepRow{v, run_experiment(s)});
  }
  return rows;
}

namespace {

double ratio(double a, double b) { return b == 0 ? 0.0 : a / b; }

}  // namespace

std::string sweep_csv(SweepDimension dim, const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << to_string(dim)
     << ",sim_time_ps,norm_sim_time,ops,remote_commits,repl_txns,at_head_fraction,coherence_bytes,"
        "replication_bytes,logdump_bytes,recovery_bytes,norm_coherence_bytes,norm_replication_bytes,"
        "norm_logdump_bytes,completed,verified\n";
  if (rows.empty()) return os.str();
  const auto& first = rows.front().result;
  char buf[64];
  for (const auto& row : rows) {
    const auto& r = row.result;
    os << row.value << ',' << r.sim_time.ps << ',';
    std::snprintf(buf, sizeof buf, "%.6f", ratio(static_cast<double>(r.sim_time.ps), static_cast<double>(first.sim_time.ps)));
    os << buf << ',' << r.ops << ',' << r.remote_commits << ',' << r.repl_txns << ',';
    std::snprintf(buf, sizeof buf, "%.6f", r.at_head_fraction());
    os << buf;
    for (std::size_t i = 0; i < kNumTrafficClasses; ++i) os << ',' << r.bytes[i];
    for (std::size_t i = 0; i < 3; ++i) {
      std::snprintf(buf, sizeof buf, ",%.6f", ratio(static_cast<double>(r.bytes[i]), static_cast<double>(first.bytes[i])));
      os << buf;
    }
    os << ',' << (r.completed ? 1 : 0) << ',' << (r.verdict.pass ? 1 : 0) << '\n';
  }
  return os.str();
}

std::string sweep_gnuplot(SweepDimension dim, const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "# index " << to_string(dim) << " norm_sim_time norm_coherence norm_replication norm_logdump\n";
  if (rows.empty()) return os.str();
  const auto& first = rows.front().result;
  char buf[128];
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& r = rows[k].result;
    std::snprintf(buf, sizeof buf, "%zu %s %.6f %.6f %.6f %.6f\n", k, rows[k].value.c_str(),
                  ratio(static_cast<double>(r.sim_time.ps), static_cast<double>(first.sim_time.ps)),
                  ratio(static_cast<double>(r.bytes[0]), static_cast<double>(first.bytes[0])),
                  ratio(static_cast<double>(r.bytes[1]), static_cast<double>(first.bytes[1])),
                  ratio(static_cast<double>(r.bytes[2]), static_cast<double>(first.bytes[2])));
    os << buf;
  }
  return os.str();
}

FuzzSummary fuzz_recovery(const FuzzOptions& opts) {
  if (opts.presets.empty() || opts.protocols.empty() || opts.p_reorder.empty()) {
    throw ConfigError("fuzz", "needs at least one preset, protocol and reorder probability");
  }
  if (opts.victims == 0 || opts.victims >= opts.base.num_cns) {
    throw RangeError("fuzz victims must be in [1, num_cns - 1]");
  }
  for (auto p : opts.protocols) {
    if (!replicates(p)) throw ConfigError("protocol", "fuzz needs a replicating protocol, got " + std::string(to_string(p)));
  }
  FuzzSummary sum;
  auto spec_for = [&](const std::string& name, Protocol proto, double pr, std::uint64_t seed) {
    RunSpec s;
    s.cfg = opts.base;
    s.cfg.protocol = proto;
    s.cfg.p_reorder = pr;
    s.workload = preset(name);
    s.workload.ops_per_core = opts.ops_per_core;
    s.seed = seed;
    return s;
  };

  SeededRng rng(opts.seed, 0xF022);
  for (std::uint32_t i = 0; i < opts.trials; ++i) {
    FuzzTrial t;
    t.index = i;
    t.seed = rng.next_u64() >> 1;
    t.preset = opts.presets[rng.below(opts.presets.size())];
    t.protocol = opts.protocols[i % opts.protocols.size()];
    t.p_reorder = opts.p_reorder[(i / opts.protocols.size()) % opts.p_reorder.size()];

    // Same seed, no crash: the trial replays this run exactly up to the
    // crash, so a time inside the pilot always fires.
    const auto pilot = run_experiment(spec_for(t.preset, t.protocol, t.p_reorder, t.seed));
    if (!pilot.completed || !pilot.verdict.pass) {
      t.error = "crash-free pilot failed: " + pilot.error;
      t.problems = pilot.verdict.problems;
      ++sum.trials;
      if (opts.on_trial) opts.on_trial(i, t);
      sum.failures.push_back(std::move(t));
      continue;
    }
    const std::uint64_t span = pilot.sim_time.ps;
    t.crash.at = SimTime::from_ps(span / 20 + rng.below(std::max<std::uint64_t>(1, span * 17 / 20)));
    std::vector<std::uint32_t> cns(opts.base.num_cns);
    for (std::uint32_t c = 0; c < cns.size(); ++c) cns[c] = c;
    for (std::uint32_t v = 0; v < opts.victims; ++v) {
      const auto j = v + rng.below(cns.size() - v);
      std::swap(cns[v], cns[j]);
      t.crash.victims.push_back(cns[v]);
    }
    std::sort(t.crash.victims.begin(), t.crash.victims.end());

    auto spec = spec_for(t.preset, t.protocol, t.p_reorder, t.seed);
    spec.crashes = {t.crash};
    const auto r = run_experiment(spec);
    t.recovered = r.recoveries.size() == 1;
    t.error = r.error;
    t.lost_commits = r.verdict.lost_commits;
    for (const auto& rep : r.recoveries) t.lost_commits += rep.verdict.lost_commits;
    t.ts_inversions = r.ts_inversions;
    t.gating_violations = r.gating_violations;
    t.tso_violations = r.tso_violations;
    t.problems = r.verdict.problems;
    if (!t.recovered && r.completed) t.problems.push_back("crash did not fire before the run finished");
    t.pass = r.completed && r.verdict.pass && t.recovered && t.lost_commits == 0 && t.ts_inversions == 0 &&
             t.gating_violations == 0 && t.tso_violations == 0;

    ++sum.trials;
    if (t.pass) ++sum.passed;
    if (t.recovered) ++sum.recovered;
    sum.lost_commits += t.lost_commits;
    sum.ts_inversions += t.ts_inversions;
    sum.gating_violations += t.gating_violations;
    sum.tso_violations += t.tso_violations;
    for (const auto& rep : r.recoveries) {
      sum.repaired_lines += rep.repaired_lines;
      sum.repaired_from_persisted += rep.repaired_words_persisted;
    }
    if (opts.on_trial) opts.on_trial(i, t);
    if (!t.pass) sum.failures.push_back(std::move(t));
  }
  return sum;
}

std::string to_json(const FuzzSummary& s, int indent) {
  nlohmann::ordered_json j;
  j["trials"] = s.trials;
  j["passed"] = s.passed;
  j["recovered"] = s.recovered;
  j["lost_commits"] = s.lost_commits;
  j["ts_inversions"] = s.ts_inversions;
  j["gating_violations"] = s.gating_violations;
  j["tso_violations"] = s.tso_violations;
  j["repaired_lines"] = s.repaired_lines;
  j["repaired_words_persisted"] = s.repaired_from_persisted;
  auto failures = nlohmann::ordered_json::array();
  for (const auto& t : s.failures) {
    failures.push_back({{"index", t.index},
                        {"seed", t.seed},
                        {"preset", t.preset},
                        {"protocol", std::string(to_string(t.protocol))},
                        {"p_reorder", t.p_reorder},
                        {"crash", format_crash_spec(t.crash)},
                        {"recovered", t.recovered},
                        {"lost_commits", t.lost_commits},
                        {"error", t.error},
                        {"problems", t.problems}});
  }
  j["failures"] = failures;
  return j.dump(indent);
}

}  // namespace cxlsim
