// Acceptance suite: one PASS/FAIL line per criterion on stdout, progress and
// details on stderr. Exit status is nonzero if any criterion fails.
#include <algorithm>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cxlsim/cluster.hpp"
#include "cxlsim/experiment.hpp"
#include "cxlsim/metrics.hpp"
#include "cxlsim/rng.hpp"
#include "trace_oracle.hpp"

using namespace cxlsim;

namespace {

constexpr Protocol kVariants[] = {Protocol::Baseline, Protocol::Parallel, Protocol::Proactive};

// Property counters summed over every run of every suite.
struct Totals {
  std::uint64_t runs = 0;
  std::uint64_t ts_inversions = 0;
  std::uint64_t gating_violations = 0;
  std::uint64_t fuzz_runs = 0;

  void add(const RunResult& r) {
    ++runs;
    ts_inversions += r.ts_inversions;
    gating_violations += r.gating_violations;
  }
  void add(const FuzzSummary& s) {
    runs += s.trials;
    fuzz_runs += s.trials;
    ts_inversions += s.ts_inversions;
    gating_violations += s.gating_violations;
  }
};

Totals totals;
int failures = 0;
std::FILE* report_file = nullptr;  // ctest hides the output of passing tests

void report(int n, bool ok, const std::string& what) {
  std::printf("%s C%d %s\n", ok ? "PASS" : "FAIL", n, what.c_str());
  std::fflush(stdout);
  if (report_file) {
    std::fprintf(report_file, "%s C%d %s\n", ok ? "PASS" : "FAIL", n, what.c_str());
    std::fflush(report_file);
  }
  if (!ok) ++failures;
}

template <class... T>
std::string fmt(const char* f, T... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ~100k ops per trace on the default 16 x 4 cluster.
constexpr std::uint64_t kFuzzOpsPerCore = 1600;
// These traces run 40-350 us, so the default 2.5 ms period would never dump.
// 10 us gives several rounds per trial and crashes that land mid-round.
constexpr std::uint64_t kFuzzDumpPeriodUs = 10;

void print_failures(const FuzzSummary& s) {
  for (const auto& t : s.failures) {
    std::cerr << "  trial " << t.index << " seed " << t.seed << " " << t.preset << " " << to_string(t.protocol)
              << " p=" << t.p_reorder << " crash " << format_crash_spec(t.crash) << ": " << t.error;
    for (const auto& p : t.problems) std::cerr << " | " << p;
    std::cerr << "\n";
  }
}

void c1_fuzz() {
  FuzzOptions o;
  o.trials = 1000;
  o.ops_per_core = kFuzzOpsPerCore;
  o.base.dump_period_us = kFuzzDumpPeriodUs;
  o.seed = 1;
  o.on_trial = [](std::uint32_t i, const FuzzTrial& t) {
    if ((i + 1) % 100 == 0) std::cerr << "  C1 " << (i + 1) << "/1000\n";
    if (!t.pass) std::cerr << "  C1 trial " << i << " failed\n";
  };
  const auto s = fuzz_recovery(o);
  totals.add(s);
  print_failures(s);
  report(1, s.ok() && s.recovered == s.trials && s.lost_commits == 0,
         fmt("crash-recovery fuzz: %u/%u PASS, %u recovered, %llu committed-store losses, %llu lines repaired "
             "(%llu words from persisted segments)",
             s.passed, s.trials, s.recovered, static_cast<unsigned long long>(s.lost_commits),
             static_cast<unsigned long long>(s.repaired_lines),
             static_cast<unsigned long long>(s.repaired_from_persisted)));
}

void c2_multi_victim() {
  FuzzOptions o;
  o.trials = 100;
  o.victims = 2;
  o.ops_per_core = kFuzzOpsPerCore;
  o.base.dump_period_us = kFuzzDumpPeriodUs;
  o.seed = 2;
  const auto s = fuzz_recovery(o);
  totals.add(s);
  print_failures(s);

  // Nr = 1: the only replica of a line can be its owner, so one crash can
  // take the last copy of a committed store with it. Allowed to fail.
  FuzzOptions one = o;
  one.base.replication_factor = 1;
  one.victims = 1;
  one.trials = 20;
  one.seed = 3;
  const auto s1 = fuzz_recovery(one);
  totals.add(s1);
  report(2, s.ok() && s.recovered == s.trials && s.lost_commits == 0,
         fmt("multi-victim, Nr=3, 2 simultaneous victims: %u/%u PASS, %llu losses, %llu words from persisted "
             "segments; Nr=1 single victim: %u/%u "
             "PASS, %llu losses (bound is tight: %s)",
             s.passed, s.trials, static_cast<unsigned long long>(s.lost_commits),
             static_cast<unsigned long long>(s.repaired_from_persisted), s1.passed, s1.trials,
             static_cast<unsigned long long>(s1.lost_commits), s1.lost_commits > 0 ? "yes" : "not shown"));
}

void c3_ordering() {
  RunSpec base;
  base.workload = preset("write-heavy");
  base.cfg.coalescing_enabled = false;
  base.seed = 1;
  std::map<Protocol, double> t;
  bool ok = true;
  for (auto p : {Protocol::WB, Protocol::WT, Protocol::Baseline, Protocol::Parallel, Protocol::Proactive}) {
    auto s = base;
    s.cfg.protocol = p;
    const auto r = run_experiment(s);
    totals.add(r);
    ok = ok && r.completed && r.verdict.pass;
    t[p] = r.sim_time.us();
  }
  const double wb = t[Protocol::WB];
  const double base_r = t[Protocol::Baseline] / wb;
  const double pro_r = t[Protocol::Proactive] / wb;
  const double wt_r = t[Protocol::WT] / wb;
  ok = ok && t[Protocol::Proactive] <= t[Protocol::Parallel] && t[Protocol::Parallel] <= t[Protocol::Baseline] &&
       t[Protocol::Baseline] < t[Protocol::WT] && wt_r >= 2.0 && base_r >= 1.2 && base_r <= 6.0 && pro_r < base_r;
  report(3, ok,
         fmt("variant ordering (write-heavy, coalescing off, seed 1): WB %.1f us, PROACTIVE %.1f, PARALLEL %.1f, "
             "BASELINE %.1f, WT %.1f; WT/WB %.2f, BASELINE/WB %.2f, PROACTIVE/WB %.2f",
             wb, t[Protocol::Proactive], t[Protocol::Parallel], t[Protocol::Baseline], t[Protocol::WT], wt_r, base_r,
             pro_r));
}

void c6_coalescing() {
  // Stores to A, then a run to B (three words), a run to C, then B again.
  const Addr a = kRemoteBit | 0x20000;
  const Addr b = a + 64 * 3;
  const Addr c = a + 64 * 7;
  Trace tr;
  ClusterConfig cfg;
  tr.cores.resize(cfg.total_cores());
  tr.cores[5] = {TraceOp::store(a), TraceOp::store(b), TraceOp::store(b + 4 * 8), TraceOp::store(b + 2 * 8),
                 TraceOp::store(c), TraceOp::store(c + 8), TraceOp::store(b)};
  const std::uint64_t groups = 4;
  const std::uint64_t nr = cfg.replication_factor;
  bool ok = true;
  std::string detail;
  for (auto p : kVariants) {
    cfg.protocol = p;
    Cluster cl(cfg, tr);
    const auto r = cl.run();
    totals.add(r);
    const auto& k = cl.fabric().stats().sent_by_kind;
    const auto repl = k[static_cast<std::size_t>(MsgKind::REPL)];
    const auto ack = k[static_cast<std::size_t>(MsgKind::REPL_ACK)];
    const auto val = k[static_cast<std::size_t>(MsgKind::VAL)];
    ok = ok && r.completed && r.verdict.pass && r.repl_txns == groups && repl == groups * nr && ack == groups * nr &&
         val == groups * nr && r.coalesced == 3;
    detail += fmt(" %s: %llu txns, REPL/ACK/VAL %llu/%llu/%llu;", std::string(to_string(p)).c_str(),
                  static_cast<unsigned long long>(r.repl_txns), static_cast<unsigned long long>(repl),
                  static_cast<unsigned long long>(ack), static_cast<unsigned long long>(val));
  }
  report(6, ok, fmt("coalescing: 4 groups from 7 stores, Nr=%llu;", static_cast<unsigned long long>(nr)) + detail);
}

void c7_wb_equivalence() {
  const auto names = preset_names();
  SeededRng rng(7, 0xE9);
  std::uint32_t good = 0;
  std::uint32_t traces = 0;
  std::string first_problem;
  for (std::uint32_t i = 0; i < 100; ++i) {
    RunSpec s;
    s.workload = preset(names[rng.below(names.size())]);
    s.workload.ops_per_core = 400;
    s.seed = rng.next_u64() % 1000000 + 1;
    s.cfg.p_reorder = i % 2 ? 0.5 : 0.0;
    const Trace trace = build_trace(s);
    s.trace = trace;
    const auto want = oracle::analyze_trace(trace, s.cfg.cores_per_cn);
    const auto gold = oracle::nonzero(want.final_image);
    bool ok = want.race_count == 0 && want.lock_order_dependent == 0 && !want.deadlocked;
    if (!ok && first_problem.empty()) first_problem = "trace " + std::to_string(i) + " is not DRF";

    std::map<Addr, std::uint64_t> wb_image;
    for (auto p : {Protocol::WB, Protocol::Baseline, Protocol::Parallel, Protocol::Proactive}) {
      s.cfg.protocol = p;
      Cluster cl(s.cfg, trace, ClusterOptions{s.seed, {}, SimTime::from_us(1000000)});
      const auto r = cl.run();
      totals.add(r);
      const auto img = oracle::nonzero(cl.image());
      if (p == Protocol::WB) wb_image = img;
      const bool same = r.completed && r.verdict.pass && img == wb_image && img == gold;
      if (!same && first_problem.empty()) {
        first_problem = "trace " + std::to_string(i) + " " + std::string(to_string(p)) + " differs";
      }
      ok = ok && same;
    }
    ++traces;
    if (ok) ++good;
  }
  report(7, good == traces,
         fmt("WB equivalence: %u/%u DRF traces give identical images under WB, BASELINE, PARALLEL, PROACTIVE and the "
             "trace oracle",
             good, traces) +
             (first_problem.empty() ? "" : " (" + first_problem + ")"));
}

void c8_log_dump() {
  RunSpec s;  // default config, ycsb-like
  s.seed = 1;
  const auto pilot = run_experiment(s);
  totals.add(pilot);
  // The default period relates to full-length traces; keep ~10 rounds per run.
  s.cfg.dump_period_us = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(pilot.sim_time.us() / 10.0));
  const auto r = run_experiment(s);
  totals.add(r);
  const auto coh = r.bytes[static_cast<std::size_t>(TrafficClass::Coherence)];
  const auto dump = r.bytes[static_cast<std::size_t>(TrafficClass::LogDump)];
  std::uint64_t max_log = 0;
  for (auto b : r.max_dram_log_bytes) max_log = std::max(max_log, b);
  const double frac = coh ? static_cast<double>(dump) / static_cast<double>(coh) : 1.0;
  const bool ok = r.completed && r.verdict.pass && r.dumps.rounds > 0 && frac < 0.10 && max_log < (18ull << 20);
  report(8, ok,
         fmt("log dump: period %llu us over %.1f us, %llu rounds; logdump/coherence bytes %.4f; max DRAM log %llu B",
             static_cast<unsigned long long>(s.cfg.dump_period_us), r.sim_time.us(),
             static_cast<unsigned long long>(r.dumps.rounds), frac, static_cast<unsigned long long>(max_log)));
}

void c9_determinism() {
  std::vector<std::pair<std::string, std::function<std::string()>>> suites;
  suites.emplace_back("crash run", [] {
    RunSpec s;
    s.workload = preset("write-heavy");
    s.workload.ops_per_core = 800;
    s.cfg.p_reorder = 0.5;
    s.seed = 99;
    s.crashes.push_back(parse_crash_spec("cn=4+9,commit=3000"));
    return to_json(run_experiment(s));
  });
  suites.emplace_back("fuzz", [] {
    FuzzOptions o;
    o.trials = 9;
    o.ops_per_core = 600;
    o.seed = 42;
    return to_json(fuzz_recovery(o));
  });
  suites.emplace_back("sweep", [] {
    RunSpec s;
    s.workload.ops_per_core = 600;
    s.seed = 5;
    const auto rows = sweep(s, SweepDimension::Protocol, {"wb", "wt", "baseline", "parallel", "proactive"});
    return sweep_csv(SweepDimension::Protocol, rows) + sweep_gnuplot(SweepDimension::Protocol, rows);
  });
  bool ok = true;
  std::string names;
  for (auto& [name, fn] : suites) {
    const auto a = fn();
    const auto b = fn();
    const bool same = a == b && !a.empty();
    ok = ok && same;
    names += " " + name + (same ? " identical;" : " DIFFERS;");
  }
  report(9, ok, "determinism: each suite run twice with the same seed:" + names);
}

}  // namespace

int main(int argc, char** argv) {
  // Optional argument: file that receives a copy of the PASS/FAIL lines.
  if (argc > 1) report_file = std::fopen(argv[1], "w");
  try {
    c1_fuzz();
    c2_multi_victim();
    c3_ordering();
    // Criteria 4 and 5 aggregate the instrumentation of the other suites, so
    // run those first.
    c6_coalescing();
    c7_wb_equivalence();
    c8_log_dump();
    c9_determinism();
    report(4, totals.ts_inversions == 0,
           fmt("timestamp order: %llu per-source inversions in DRAM logs over %llu fuzz runs (%llu runs total)",
               static_cast<unsigned long long>(totals.ts_inversions),
               static_cast<unsigned long long>(totals.fuzz_runs), static_cast<unsigned long long>(totals.runs)));
    report(5, totals.gating_violations == 0,
           fmt("commit gating: %llu violations over %llu runs",
               static_cast<unsigned long long>(totals.gating_violations),
               static_cast<unsigned long long>(totals.runs)));
  } catch (const std::exception& e) {
    std::printf("FAIL acceptance aborted: %s\n", e.what());
    if (report_file) std::fprintf(report_file, "FAIL acceptance aborted: %s\n", e.what());
    return 2;
  }
  return failures == 0 ? 0 : 1;
}
