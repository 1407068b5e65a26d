#include "cxlsim/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <sstream>

namespace cxlsim {

using json = nlohmann::ordered_json;

double RunResult::class_rate(TrafficClass c) const {
  if (num_cns == 0 || sim_time.ps == 0) return 0.0;
  const auto i = static_cast<std::size_t>(c);
  std::uint64_t total = 0;
  for (const auto& b : cn_bytes) total += b[i];
  return static_cast<double>(total) / num_cns / sim_time.us();
}

std::uint64_t RunResult::max_window_bytes(TrafficClass c) const {
  const auto i = static_cast<std::size_t>(c);
  std::uint64_t m = 0;
  for (const auto& cn : cn_windows) {
    for (const auto& w : cn) m = std::max(m, w[i]);
  }
  return m;
}

namespace {

json class_json(const ClassTotals& t) {
  json j;
  for (std::size_t i = 0; i < kNumTrafficClasses; ++i) j[std::string(to_string(static_cast<TrafficClass>(i)))] = t[i];
  return j;
}

json verdict_json(const Verdict& v) {
  json j;
  j["pass"] = v.pass;
  j["words_checked"] = v.words_checked;
  j["lost_commits"] = v.lost_commits;
  j["in_flight_accepted"] = v.in_flight_accepted;
  j["problems"] = v.problems;
  json d = json::array();
  for (const auto& w : v.diffs) {
    d.push_back({{"word", w.word}, {"expected", w.expected}, {"actual", w.actual}, {"why", w.why}});
  }
  j["diffs"] = d;
  return j;
}

json report_json(const RecoveryReport& r) {
  json j;
  j["victims"] = r.victims;
  j["cm_cn"] = r.cm_cn;
  j["crash_ns"] = r.crash_time.ns();
  j["detect_ns"] = r.detect_time.ns();
  j["msi_ns"] = r.msi_time.ns();
  j["interrupt_done_ns"] = r.interrupt_done.ns();
  j["init_recov_done_ns"] = r.init_recov_done.ns();
  j["recov_end_done_ns"] = r.recov_end_done.ns();
  j["recovery_ns"] = (r.recov_end_done - r.msi_time).ns();
  j["owned_at_crash"] = r.owned_at_crash;
  j["shared_at_crash"] = r.shared_at_crash;
  j["repaired_lines"] = r.repaired_lines;
  j["repaired_words_logs"] = r.repaired_words_logs;
  j["repaired_words_persisted"] = r.repaired_words_persisted;
  j["divergent_words"] = r.divergent_words;
  j["sharer_bits_removed"] = r.sharer_bits_removed;
  j["fetches"] = r.fetches;
  j["messages"] = r.messages;
  j["expected_messages"] = r.expected_messages;
  j["live_cns"] = r.live_cns;
  j["verdict"] = verdict_json(r.verdict);
  return j;
}

}  // namespace

std::string to_json(const RunResult& r, int indent) {
  json j;
  j["completed"] = r.completed;
  if (!r.error.empty()) j["error"] = r.error;
  j["protocol"] = r.protocol;
  j["seed"] = r.seed;
  j["num_cns"] = r.num_cns;
  j["num_mns"] = r.num_mns;
  j["cores_per_cn"] = r.cores_per_cn;
  j["replication_factor"] = r.replication_factor;
  j["sim_time_ps"] = r.sim_time.ps;
  j["ops"] = r.ops;
  j["loads"] = r.loads;
  j["stores"] = r.stores;
  j["remote_stores"] = r.remote_stores;
  j["commits"] = r.commits;
  j["remote_commits"] = r.remote_commits;
  j["coalesced"] = r.coalesced;
  j["repl_txns"] = r.repl_txns;
  j["repl_at_head"] = r.repl_at_head;
  j["at_head_fraction"] = r.at_head_fraction();
  j["repl_reissued"] = r.repl_reissued;
  j["repl_messages"] = r.repl_messages;
  j["val_messages"] = r.val_messages;
  j["sb_full_stall_ps"] = r.sb_full_stall_ps;
  j["deferred_invs"] = r.deferred_invs;
  j["heads"] = r.heads;
  j["heads_unowned"] = r.heads_unowned;
  j["bytes"] = class_json(r.bytes);
  json rates;
  for (std::size_t i = 0; i < kNumTrafficClasses; ++i) {
    rates[std::string(to_string(static_cast<TrafficClass>(i)))] = r.class_rate(static_cast<TrafficClass>(i));
  }
  j["bytes_per_cn_per_us"] = rates;
  json per_cn = json::array();
  for (const auto& b : r.cn_bytes) per_cn.push_back(class_json(b));
  j["cn_bytes"] = per_cn;
  j["max_dram_log_bytes"] = r.max_dram_log_bytes;
  j["max_sram_entries"] = r.max_sram_entries;
  j["dumps"] = {{"rounds", r.dumps.rounds},
                {"messages", r.dumps.messages},
                {"entries", r.dumps.entries},
                {"cleared", r.dumps.cleared}};
  j["messages"] = r.messages;
  j["reordered"] = r.reordered;
  j["dropped_viral"] = r.dropped_viral;
  j["gating_violations"] = r.gating_violations;
  j["tso_violations"] = r.tso_violations;
  j["ts_inversions"] = r.ts_inversions;
  j["backpressured"] = r.backpressured;
  j["verdict"] = verdict_json(r.verdict);
  json recs = json::array();
  for (const auto& rep : r.recoveries) recs.push_back(report_json(rep));
  j["recoveries"] = recs;
  return j.dump(indent);
}

std::string summary(const RunResult& r) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s: %s, sim time %.3f us, %llu ops, %llu remote commits\n", r.protocol.c_str(),
                r.completed ? "completed" : "FAILED", r.sim_time.us(), static_cast<unsigned long long>(r.ops),
                static_cast<unsigned long long>(r.remote_commits));
  os << buf;
  if (!r.error.empty()) os << "  error: " << r.error << "\n";
  std::snprintf(buf, sizeof buf, "  REPL txns %llu (%.1f%% at head), %llu coalesced stores\n",
                static_cast<unsigned long long>(r.repl_txns), 100.0 * r.at_head_fraction(),
                static_cast<unsigned long long>(r.coalesced));
  os << buf;
  os << "  bytes/CN/us:";
  for (std::size_t i = 0; i < kNumTrafficClasses; ++i) {
    std::snprintf(buf, sizeof buf, " %s %.2f", std::string(to_string(static_cast<TrafficClass>(i))).c_str(),
                  r.class_rate(static_cast<TrafficClass>(i)));
    os << buf;
  }
  os << "\n";
  for (const auto& rep : r.recoveries) {
    std::snprintf(buf, sizeof buf, "  recovery of %zu CN(s): %.3f us, %llu lines repaired, %llu messages (%s)\n",
                  rep.victims.size(), (rep.recov_end_done - rep.msi_time).us(),
                  static_cast<unsigned long long>(rep.repaired_lines),
                  static_cast<unsigned long long>(rep.messages), rep.verdict.pass ? "ok" : "FAILED");
    os << buf;
    for (const auto& p : rep.verdict.problems) os << "    " << p << "\n";
  }
  os << "  image " << (r.verdict.pass ? "verified" : "MISMATCH") << " (" << r.verdict.words_checked << " words)\n";
  for (const auto& p : r.verdict.problems) os << "    " << p << "\n";
  return os.str();
}

}  // namespace cxlsim
