#include "cxlsim/recovery.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "cxlsim/errors.hpp"

namespace cxlsim {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

SimTime parse_time(const std::string& v) {
  std::size_t pos = 0;
  while (pos < v.size() && (std::isdigit(static_cast<unsigned char>(v[pos])) || v[pos] == '.')) ++pos;
  if (pos == 0) throw SpecError("bad crash time '" + v + "'");
  const double x = std::stod(v.substr(0, pos));
  const std::string unit = v.substr(pos);
  double ps;
  if (unit == "ps") ps = x;
  else if (unit == "ns" || unit.empty()) ps = x * 1e3;
  else if (unit == "us") ps = x * 1e6;
  else if (unit == "ms") ps = x * 1e9;
  else throw SpecError("bad time unit '" + unit + "'");
  return SimTime::from_ps(static_cast<std::uint64_t>(std::llround(ps)));
}

}  // namespace

CrashPlan parse_crash_spec(const std::string& spec) {
  CrashPlan p;
  for (const auto& kv : split(spec, ',')) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw SpecError("crash spec item '" + kv + "' lacks '='");
    const std::string k = kv.substr(0, eq);
    const std::string v = kv.substr(eq + 1);
    if (k == "cn") {
      for (const auto& c : split(v, '+')) p.victims.push_back(static_cast<std::uint32_t>(std::stoul(c)));
    } else if (k == "t") {
      p.at = parse_time(v);
    } else if (k == "commit") {
      p.after_commits = std::stoull(v);
    } else {
      throw SpecError("unknown crash spec key '" + k + "'");
    }
  }
  if (p.victims.empty()) throw SpecError("crash spec names no victim");
  if (!p.at && !p.after_commits) throw SpecError("crash spec needs t= or commit=");
  return p;
}

std::string format_crash_spec(const CrashPlan& plan) {
  std::string s = "cn=";
  for (std::size_t i = 0; i < plan.victims.size(); ++i) {
    if (i) s += "+";
    s += std::to_string(plan.victims[i]);
  }
  if (plan.at) s += ",t=" + std::to_string(plan.at->ps) + "ps";
  if (plan.after_commits) s += ",commit=" + std::to_string(*plan.after_commits);
  return s;
}

void GoldenHistory::on_commit(std::uint32_t core, Addr line, std::uint8_t mask, const LineData& values,
                              SimTime t, std::uint32_t word_bytes) {
  ++commits_;
  std::uint64_t lo = UINT64_MAX;
  std::uint64_t hi = 0;
  for (std::uint32_t w = 0; w < kMaxWords; ++w) {
    if (!(mask & (1u << w))) continue;
    const Addr a = line + static_cast<Addr>(w) * word_bytes;
    committed_[a].push_back(Update{values[w], t, core});
    auto it = in_flight_.find(a);
    if (it != in_flight_.end()) {
      it->second.erase(values[w]);
      if (it->second.empty()) in_flight_.erase(it);
    }
    // Store values encode their trace position in the low 32 bits.
    const std::uint64_t op = values[w] & 0xffffffffULL;
    lo = std::min(lo, op);
    hi = std::max(hi, op);
  }
  auto& last = last_op_[core];
  if (lo <= last) ++tso_violations_;
  last = std::max(last, hi);
}

void GoldenHistory::on_repl_issued(Addr line, std::uint8_t mask, const LineData& values, std::uint32_t word_bytes) {
  for (std::uint32_t w = 0; w < kMaxWords; ++w) {
    if (mask & (1u << w)) in_flight_[line + static_cast<Addr>(w) * word_bytes].insert(values[w]);
  }
}

std::optional<std::uint64_t> GoldenHistory::last(Addr word) const {
  auto it = committed_.find(word);
  if (it == committed_.end() || it->second.empty()) return std::nullopt;
  return it->second.back().value;
}

const std::vector<GoldenHistory::Update>* GoldenHistory::history(Addr word) const {
  auto it = committed_.find(word);
  return it == committed_.end() ? nullptr : &it->second;
}

bool GoldenHistory::in_flight(Addr word, std::uint64_t value) const {
  auto it = in_flight_.find(word);
  return it != in_flight_.end() && it->second.count(value) > 0;
}

void Verdict::fail(std::string why) {
  pass = false;
  if (problems.size() < 32) problems.push_back(std::move(why));
}

void Verdict::merge(const Verdict& o) {
  pass = pass && o.pass;
  words_checked += o.words_checked;
  lost_commits += o.lost_commits;
  in_flight_accepted += o.in_flight_accepted;
  for (const auto& d : o.diffs) {
    if (diffs.size() < 32) diffs.push_back(d);
  }
  for (const auto& p : o.problems) {
    if (problems.size() < 32) problems.push_back(p);
  }
}

Verdict verify_image(const std::map<Addr, std::uint64_t>& image, const GoldenHistory& oracle,
                     bool allow_in_flight) {
  Verdict v;
  auto record = [&](Addr w, std::uint64_t exp, std::uint64_t act, const char* why) {
    v.pass = false;
    if (v.diffs.size() < 32) v.diffs.push_back(WordDiff{w, exp, act, why});
  };
  for (const auto& [word, hist] : oracle.committed()) {
    ++v.words_checked;
    const std::uint64_t expected = hist.back().value;
    auto it = image.find(word);
    const std::uint64_t actual = it == image.end() ? 0 : it->second;
    if (actual == expected) continue;
    if (allow_in_flight && oracle.in_flight(word, actual)) {
      ++v.in_flight_accepted;
      continue;
    }
    const bool older = std::any_of(hist.begin(), hist.end(), [&](const auto& u) { return u.value == actual; });
    if (older || actual == 0) ++v.lost_commits;
    record(word, expected, actual, older ? "stale committed value" : (actual == 0 ? "committed store lost" : "unknown value"));
  }
  for (const auto& [word, value] : image) {
    if (value == 0 || oracle.history(word)) continue;
    if (allow_in_flight && oracle.in_flight(word, value)) {
      ++v.in_flight_accepted;
      continue;
    }
    record(word, 0, value, "value never committed");
  }
  if (!v.pass) v.problems.push_back(std::to_string(v.diffs.size()) + "+ word mismatches against oracle");
  return v;
}

// ---- Configuration Manager ----

void RecoveryCoordinator::broadcast(MsgKind kind, const std::vector<NodeId>& dsts, std::shared_ptr<const Bulk> bulk,
                                    std::uint32_t epoch) {
  for (auto d : dsts) {
    Message m;
    m.kind = kind;
    m.src = cm_;
    m.dst = d;
    m.txn = id_;
    m.epoch = epoch;
    m.bulk = bulk;
    host_.host_send(m);
  }
}

void RecoveryCoordinator::on_msi(std::uint32_t cm_cn, std::uint32_t victim) {
  (void)victim;
  if (phase_ != Phase::Idle) return;  // picked up when the current recovery ends
  begin(cm_cn);
}

void RecoveryCoordinator::begin(std::uint32_t cm_cn) {
  auto victims = host_.pending_victims();
  if (victims.empty()) return;
  ++id_;
  cm_ = cm_cn;
  current_ = RecoveryReport{};
  current_.victims = victims;
  current_.cm_cn = cm_cn;
  current_.msi_time = host_.host_engine().now();
  msgs_at_start_ = host_.recovery_messages_sent();
  live_ = host_.live_cns();
  current_.live_cns = live_.size();
  phase_ = Phase::Interrupting;
  awaiting_ = static_cast<std::uint32_t>(live_.size());
  broadcast(MsgKind::Interrupt, std::vector<NodeId>(live_.begin(), live_.end()), nullptr);
}

void RecoveryCoordinator::on_response(const Message& m) {
  if (m.txn != id_) return;
  const SimTime now = host_.host_engine().now();
  switch (m.kind) {
    case MsgKind::InterruptResp: {
      if (phase_ != Phase::Interrupting || --awaiting_ > 0) return;
      current_.interrupt_done = now;
      phase_ = Phase::Recovering;
      const std::uint32_t mns = host_.num_mns();
      awaiting_ = mns;
      auto bulk = std::make_shared<Bulk>();
      bulk->nodes = current_.victims;
      std::vector<NodeId> dsts;
      for (std::uint32_t i = 0; i < mns; ++i) dsts.push_back(host_.mn_node(i));
      broadcast(MsgKind::InitRecov, dsts, bulk);
      return;
    }
    case MsgKind::InitRecovResp: {
      if (phase_ != Phase::Recovering || --awaiting_ > 0) return;
      current_.init_recov_done = now;
      phase_ = Phase::Ending;
      const std::uint32_t epoch = host_.prepare_recov_end(current_.victims, current_);
      awaiting_ = static_cast<std::uint32_t>(live_.size());
      auto bulk = std::make_shared<Bulk>();
      bulk->nodes = current_.victims;
      broadcast(MsgKind::RecovEnd, std::vector<NodeId>(live_.begin(), live_.end()), bulk, epoch);
      return;
    }
    case MsgKind::RecovEndResp: {
      if (phase_ != Phase::Ending || --awaiting_ > 0) return;
      current_.recov_end_done = now;
      current_.messages = host_.recovery_messages_sent() - msgs_at_start_;
      current_.expected_messages = 4 * current_.live_cns + 2 * host_.num_mns() + 2 * current_.fetches;
      if (current_.messages != current_.expected_messages) {
        current_.verdict.fail("recovery exchanged " + std::to_string(current_.messages) + " messages, expected " +
                              std::to_string(current_.expected_messages));
      }
      reports_.push_back(current_);
      phase_ = Phase::Idle;
      // Victims that failed while this recovery ran get their own round.
      if (!host_.pending_victims().empty()) begin(cm_);
      return;
    }
    default:
      throw ProtocolViolation("coordinator got unexpected " + std::string(to_string(m.kind)));
  }
}

}  // namespace cxlsim
