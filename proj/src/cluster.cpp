#include "cxlsim/cluster.hpp"

#include <algorithm>

#include "cxlsim/address.hpp"
#include "cxlsim/errors.hpp"

namespace cxlsim {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + salt * 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

bool is_recovery_kind(MsgKind k) {
  switch (k) {
    case MsgKind::Interrupt:
    case MsgKind::InterruptResp:
    case MsgKind::InitRecov:
    case MsgKind::InitRecovResp:
    case MsgKind::FetchLatestVers:
    case MsgKind::FetchLatestVersResp:
    case MsgKind::RecovEnd:
    case MsgKind::RecovEndResp:
      return true;
    default:
      return false;
  }
}

}  // namespace

Cluster::Cluster(const ClusterConfig& cfg, Trace trace, ClusterOptions opts)
    : cfg_(cfg), trace_(std::move(trace)), opts_(std::move(opts)) {
  cfg_.validate();
  if (trace_.cores.size() != cfg_.total_cores()) {
    throw SpecError("trace has " + std::to_string(trace_.cores.size()) + " cores, cluster has " +
                    std::to_string(cfg_.total_cores()));
  }
  engine_.set_time_limit(opts_.time_limit);
  fabric_ = std::make_unique<Fabric>(engine_, cfg_, mix_seed(opts_.seed, 1));
  fabric_->set_handler([this](const Message& m) { deliver(m); });

  locks_ = std::make_unique<LockTable>([this](std::uint32_t core) { wake_core(core); });
  std::set<std::uint32_t> everyone;
  for (std::uint32_t c = 0; c < cfg_.total_cores(); ++c) everyone.insert(c);
  barriers_ = std::make_unique<BarrierManager>(everyone, [this](std::uint32_t core) {
    cn(core / cfg_.cores_per_cn).barrier_release(core);
  });
  maps_.push_back(ReplicaMap::all(cfg_.num_cns, cfg_.replication_factor, cfg_.line_bytes));

  cns_.reserve(cfg_.num_cns);
  for (std::uint32_t i = 0; i < cfg_.num_cns; ++i) cns_.push_back(std::make_unique<ComputeNode>(i, *this));

  MemoryNodeHooks hooks;
  hooks.is_dead = [this](std::uint32_t c) { return fabric_->viral(c); };
  hooks.replicas = [this](Addr line) { return maps_.back().replicas(line); };
  hooks.on_wt_apply = [this](std::uint32_t core, Addr line, std::uint8_t mask, const LineData& v) {
    oracle_.on_commit(core, line, mask, v, engine_.now(), cfg_.word_bytes);
  };
  hooks.on_repair = [this](Addr line, const LineData& after, const RepairInfo&) {
    // A repaired word must hold the last value committed to it.
    for (std::uint32_t w = 0; w < cfg_.words_per_line(); ++w) {
      const Addr a = line + static_cast<Addr>(w) * cfg_.word_bytes;
      ++recovery_checks_.words_checked;
      const auto last = oracle_.last(a);
      if (last ? after[w] == *last : after[w] == 0) continue;
      const auto* hist = oracle_.history(a);
      const bool older = hist && std::any_of(hist->begin(), hist->end(),
                                             [&](const GoldenHistory::Update& u) { return u.value == after[w]; });
      if (older || after[w] == 0) ++recovery_checks_.lost_commits;
      if (recovery_checks_.diffs.size() < 32) {
        recovery_checks_.diffs.push_back(WordDiff{a, last.value_or(0), after[w], "repaired word differs"});
      }
      recovery_checks_.fail("repair of line " + std::to_string(line) + " word " + std::to_string(w) +
                            " disagrees with the last committed value");
    }
  };
  mns_.reserve(cfg_.num_mns);
  for (std::uint32_t i = 0; i < cfg_.num_mns; ++i) {
    mns_.push_back(std::make_unique<MemoryNode>(i, engine_, cfg_, [this](Message m) { send(std::move(m)); }, hooks));
  }
  coordinator_ = std::make_unique<RecoveryCoordinator>(static_cast<RecoveryHost&>(*this));

  engine_.set_blocked_reporter([this] {
    std::vector<std::string> out;
    for (const auto& c : cns_) {
      auto b = c->blocked();
      out.insert(out.end(), b.begin(), b.end());
    }
    for (const auto& m : mns_) {
      if (m->busy_lines() > 0) out.push_back("MN" + std::to_string(m->index()) + ": " +
                                             std::to_string(m->busy_lines()) + " busy lines");
    }
    if (coordinator_->active()) out.push_back("recovery in progress");
    return out;
  });
}

Cluster::~Cluster() = default;

NodeId Cluster::home_node(Addr line) const {
  return cfg_.num_cns + home_mn(line, cfg_.line_bytes, cfg_.num_mns);
}

void Cluster::deliver(const Message& m) {
  if (m.dst < cfg_.num_cns) {
    if (crashed(m.dst)) return;
    switch (m.kind) {
      case MsgKind::MSI: coordinator_->on_msi(m.dst, static_cast<std::uint32_t>(m.count)); return;
      case MsgKind::InterruptResp:
      case MsgKind::InitRecovResp:
      case MsgKind::RecovEndResp: coordinator_->on_response(m); return;
      default: cn(m.dst).handle(m); return;
    }
  }
  mn(m.dst - cfg_.num_cns).handle(m);
}

void Cluster::start() {
  if (started_) return;
  started_ = true;
  for (auto& c : cns_) c->start();
  arm_crashes();
  schedule_dump_timer();
}

void Cluster::arm_crashes() {
  crash_fired_.assign(opts_.crashes.size(), false);
  for (std::size_t i = 0; i < opts_.crashes.size(); ++i) {
    const auto& p = opts_.crashes[i];
    if (!p.at) continue;
    crash_events_.push_back(engine_.schedule(*p.at, fabric_->switch_node(), [this, i] {
      crash_fired_[i] = true;
      inject_crash(opts_.crashes[i].victims);
    }));
  }
}

void Cluster::on_remote_commit() {
  ++remote_commits_;
  for (std::size_t i = 0; i < opts_.crashes.size(); ++i) {
    const auto& p = opts_.crashes[i];
    if (crash_fired_[i] || !p.after_commits || remote_commits_ < *p.after_commits) continue;
    crash_fired_[i] = true;
    // Not from inside the committing core's call stack.
    crash_events_.push_back(engine_.schedule_after(SimTime::zero(), fabric_->switch_node(),
                                                   [this, i] { inject_crash(opts_.crashes[i].victims); }));
  }
}

void Cluster::wake_core(std::uint32_t global_core) { cn(global_core / cfg_.cores_per_cn).wake(global_core); }

void Cluster::inject_crash(const std::vector<std::uint32_t>& victims) {
  CrashRecord rec;
  rec.at = engine_.now();
  for (auto v : victims) {
    if (v >= cfg_.num_cns) throw RangeError("crash victim CN" + std::to_string(v) + " out of range");
    if (crashed(v)) continue;
    crashed_.insert(v);
    cn(v).crash();
    rec.victims.push_back(v);
    for (const auto& m : mns_) {
      for (const auto& [line, e] : m->entries()) {
        if (e.owned && e.owner == v) ++rec.owned;
        if (e.sharers.count(v)) ++rec.shared;
      }
    }
  }
  if (rec.victims.empty()) return;
  for (auto v : rec.victims) {
    engine_.schedule_after(SimTime::from_us(cfg_.detect_timeout_us), fabric_->switch_node(),
                           [this, v] { fabric_->detect_failure(v); });
  }
  crash_log_.push_back(std::move(rec));
}

std::vector<std::uint32_t> Cluster::live_cns() const {
  std::vector<std::uint32_t> out;
  for (std::uint32_t i = 0; i < cfg_.num_cns; ++i) {
    if (!crashed(i)) out.push_back(i);
  }
  return out;
}

std::vector<std::uint32_t> Cluster::pending_victims() const {
  std::vector<std::uint32_t> out;
  for (auto v : crashed_) {
    if (!recovered_.count(v)) out.push_back(v);
  }
  return out;
}

std::uint64_t Cluster::recovery_messages_sent() const {
  std::uint64_t n = 0;
  for (std::size_t k = 0; k < kNumMsgKinds; ++k) {
    if (is_recovery_kind(static_cast<MsgKind>(k))) n += fabric_->stats().sent_by_kind[k];
  }
  return n;
}

MemoryNodeStats Cluster::mn_totals() const {
  MemoryNodeStats t;
  for (const auto& m : mns_) {
    const auto& s = m->stats();
    t.fetches_sent += s.fetches_sent;
    t.repaired_lines += s.repaired_lines;
    t.repaired_words_logs += s.repaired_words_logs;
    t.repaired_words_persisted += s.repaired_words_persisted;
    t.divergent_words += s.divergent_words;
    t.sharer_bits_removed += s.sharer_bits_removed;
  }
  return t;
}

std::uint32_t Cluster::prepare_recov_end(const std::vector<std::uint32_t>& victims, RecoveryReport& report) {
  const auto live = live_cns();
  const auto nr = std::min<std::uint32_t>(cfg_.replication_factor, static_cast<std::uint32_t>(live.size()));
  maps_.emplace_back(live, nr, cfg_.line_bytes);

  std::set<std::uint32_t> live_cores;
  std::set<std::uint32_t> dead_cores;
  for (std::uint32_t c = 0; c < cfg_.total_cores(); ++c) {
    (crashed(c / cfg_.cores_per_cn) ? dead_cores : live_cores).insert(c);
  }
  locks_->forget(dead_cores);
  barriers_->set_participants(live_cores);
  // Survivors may hold log entries for lines they no longer replicate.
  dump_all_next_ = true;

  const auto t = mn_totals();
  report.fetches = t.fetches_sent - mn_base_.fetches_sent;
  report.repaired_lines = t.repaired_lines - mn_base_.repaired_lines;
  report.repaired_words_logs = t.repaired_words_logs - mn_base_.repaired_words_logs;
  report.repaired_words_persisted = t.repaired_words_persisted - mn_base_.repaired_words_persisted;
  report.divergent_words = t.divergent_words - mn_base_.divergent_words;
  report.sharer_bits_removed = t.sharer_bits_removed - mn_base_.sharer_bits_removed;
  mn_base_ = t;

  bool first = true;
  for (const auto& rec : crash_log_) {
    const bool mine = std::any_of(rec.victims.begin(), rec.victims.end(), [&](std::uint32_t v) {
      return std::find(victims.begin(), victims.end(), v) != victims.end();
    });
    if (!mine) continue;
    if (first || rec.at < report.crash_time) report.crash_time = rec.at;
    first = false;
    report.owned_at_crash += rec.owned;
    report.shared_at_crash += rec.shared;
  }
  report.detect_time = report.crash_time + SimTime::from_us(cfg_.detect_timeout_us);

  report.verdict.merge(recovery_checks_);
  recovery_checks_ = Verdict{};
  report.verdict.merge(check_directory(crashed_));
  recovered_.insert(victims.begin(), victims.end());
  return epoch();
}

void Cluster::schedule_dump_timer() {
  if (cfg_.dump_period_us == 0) return;
  engine_.schedule_after(
      SimTime::from_us(cfg_.dump_period_us), fabric_->switch_node(),
      [this] {
        dump_tick();
        if (!finished_) schedule_dump_timer();
      },
      EventKind::Background);
}

void Cluster::dump_tick() {
  if (finished_ || coordinator_->active() || !pending_victims().empty() || mn(0).dump_round_open()) return;
  if (!replicates(cfg_.protocol)) return;
  std::vector<std::uint32_t> units;
  for (auto u : live_cns()) {
    if (!cn(u).lu().dump_in_progress()) units.push_back(u);
  }
  if (units.empty()) return;
  const std::uint64_t round = ++dump_round_;
  mn(0).begin_dump_round(round, units);
  const bool all = dump_all_next_;
  dump_all_next_ = false;
  const ReplicaMap& map = maps_.back();
  const std::uint32_t nr = std::max<std::uint32_t>(1, map.nr());
  // One replica per line ships it, rotating the duty over the group.
  LoggingUnit::Responsible resp = [map, nr, lb = cfg_.line_bytes](Addr line) {
    return map.replicas(line)[(line / lb) % nr];
  };
  for (auto u : units) cn(u).lu().start_dump_round(round, resp, all, cfg_.num_cns);
}

bool Cluster::finished() const {
  if (finished_) return true;
  if (!pending_victims().empty() || coordinator_->active()) return false;
  return std::all_of(cns_.begin(), cns_.end(), [](const auto& c) { return c->done(); });
}

void Cluster::settle() { engine_.run_until_quiescent(); }

RunResult Cluster::run() {
  start();
  std::string error;
  bool completed = false;
  try {
    engine_.run_until([this] { return finished(); });
    finish_time_ = engine_.now();
    finished_ = true;
    for (auto h : crash_events_) engine_.cancel(h);
    settle();
    completed = true;
  } catch (const SimError& e) {
    error = e.what();
    finish_time_ = engine_.now();
  }
  return collect(completed, error);
}

std::map<Addr, std::uint64_t> Cluster::image() const {
  std::map<Addr, std::uint64_t> img;
  auto put = [&](Addr line, const LineData& d) {
    for (std::uint32_t w = 0; w < cfg_.words_per_line(); ++w) {
      img[line + static_cast<Addr>(w) * cfg_.word_bytes] = d[w];
    }
  };
  for (const auto& m : mns_) {
    for (const auto& [line, e] : m->entries()) put(line, m->memory(line));
  }
  for (const auto& c : cns_) {
    if (c->crashed()) continue;
    c->for_each_llc_line([&](Addr line, const LlcLine& l) {
      if (l.remote && (l.state == Mesi::E || l.state == Mesi::M)) put(line, l.data);
    });
  }
  return img;
}

Verdict Cluster::check_directory(const std::set<std::uint32_t>& dead) const {
  Verdict v;
  std::map<Addr, std::uint32_t> holders;
  for (const auto& c : cns_) {
    if (c->crashed()) continue;
    c->for_each_llc_line([&](Addr line, const LlcLine& l) {
      if (l.remote && (l.state == Mesi::E || l.state == Mesi::M)) ++holders[line];
    });
  }
  for (const auto& [line, n] : holders) {
    if (n > 1) v.fail("line " + std::to_string(line) + " held exclusive by " + std::to_string(n) + " CNs");
  }
  for (const auto& m : mns_) {
    for (const auto& [line, e] : m->entries()) {
      if (e.owned && dead.count(e.owner)) {
        v.fail("line " + std::to_string(line) + " still owned by dead CN" + std::to_string(e.owner));
      }
      for (const auto& [s, seq] : e.sharers) {
        if (dead.count(s)) v.fail("line " + std::to_string(line) + " still shared by dead CN" + std::to_string(s));
      }
    }
  }
  return v;
}

std::uint64_t Cluster::gating_violations() const {
  std::uint64_t n = 0;
  for (const auto& c : cns_) n += c->stats().gating_violations;
  return n;
}

std::uint64_t Cluster::ts_inversions() const {
  std::uint64_t n = 0;
  for (const auto& c : cns_) {
    n += c->lu().stats().ts_inversions;
    // Audit of what is left in the log: entries of one VAL share a
    // timestamp, so per source the sequence may repeat but never drop.
    const auto& log = c->lu().dram_log();
    const auto& ts = c->lu().shadow_ts();
    std::map<std::uint32_t, std::uint64_t> last;
    for (std::size_t i = 0; i < log.size(); ++i) {
      auto& l = last[log[i].requester_cn];
      if (ts[i] < l) ++n;
      l = ts[i];
    }
  }
  return n;
}

RunResult Cluster::collect(bool completed, const std::string& error) const {
  RunResult r;
  r.completed = completed;
  r.error = error;
  r.protocol = std::string(to_string(cfg_.protocol));
  r.seed = opts_.seed;
  r.num_cns = cfg_.num_cns;
  r.num_mns = cfg_.num_mns;
  r.cores_per_cn = cfg_.cores_per_cn;
  r.replication_factor = cfg_.replication_factor;
  r.sim_time = finish_time_;

  for (const auto& c : cns_) {
    for (std::uint32_t i = 0; i < cfg_.cores_per_cn; ++i) {
      const auto& s = c->core_stats(i);
      r.ops += s.ops;
      r.loads += s.loads;
      r.stores += s.stores;
      r.remote_stores += s.remote_stores;
      r.commits += s.commits;
      r.remote_commits += s.remote_commits;
      r.coalesced += s.coalesced;
      r.sb_full_stall_ps += s.sb_full_stall_ps;
    }
    const auto& n = c->stats();
    r.repl_txns += n.repl_txns;
    r.repl_at_head += n.repl_at_head;
    r.repl_reissued += n.repl_reissued;
    r.deferred_invs += n.deferred_invs;
    r.heads += n.heads;
    r.heads_unowned += n.heads_unowned;
    const auto& ls = c->lu().stats();
    r.max_dram_log_bytes.push_back(ls.max_dram_bytes);
    r.max_sram_entries.push_back(ls.max_sram_entries);
    r.dumps.messages += ls.dump_messages;
    r.dumps.entries += ls.dumped_entries;
    r.dumps.cleared += ls.cleared_entries;
    r.backpressured += ls.backpressured;
    r.gating_violations += n.gating_violations;
  }
  r.dumps.rounds = dump_round_;

  const auto& fs = fabric_->stats();
  r.messages = fs.sent;
  r.reordered = fs.reordered;
  r.dropped_viral = fs.dropped_viral;
  r.repl_messages = fs.sent_by_kind[static_cast<std::size_t>(MsgKind::REPL)];
  r.val_messages = fs.sent_by_kind[static_cast<std::size_t>(MsgKind::VAL)];
  for (std::size_t k = 0; k < kNumMsgKinds; ++k) {
    r.bytes[static_cast<std::size_t>(traffic_class(static_cast<MsgKind>(k)))] += fs.bytes_by_kind[k];
  }
  r.cn_bytes = fabric_->cn_bytes();
  r.cn_windows = fabric_->cn_windows();
  r.tso_violations = oracle_.tso_violations();
  r.ts_inversions = ts_inversions();

  r.recoveries = coordinator_->reports();
  if (completed) {
    r.verdict = verify_image(image(), oracle_, false);
    r.verdict.merge(check_directory(crashed_));
    for (const auto& c : cns_) {
      if (c->crashed()) continue;
      for (std::uint32_t i = 0; i < cfg_.cores_per_cn; ++i) {
        if (c->sb_occupancy(i) != 0) r.verdict.fail("CN" + std::to_string(c->id()) + " SB not drained");
      }
    }
    for (const auto& rep : r.recoveries) {
      if (!rep.verdict.pass) r.verdict.fail("recovery check failed");
    }
  } else {
    r.verdict.fail(error);
  }
  return r;
}

}  // namespace cxlsim
