#include "cxlsim/compute_node.hpp"

#include <algorithm>
#include <bit>

#include "cxlsim/cluster.hpp"
#include "cxlsim/errors.hpp"

namespace cxlsim {

ComputeNode::ComputeNode(std::uint32_t cn, Cluster& cluster)
    : cn_(cn),
      cl_(cluster),
      cfg_(cluster.config()),
      llc_(cfg_.llc.size_bytes, cfg_.llc.assoc, cfg_.line_bytes),
      ts_(cfg_.num_cns),
      credits_(cfg_.num_cns, 0) {
  lu_ = std::make_unique<LoggingUnit>(cn, cl_.engine(), cfg_, [this](Message m) { cl_.send(std::move(m)); });
  // Proactive REPLs may claim at most half of each unit's SRAM, split evenly
  // between sources; REPLs from an SB head are never held back.
  credit_init_ = lu_->sram_capacity() / 2 / cfg_.num_cns;
  std::fill(credits_.begin(), credits_.end(), credit_init_);
  cores_.reserve(cfg_.cores_per_cn);
  for (std::uint32_t i = 0; i < cfg_.cores_per_cn; ++i) {
    cores_.emplace_back(cfg_.l1.size_bytes, cfg_.l1.assoc, cfg_.line_bytes);
    auto& c = cores_.back();
    c.local = i;
    c.gid = cn * cfg_.cores_per_cn + i;
    c.trace = &cl_.trace_of(c.gid);
  }
}

SimTime ComputeNode::cyc(std::uint64_t n) const { return SimTime::cycles(n, cfg_.cpu_mhz); }

void ComputeNode::start() {
  for (auto& c : cores_) schedule_step(c, SimTime::zero());
}

bool ComputeNode::owns(Addr line) const {
  const auto* l = llc_.find(line);
  return l && (l->state == Mesi::E || l->state == Mesi::M);
}

std::uint64_t ComputeNode::received_grant(Addr line) const {
  auto it = grant_seq_.find(line);
  return it == grant_seq_.end() ? 0 : it->second;
}

bool ComputeNode::done() const {
  if (crashed_) return true;
  for (const auto& c : cores_) {
    if (c.wait != CoreWait::Done || !c.sb.empty()) return false;
  }
  return true;
}

std::vector<std::string> ComputeNode::blocked() const {
  static const char* names[] = {"none", "busy", "load", "sb-full", "drain", "sync-line",
                                "lock", "barrier", "paused", "done"};
  std::vector<std::string> out;
  if (crashed_) return out;
  for (const auto& c : cores_) {
    if (c.wait == CoreWait::Done && c.sb.empty()) continue;
    std::string s = "CN" + std::to_string(cn_) + " core " + std::to_string(c.gid) + ": " +
                    names[static_cast<int>(c.wait)] + ", pc " + std::to_string(c.pc) + "/" +
                    std::to_string(c.trace->size()) + ", SB " + std::to_string(c.sb.size());
    if (!c.sb.empty()) {
      const auto& h = c.sb.front();
      s += ", head line 0x" + [&] {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%llx", static_cast<unsigned long long>(h.line));
        return std::string(buf);
      }();
      s += " repl " + std::string(to_string(h.repl_state)) + (owns(h.line) ? " owned" : " not-owned");
    }
    out.push_back(std::move(s));
  }
  return out;
}

// ---- core execution ----

void ComputeNode::schedule_step(Core& c, SimTime delay) {
  c.wait = CoreWait::Busy;
  cl_.engine().schedule_after(delay, cn_, [this, &c] { step(c); });
}

void ComputeNode::block(Core& c, CoreWait why) {
  c.wait = why;
  c.wait_since = cl_.engine().now();
}

void ComputeNode::finish_op(Core& c, SimTime latency) {
  ++c.pc;
  ++c.stats.ops;
  schedule_step(c, latency);
}

void ComputeNode::step(Core& c) {
  if (crashed_) return;
  if (paused_) {
    c.wait = CoreWait::Paused;
    c.resume_pending = true;
    return;
  }
  c.wait = CoreWait::None;
  if (c.pc >= c.trace->size()) {
    c.wait = CoreWait::Done;
    c.stats.done_time = cl_.engine().now();
    return;
  }
  const TraceOp& op = (*c.trace)[c.pc];
  switch (op.kind) {
    case OpKind::Compute: finish_op(c, cyc(std::max<std::uint32_t>(1, op.cycles))); return;
    case OpKind::Load: do_load(c, op); return;
    case OpKind::Store: do_store(c, op); return;
    case OpKind::LockAcq:
    case OpKind::LockRel:
    case OpKind::Barrier: do_sync(c, op); return;
  }
}

void ComputeNode::wake(std::uint32_t global_core) {
  auto& c = cores_.at(global_core - cn_ * cfg_.cores_per_cn);
  if (crashed_) return;
  if (c.wait == CoreWait::Lock || c.wait == CoreWait::Barrier) {
    c.stats.sync_wait_ps += (cl_.engine().now() - c.wait_since).ps;
    schedule_step(c, SimTime::zero());
  }
}

void ComputeNode::barrier_release(std::uint32_t global_core) {
  auto& c = cores_.at(global_core - cn_ * cfg_.cores_per_cn);
  if (crashed_) return;
  c.barrier_released = true;
  if (c.wait == CoreWait::Barrier) {
    c.stats.sync_wait_ps += (cl_.engine().now() - c.wait_since).ps;
    schedule_step(c, SimTime::zero());
  }
}

void ComputeNode::do_load(Core& c, const TraceOp& op) {
  const Addr line = line_of(op.addr, cfg_.line_bytes);
  const std::uint32_t word = word_of(op.addr, cfg_.line_bytes, cfg_.word_bytes);
  if (c.wait != CoreWait::Load) {
    ++c.stats.loads;
    if (op.remote) ++c.stats.remote_loads;
  }
  // Store-to-load forwarding from this core's SB.
  for (auto it = c.sb.rbegin(); it != c.sb.rend(); ++it) {
    if (it->line == line && (it->word_mask & (1u << word))) {
      finish_op(c, cyc(1));
      return;
    }
  }
  if (llc_.find(line)) {
    if (c.l1.touch(line)) {
      finish_op(c, cyc(cfg_.l1.latency_cycles));
      return;
    }
    llc_.touch(line);
    c.l1.insert(line, 0);
    finish_op(c, cyc(cfg_.llc.latency_cycles));
    return;
  }
  if (!op.remote) {
    install(line, LlcLine{Mesi::E, false, {}});
    c.l1.insert(line, 0);
    finish_op(c, cyc(cfg_.llc.latency_cycles) + SimTime::from_ns(cfg_.dram_ns));
    return;
  }
  block(c, CoreWait::Load);
  line_waiters_[line].push_back(c.local);
  request(line, false);
}

void ComputeNode::do_store(Core& c, const TraceOp& op) {
  const Addr line = line_of(op.addr, cfg_.line_bytes);
  const std::uint32_t word = word_of(op.addr, cfg_.line_bytes, cfg_.word_bytes);
  const std::uint64_t value = store_value(c.gid, c.pc);
  const bool fresh = c.wait != CoreWait::SbFull;
  if (fresh) {
    ++c.stats.stores;
    if (op.remote) ++c.stats.remote_stores;
  } else {
    c.stats.sb_full_stall_ps += (cl_.engine().now() - c.wait_since).ps;
  }
  // Exclusive prefetch when the store is consumed; merged with any request
  // already outstanding for the line.
  if (op.remote && cfg_.protocol != Protocol::WT && !owns(line)) request(line, true);

  if (cfg_.coalescing_enabled && !c.sb.empty()) {
    auto& tail = c.sb.back();
    if (tail.line == line && tail.remote == op.remote && tail.repl_state == ReplState::NotSent && !tail.wt_sent) {
      tail.word_mask |= static_cast<std::uint8_t>(1u << word);
      tail.word_values[word] = value;
      ++c.stats.coalesced;
      finish_op(c, cyc(1));
      return;
    }
  }
  if (c.sb.size() >= cfg_.sb_entries) {
    block(c, CoreWait::SbFull);
    return;
  }
  StoreBufferSlot s;
  s.id = c.next_slot++;
  s.line = line;
  s.remote = op.remote;
  s.word_mask = static_cast<std::uint8_t>(1u << word);
  s.word_values[word] = value;
  s.enqueue_time = cl_.engine().now();
  const bool had_tail = !c.sb.empty();
  c.sb.push_back(s);
  c.stats.max_sb = std::max<std::uint64_t>(c.stats.max_sb, c.sb.size());
  if (cfg_.protocol == Protocol::Proactive) {
    if (cfg_.coalescing_enabled) {
      // The previous tail can no longer grow: its REPLs may go now.
      if (had_tail) maybe_issue_proactive(c, c.sb[c.sb.size() - 2]);
    } else {
      maybe_issue_proactive(c, c.sb.back());
    }
  }
  finish_op(c, cyc(1));
  try_drain(c);
}

void ComputeNode::do_sync(Core& c, const TraceOp& op) {
  if (!c.sb.empty()) {
    block(c, CoreWait::Drain);
    try_drain(c);
    return;
  }
  const Addr sl = op.kind == OpKind::Barrier ? barrier_line(op.sync_id, cfg_.line_bytes)
                                             : lock_line(op.sync_id, cfg_.line_bytes);
  if (!owns(sl)) {
    if (c.wait != CoreWait::SyncLine) block(c, CoreWait::SyncLine);
    line_waiters_[sl].push_back(c.local);
    request(sl, true);
    return;
  }
  if (c.wait == CoreWait::SyncLine) c.stats.sync_wait_ps += (cl_.engine().now() - c.wait_since).ps;
  llc_.touch(sl);
  switch (op.kind) {
    case OpKind::LockAcq:
      if (cl_.locks().acquire(op.sync_id, c.gid)) {
        finish_op(c, cyc(1));
      } else {
        block(c, CoreWait::Lock);
      }
      return;
    case OpKind::LockRel:
      cl_.locks().release(op.sync_id, c.gid);
      finish_op(c, cyc(1));
      return;
    case OpKind::Barrier:
      if (!c.barrier_arrived) {
        c.barrier_arrived = true;
        cl_.barriers().arrive(op.sync_id, c.gid);
      }
      if (c.barrier_released) {
        c.barrier_arrived = false;
        c.barrier_released = false;
        finish_op(c, cyc(1));
      } else {
        block(c, CoreWait::Barrier);
      }
      return;
    default:
      return;
  }
}

// ---- CN-side coherence agent ----

void ComputeNode::request(Addr line, bool exclusive) {
  auto it = mshr_.find(line);
  if (it != mshr_.end()) {
    if (exclusive && !it->second.exclusive) it->second.want_exclusive = true;
    return;
  }
  const auto* l = llc_.find(line);
  if (l && (!exclusive || l->state == Mesi::E || l->state == Mesi::M)) return;
  Message m;
  m.kind = exclusive ? MsgKind::RdX : MsgKind::Rd;
  m.src = cn_;
  m.dst = cl_.home_node(line);
  m.line = line;
  mshr_[line] = Mshr{exclusive, false};
  cl_.send(m);
}

void ComputeNode::drop_from_l1s(Addr line) {
  for (auto& c : cores_) c.l1.erase(line);
}

void ComputeNode::install(Addr line, LlcLine l) {
  auto evicted = llc_.insert(line, l);
  if (!evicted) return;
  ++stats_.evictions;
  const Addr victim = evicted->first;
  drop_from_l1s(victim);
  const LlcLine& v = evicted->second;
  if (v.remote && (v.state == Mesi::E || v.state == Mesi::M)) {
    Message wb;
    wb.kind = MsgKind::WB_Evict;
    wb.src = cn_;
    wb.dst = cl_.home_node(victim);
    wb.line = victim;
    wb.seq = received_grant(victim);
    wb.data = v.data;
    ++stats_.writebacks;
    cl_.send(wb);
  }
}

void ComputeNode::on_grant(const Message& m) {
  const Addr line = m.line;
  bool want_exclusive = false;
  if (auto it = mshr_.find(line); it != mshr_.end()) {
    want_exclusive = it->second.want_exclusive;
    mshr_.erase(it);
  }
  grant_seq_[line] = m.seq;
  install(line, LlcLine{m.kind == MsgKind::RdX_ACK ? Mesi::E : Mesi::S, true, m.data});

  // Serve waiters before any deferred invalidation can take the line away.
  auto wit = line_waiters_.find(line);
  if (wit != line_waiters_.end()) {
    std::vector<std::uint32_t> waiters = std::move(wit->second);
    line_waiters_.erase(wit);
    for (auto local : waiters) {
      auto& c = cores_[local];
      if (c.wait == CoreWait::Load) {
        c.stats.load_latency_ps += (cl_.engine().now() - c.wait_since).ps;
        c.l1.insert(line, 0);
        finish_op(c, cyc(cfg_.l1.latency_cycles));
      } else if (c.wait == CoreWait::SyncLine) {
        step(c);
      }
    }
  }
  drain_all();
  if (want_exclusive && !owns(line)) request(line, true);

  auto dit = deferred_inv_.find(line);
  if (dit != deferred_inv_.end()) {
    std::vector<Message> ready;
    auto& list = dit->second;
    for (auto it = list.begin(); it != list.end();) {
      if (it->seq <= grant_seq_[line]) {
        ready.push_back(*it);
        it = list.erase(it);
      } else {
        ++it;
      }
    }
    if (list.empty()) deferred_inv_.erase(dit);
    for (const auto& inv : ready) process_inv(inv);
  }
}

void ComputeNode::on_inv(const Message& m) {
  if (received_grant(m.line) < m.seq) {
    // The grant being revoked is still on its way here.
    ++stats_.deferred_invs;
    deferred_inv_[m.line].push_back(m);
    return;
  }
  process_inv(m);
}

void ComputeNode::process_inv(const Message& m) {
  Message ack;
  ack.kind = MsgKind::Inv_ACK;
  ack.src = cn_;
  ack.dst = m.src;
  ack.line = m.line;
  ack.txn = m.txn;
  if (auto* l = llc_.find(m.line)) {
    if (l->state == Mesi::E || l->state == Mesi::M) {
      ack.flag = true;
      ack.data = l->data;
    }
    if (m.flag) {
      l->state = Mesi::S;
    } else {
      llc_.erase(m.line);
      drop_from_l1s(m.line);
    }
  }
  cl_.send(ack);
}

// ---- store buffer and replication ----

void ComputeNode::maybe_issue_proactive(Core& c, StoreBufferSlot& s) {
  if (paused_ || !s.remote || s.repl_state != ReplState::NotSent) return;
  if (&s == &c.sb.front()) {
    issue_repl(c, s, true);
    return;
  }
  const auto k = static_cast<std::uint32_t>(std::popcount(s.word_mask));
  const auto group = cl_.replica_map().replicas(s.line);
  for (auto r : group) {
    if (credits_[r] < k) return;  // left for the head
  }
  for (auto r : group) credits_[r] -= k;
  s.credits_held = true;
  issue_repl(c, s, false);
}

void ComputeNode::issue_repl(Core& c, StoreBufferSlot& s, bool at_head) {
  s.replicas = cl_.replica_map().replicas(s.line);
  s.acked = 0;
  s.epoch = epoch_;
  s.txn = next_txn_++;
  s.at_head_repl = at_head;
  s.repl_state = ReplState::ReplsSent;
  ++stats_.repl_txns;
  if (at_head) ++stats_.repl_at_head;
  const auto k = static_cast<std::uint32_t>(std::popcount(s.word_mask));
  for (auto r : s.replicas) {
    Message m;
    m.kind = MsgKind::REPL;
    m.src = cn_;
    m.dst = r;
    m.size_bytes = repl_size(k);
    m.line = s.line;
    m.mask = s.word_mask;
    m.data = s.word_values;
    m.txn = s.txn;
    m.epoch = s.epoch;
    m.core = c.gid;
    m.flag = at_head;
    cl_.send(m);
  }
  cl_.oracle().on_repl_issued(s.line, s.word_mask, s.word_values, cfg_.word_bytes);
}

void ComputeNode::on_repl_ack(const Message& m) {
  if (m.epoch != epoch_) return;  // answers a transaction re-issued at RecovEnd
  auto& c = cores_.at(m.core - cn_ * cfg_.cores_per_cn);
  auto it = std::find_if(c.sb.begin(), c.sb.end(), [&](const StoreBufferSlot& s) {
    return s.txn == m.txn && s.epoch == m.epoch && s.repl_state == ReplState::ReplsSent;
  });
  if (it == c.sb.end()) {
    throw ProtocolViolation("CN" + std::to_string(cn_) + " REPL_ACK for unknown txn " + std::to_string(m.txn));
  }
  if (std::find(it->replicas.begin(), it->replicas.end(), m.src) == it->replicas.end()) {
    throw ProtocolViolation("REPL_ACK from CN" + std::to_string(m.src) + " which is not a replica");
  }
  const std::uint64_t bit = 1ULL << m.src;
  if (it->acked & bit) throw DuplicateAck("duplicate REPL_ACK from CN" + std::to_string(m.src));
  it->acked |= bit;
  if (static_cast<std::size_t>(std::popcount(it->acked)) == it->replicas.size()) {
    it->repl_state = ReplState::AcksComplete;
    if (&*it == &c.sb.front()) try_drain(c);
  }
}

void ComputeNode::on_wt_ack(const Message& m) {
  auto& c = cores_.at(m.core - cn_ * cfg_.cores_per_cn);
  if (c.sb.empty() || !c.sb.front().wt_sent || c.sb.front().id != m.txn) {
    throw ProtocolViolation("unexpected WT_ACK at CN" + std::to_string(cn_));
  }
  c.sb.pop_front();
  ++c.stats.commits;
  ++c.stats.remote_commits;
  c.drain_free = cl_.engine().now();
  after_slot_freed(c);
  cl_.on_remote_commit();
}

void ComputeNode::drain_all() {
  for (auto& c : cores_) try_drain(c);
}

void ComputeNode::try_drain(Core& c) {
  if (crashed_ || paused_ || c.sb.empty()) return;
  const SimTime now = cl_.engine().now();
  if (now < c.drain_free) {
    if (!c.drain_event) {
      c.drain_event = true;
      cl_.engine().schedule(c.drain_free, cn_, [this, &c] {
        c.drain_event = false;
        try_drain(c);
      });
    }
    return;
  }
  auto& h = c.sb.front();
  if (!h.remote) {
    commit_head(c);
    return;
  }
  if (cfg_.protocol == Protocol::WT) {
    if (!h.wt_sent) {
      h.wt_sent = true;
      ++stats_.wt_stores;
      Message m;
      m.kind = MsgKind::WT_Store;
      m.src = cn_;
      m.dst = cl_.home_node(h.line);
      m.line = h.line;
      m.mask = h.word_mask;
      m.data = h.word_values;
      m.core = c.gid;
      m.txn = h.id;
      cl_.send(m);
    }
    return;
  }
  const bool owned = owns(h.line);
  if (!h.reached_head) {
    h.reached_head = true;
    ++stats_.heads;
    if (!owned) ++stats_.heads_unowned;
  }
  if (!owned) request(h.line, true);
  if (replicates(cfg_.protocol) && h.repl_state == ReplState::NotSent) {
    if (cfg_.protocol != Protocol::Baseline || owned) issue_repl(c, h, true);
  }
  const auto gate = commit_gate(cfg_.protocol, true, h.repl_state, owned ? CohState::Complete : CohState::InFlight);
  if (gate.ready) commit_head(c);
}

void ComputeNode::commit_head(Core& c) {
  StoreBufferSlot h = std::move(c.sb.front());
  c.sb.pop_front();
  const SimTime now = cl_.engine().now();
  if (h.remote) {
    // Independent re-check of the commit conditions from raw state.
    const bool owned = owns(h.line);
    bool ok = owned;
    if (replicates(cfg_.protocol)) {
      ok = ok && !h.replicas.empty() && static_cast<std::size_t>(std::popcount(h.acked)) == h.replicas.size();
    }
    if (!ok) ++stats_.gating_violations;

    if (replicates(cfg_.protocol)) {
      ++commit_seq_;
      const auto k = static_cast<std::uint32_t>(std::popcount(h.word_mask));
      for (auto r : h.replicas) {
        Message v;
        v.kind = MsgKind::VAL;
        v.src = cn_;
        v.dst = r;
        v.line = h.line;
        v.txn = h.txn;
        v.epoch = h.epoch;
        v.ts = ts_.next(r);
        v.seq = received_grant(h.line);
        v.cseq = commit_seq_;
        v.core = c.gid;
        cl_.send(v);
        if (h.credits_held) credits_[r] += k;
        ++stats_.val_fanout;
      }
    }
    auto* l = llc_.touch(h.line);
    if (l) {
      for (std::uint32_t w = 0; w < kMaxWords; ++w) {
        if (h.word_mask & (1u << w)) l->data[w] = h.word_values[w];
      }
      l->state = Mesi::M;
    }
    cl_.oracle().on_commit(c.gid, h.line, h.word_mask, h.word_values, now, cfg_.word_bytes);
    ++c.stats.remote_commits;
  } else {
    if (auto* l = llc_.touch(h.line)) {
      l->state = Mesi::M;
    } else {
      install(h.line, LlcLine{Mesi::M, false, {}});
    }
  }
  c.l1.insert(h.line, 0);
  ++c.stats.commits;
  c.drain_free = now + cyc(1);
  after_slot_freed(c);
  if (h.remote) cl_.on_remote_commit();
}

void ComputeNode::after_slot_freed(Core& c) {
  if (c.wait == CoreWait::SbFull) {
    schedule_step(c, SimTime::zero());
    c.wait = CoreWait::SbFull;  // keeps the stall accounting in do_store
  } else if (c.wait == CoreWait::Drain && c.sb.empty()) {
    c.stats.sync_wait_ps += (cl_.engine().now() - c.wait_since).ps;
    schedule_step(c, SimTime::zero());
  }
  if (!c.sb.empty()) try_drain(c);
}

// ---- failure and recovery ----

void ComputeNode::crash() {
  crashed_ = true;
  lu_->crash();
}

void ComputeNode::pause() { paused_ = true; }

void ComputeNode::resume(std::uint32_t epoch) {
  paused_ = false;
  epoch_ = epoch;
  std::fill(credits_.begin(), credits_.end(), credit_init_);
  for (auto& c : cores_) {
    // Unvalidated transactions restart under the new replica map.
    for (auto& s : c.sb) {
      if (s.repl_state == ReplState::ReplsSent || s.repl_state == ReplState::AcksComplete) {
        s.repl_state = ReplState::NotSent;
        s.replicas.clear();
        s.acked = 0;
        s.credits_held = false;
        ++stats_.repl_reissued;
      }
    }
  }
  for (auto& c : cores_) {
    if (cfg_.protocol == Protocol::Proactive) {
      const std::size_t sealed = cfg_.coalescing_enabled && !c.sb.empty() ? c.sb.size() - 1 : c.sb.size();
      for (std::size_t i = 1; i < sealed; ++i) maybe_issue_proactive(c, c.sb[i]);
    }
    if (c.resume_pending) {
      c.resume_pending = false;
      schedule_step(c, SimTime::zero());
    }
    try_drain(c);
  }
}

void ComputeNode::handle(const Message& m) {
  if (crashed_) return;
  switch (m.kind) {
    case MsgKind::Rd_ACK:
    case MsgKind::RdX_ACK: on_grant(m); return;
    case MsgKind::Inv: on_inv(m); return;
    case MsgKind::REPL: lu_->on_repl(m); return;
    case MsgKind::VAL: lu_->on_val(m); return;
    case MsgKind::REPL_ACK: on_repl_ack(m); return;
    case MsgKind::WT_ACK: on_wt_ack(m); return;
    case MsgKind::FetchLatestVers: lu_->on_fetch(m); return;
    case MsgKind::ClearGrant: lu_->on_clear_grant(m); return;
    case MsgKind::Interrupt: {
      pause();
      Message r;
      r.kind = MsgKind::InterruptResp;
      r.src = cn_;
      r.dst = m.src;
      r.txn = m.txn;
      cl_.send(r);
      return;
    }
    case MsgKind::RecovEnd: {
      lu_->recov_end(m.epoch);
      resume(m.epoch);
      Message r;
      r.kind = MsgKind::RecovEndResp;
      r.src = cn_;
      r.dst = m.src;
      r.txn = m.txn;
      cl_.send(r);
      return;
    }
    default:
      throw ProtocolViolation("CN" + std::to_string(cn_) + " cannot handle " + std::string(to_string(m.kind)));
  }
}

}  // namespace cxlsim
