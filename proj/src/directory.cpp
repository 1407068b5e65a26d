#include "cxlsim/directory.hpp"

#include <algorithm>
#include <bit>

#include "cxlsim/errors.hpp"

namespace cxlsim {

MemoryNode::MemoryNode(std::uint32_t index, Engine& engine, const ClusterConfig& cfg, Send send,
                       MemoryNodeHooks hooks)
    : index_(index), engine_(engine), cfg_(cfg), send_(std::move(send)), hooks_(std::move(hooks)) {}

const DirectoryEntry* MemoryNode::entry(Addr line) const {
  auto it = entries_.find(line);
  return it == entries_.end() ? nullptr : &it->second;
}

LineData MemoryNode::memory(Addr line) const {
  auto it = entries_.find(line);
  return it == entries_.end() ? LineData{} : it->second.data;
}

std::size_t MemoryNode::busy_lines() const {
  std::size_t n = 0;
  for (const auto& [a, l] : lines_) n += l.busy.has_value() ? 1 : 0;
  return n;
}

void MemoryNode::handle(const Message& m) {
  switch (m.kind) {
    case MsgKind::Rd:
    case MsgKind::RdX:
    case MsgKind::WT_Store:
      ++stats_.requests;
      if (dead(m.src)) return;
      enqueue(m);
      return;
    case MsgKind::Inv_ACK: on_inv_ack(m); return;
    case MsgKind::WB_Evict: on_wb_evict(m); return;
    case MsgKind::LogDump: on_log_dump(m); return;
    case MsgKind::DumpDone: on_dump_done(m); return;
    case MsgKind::DumpNotice: on_dump_notice(m); return;
    case MsgKind::InitRecov: {
      const std::vector<std::uint32_t> victims = m.bulk ? m.bulk->nodes : std::vector<std::uint32_t>{};
      recover(victims, m.src, m.txn);
      return;
    }
    case MsgKind::FetchLatestVersResp: on_fetch_resp(m); return;
    default:
      throw ProtocolViolation("MN" + std::to_string(index_) + " cannot handle " + std::string(to_string(m.kind)));
  }
}

void MemoryNode::enqueue(const Message& m) {
  auto& l = lines_[m.line];
  l.queue.push_back(m);
  stats_.max_queue = std::max<std::uint64_t>(stats_.max_queue, l.queue.size());
  if (!l.busy) start_next(m.line);
}

void MemoryNode::start_next(Addr line) {
  auto& l = lines_[line];
  while (!l.busy && !l.queue.empty()) {
    Message req = l.queue.front();
    l.queue.pop_front();
    if (dead(req.src)) continue;
    start(line, req);
  }
}

void MemoryNode::send_inv(Addr line, std::uint32_t cn, std::uint64_t seq, std::uint64_t txn, bool downgrade) {
  Message inv;
  inv.kind = MsgKind::Inv;
  inv.src = node();
  inv.dst = cn;
  inv.line = line;
  inv.seq = seq;
  inv.txn = txn;
  inv.flag = downgrade;
  ++stats_.invalidations;
  send_(inv);
}

void MemoryNode::start(Addr line, const Message& req) {
  auto& l = lines_[line];
  auto& e = entries_[line];
  Txn t;
  t.id = next_txn_++;
  t.req = req;
  const std::uint32_t r = req.src;
  const bool exclusive = req.kind != MsgKind::Rd;

  if (e.owned && e.owner == r) {
    // The requester gave the line up; its WB_Evict is still on the wire.
    t.need_owner_data = true;
  } else if (e.owned) {
    t.downgrade = !exclusive;
    t.waiting.insert(e.owner);
    if (dead(e.owner)) ++stats_.held_for_crashed_owner;
  } else if (exclusive) {
    for (const auto& [cn, seq] : e.sharers) {
      if (cn == r && req.kind == MsgKind::RdX) continue;
      t.waiting.insert(cn);
    }
  }
  l.busy = std::move(t);
  auto& tx = *l.busy;
  if (e.owned && e.owner != r) {
    send_inv(line, e.owner, e.owner_seq, tx.id, tx.downgrade);
  } else if (!e.owned && exclusive) {
    for (auto cn : tx.waiting) send_inv(line, cn, e.sharers.at(cn), tx.id, false);
  }
  maybe_finish(line);
}

void MemoryNode::maybe_finish(Addr line) {
  auto& l = lines_[line];
  if (!l.busy || l.busy->finishing) return;
  if (!l.busy->waiting.empty() || l.busy->need_owner_data) return;
  l.busy->finishing = true;
  const std::uint64_t id = l.busy->id;
  engine_.schedule_after(SimTime::from_ns(cfg_.dram_ns), node(), [this, line, id] {
    auto& ln = lines_[line];
    if (ln.busy && ln.busy->id == id) finish(line);
  });
}

void MemoryNode::finish(Addr line) {
  auto& l = lines_[line];
  auto& e = entries_[line];
  Txn t = std::move(*l.busy);
  const std::uint32_t r = t.req.src;
  const bool requester_dead = dead(r);

  if (t.req.kind == MsgKind::WT_Store) {
    for (std::uint32_t w = 0; w < kMaxWords; ++w) {
      if (t.req.mask & (1u << w)) e.data[w] = t.req.data[w];
    }
    e.sharers.clear();
    ++stats_.wt_stores;
    if (hooks_.on_wt_apply) hooks_.on_wt_apply(t.req.core, line, t.req.mask, t.req.data);
    // The line stays busy until the persist completes.
    const Message req = t.req;
    engine_.schedule_after(SimTime::from_ns(cfg_.pmem_ns), node(), [this, line, req] {
      Message ack;
      ack.kind = MsgKind::WT_ACK;
      ack.src = node();
      ack.dst = req.src;
      ack.line = line;
      ack.txn = req.txn;
      ack.core = req.core;
      if (!dead(req.src)) send_(ack);
      lines_[line].busy.reset();
      start_next(line);
    });
    return;
  }

  l.busy.reset();
  if (!requester_dead) {
    Message resp;
    resp.src = node();
    resp.dst = r;
    resp.line = line;
    resp.core = t.req.core;
    resp.data = e.data;
    resp.seq = ++e.grants;
    if (t.req.kind == MsgKind::Rd) {
      resp.kind = MsgKind::Rd_ACK;
      e.sharers[r] = resp.seq;
    } else {
      resp.kind = MsgKind::RdX_ACK;
      e.sharers.clear();
      e.owned = true;
      e.owner = r;
      e.owner_seq = resp.seq;
    }
    send_(resp);
  }
  start_next(line);
}

void MemoryNode::on_inv_ack(const Message& m) {
  auto lit = lines_.find(m.line);
  if (lit == lines_.end() || !lit->second.busy || lit->second.busy->id != m.txn) {
    throw ProtocolViolation("MN" + std::to_string(index_) + " got Inv_ACK for idle txn " + std::to_string(m.txn));
  }
  auto& t = *lit->second.busy;
  auto& e = entries_[m.line];
  const std::uint32_t x = m.src;
  if (!t.waiting.erase(x)) return;  // already dropped by recovery
  if (e.owned && e.owner == x) {
    if (m.flag) {
      for (std::uint32_t w = 0; w < kMaxWords; ++w) e.data[w] = m.data[w];
      e.owned = false;
      if (t.downgrade) e.sharers[x] = e.owner_seq;
    } else {
      // Evicted before the Inv arrived: the data is in its WB_Evict.
      t.need_owner_data = true;
    }
  } else {
    e.sharers.erase(x);
  }
  maybe_finish(m.line);
}

void MemoryNode::on_wb_evict(const Message& m) {
  auto& e = entries_[m.line];
  if (!e.owned || e.owner != m.src || e.owner_seq != m.seq) {
    ++stats_.stale_writebacks;
    return;
  }
  e.data = m.data;
  e.owned = false;
  auto lit = lines_.find(m.line);
  if (lit != lines_.end() && lit->second.busy) {
    lit->second.busy->need_owner_data = false;
    maybe_finish(m.line);
  }
}

// ---- persisted log region and dump coordination ----

void MemoryNode::apply_log_dump(std::uint32_t unit, std::uint64_t round, std::vector<LogRecord> records) {
  ++stats_.persisted_segments;
  stats_.persisted_entries += records.size();
  persisted_.push_back(PersistedSegment{unit, round, std::move(records)});
}

std::vector<LogRecord> MemoryNode::query_persisted(Addr line) const {
  std::vector<LogRecord> out;
  for (auto seg = persisted_.rbegin(); seg != persisted_.rend(); ++seg) {
    for (auto e = seg->records.rbegin(); e != seg->records.rend(); ++e) {
      if (e->line == line) out.push_back(*e);
    }
  }
  return out;
}

void MemoryNode::on_log_dump(const Message& m) {
  if (!m.bulk) return;  // payload-less flit of a multi-flit segment
  apply_log_dump(m.src, m.txn, m.bulk->segment);
  Message n;
  n.kind = MsgKind::DumpNotice;
  n.src = node();
  n.dst = cfg_.num_cns;  // MN0 coordinates
  n.txn = m.txn;
  n.count = m.src;
  send_(n);
}

void MemoryNode::begin_dump_round(std::uint64_t round, const std::vector<std::uint32_t>& units) {
  dump_ = DumpRound{};
  dump_->id = round;
  dump_->expected.insert(units.begin(), units.end());
}

void MemoryNode::on_dump_done(const Message& m) {
  if (!dump_ || dump_->id != m.txn) return;
  if (dump_->done.insert(m.src).second) {
    dump_->segments_expected += m.count;
    if (m.bulk) dump_->marks[m.src] = m.bulk->marks;
  }
  check_dump_round();
}

void MemoryNode::on_dump_notice(const Message& m) {
  if (!dump_ || dump_->id != m.txn) return;
  ++dump_->notices;
  check_dump_round();
}

void MemoryNode::check_dump_round() {
  if (dump_->done != dump_->expected || dump_->notices < dump_->segments_expected) return;
  const std::size_t n = cfg_.num_cns;
  auto grant = std::make_shared<Bulk>();
  grant->marks.assign(n * n, 0);
  for (const auto& [u, row] : dump_->marks) {
    for (std::size_t s = 0; s < n && s < row.size(); ++s) grant->marks[u * n + s] = row[s];
  }
  // A unit only consults the rows of units sharing a replica group with it.
  const std::uint64_t rows = std::min<std::uint64_t>(n, 2ULL * cfg_.replication_factor - 1);
  for (auto u : dump_->expected) {
    Message g;
    g.kind = MsgKind::ClearGrant;
    g.src = node();
    g.dst = u;
    g.txn = dump_->id;
    g.size_bytes = round_up_flits(8 + 8 * rows * n);
    g.bulk = grant;
    if (!dead(u)) send_(g);
  }
  dump_.reset();
}

// ---- line repair after a crash ----

void MemoryNode::recover(const std::vector<std::uint32_t>& victims, NodeId reply_to, std::uint64_t recovery_id) {
  Recovery rec;
  rec.id = recovery_id;
  rec.reply_to = reply_to;
  rec.victims.insert(victims.begin(), victims.end());

  // A dump round a victim never finished cannot complete; survivors keep
  // their logs and the next round starts over.
  if (dump_) {
    bool abort = false;
    for (auto v : rec.victims) {
      if (dump_->expected.count(v) && !dump_->done.count(v)) abort = true;
    }
    if (abort) {
      for (auto u : dump_->expected) {
        if (rec.victims.count(u) || dead(u)) continue;
        Message g;
        g.kind = MsgKind::ClearGrant;
        g.src = node();
        g.dst = u;
        g.txn = dump_->id;
        g.flag = true;
        send_(g);
      }
      dump_.reset();
    }
  }

  std::map<std::uint32_t, std::vector<FetchRequest>> fetches;
  for (auto& [line, e] : entries_) {
    for (auto v : rec.victims) {
      if (e.sharers.erase(v)) ++stats_.sharer_bits_removed;
    }
    auto lit = lines_.find(line);
    if (lit != lines_.end()) {
      auto& l = lit->second;
      std::erase_if(l.queue, [&](const Message& q) { return rec.victims.count(q.src) > 0; });
      if (l.busy) {
        for (auto v : rec.victims) l.busy->waiting.erase(v);
      }
    }
    if (e.owned && rec.victims.count(e.owner)) {
      rec.lines.push_back(line);
      rec.owner_of[line] = {e.owner, e.owner_seq};
      const auto group = hooks_.replicas ? hooks_.replicas(line) : std::vector<std::uint32_t>{};
      for (std::uint32_t rank = 0; rank < group.size(); ++rank) {
        const auto u = group[rank];
        if (rec.victims.count(u) || dead(u)) continue;
        fetches[u].push_back(FetchRequest{line, e.owner, e.owner_seq});
      }
    } else if (lit != lines_.end() && lit->second.busy) {
      maybe_finish(line);
    }
  }

  recovery_ = std::move(rec);
  for (auto& [u, reqs] : fetches) {
    auto bulk = std::make_shared<Bulk>();
    bulk->requests = std::move(reqs);
    Message f;
    f.kind = MsgKind::FetchLatestVers;
    f.src = node();
    f.dst = u;
    f.txn = recovery_id;
    f.size_bytes = round_up_flits(kFlitBytes + bulk->requests.size() * 8);
    f.bulk = std::move(bulk);
    ++recovery_->outstanding;
    ++stats_.fetches_sent;
    send_(f);
  }
  if (recovery_->outstanding == 0) complete_recovery();
}

void MemoryNode::on_fetch_resp(const Message& m) {
  if (!recovery_ || recovery_->id != m.txn) return;
  if (m.bulk) {
    for (const auto& r : m.bulk->replies) {
      const auto group = hooks_.replicas ? hooks_.replicas(r.line) : std::vector<std::uint32_t>{};
      auto it = std::find(group.begin(), group.end(), m.src);
      const auto rank = static_cast<std::uint32_t>(it - group.begin());
      recovery_->replies[{r.line, r.word}].emplace_back(rank, r.versions);
    }
  }
  if (--recovery_->outstanding == 0) complete_recovery();
}

void MemoryNode::complete_recovery() {
  Recovery rec = std::move(*recovery_);
  recovery_.reset();
  const std::uint32_t words = cfg_.words_per_line();
  for (Addr line : rec.lines) {
    auto& e = entries_[line];
    const auto [owner, grant] = rec.owner_of[line];
    RepairInfo info{owner, grant, 0, 0, 0};
    std::vector<LogRecord> persisted;
    bool persisted_loaded = false;
    for (std::uint32_t w = 0; w < words; ++w) {
      const auto bit = static_cast<std::uint8_t>(1u << w);
      auto rit = rec.replies.find({line, static_cast<std::uint8_t>(w)});
      if (rit != rec.replies.end() && !rit->second.empty()) {
        auto& lists = rit->second;
        bool agree = true;
        for (const auto& [rank, v] : lists) agree = agree && v.front().value == lists.front().second.front().value;
        if (!agree) {
          info.divergent |= bit;
          // DRAM-resident head first, then the longer list, then lower rank.
          std::sort(lists.begin(), lists.end(), [](const auto& a, const auto& b) {
            if (a.second.front().from_dram != b.second.front().from_dram) return a.second.front().from_dram;
            if (a.second.size() != b.second.size()) return a.second.size() > b.second.size();
            return a.first < b.first;
          });
        }
        e.data[w] = lists.front().second.front().value;
        info.from_logs |= bit;
        continue;
      }
      if (!persisted_loaded) {
        persisted = query_persisted(line);
        persisted_loaded = true;
      }
      for (const auto& r : persisted) {
        if (r.word == w && r.requester_cn == owner && r.grant == grant) {
          e.data[w] = r.value;
          info.from_persisted |= bit;
          break;
        }
      }
    }
    e.owned = false;
    e.sharers.clear();
    ++stats_.repaired_lines;
    stats_.repaired_words_logs += static_cast<std::uint64_t>(std::popcount(info.from_logs));
    stats_.repaired_words_persisted += static_cast<std::uint64_t>(std::popcount(info.from_persisted));
    stats_.divergent_words += static_cast<std::uint64_t>(std::popcount(info.divergent));
    if (hooks_.on_repair) hooks_.on_repair(line, e.data, info);

    auto lit = lines_.find(line);
    if (lit != lines_.end() && lit->second.busy) {
      // Whatever the transaction waited for from the dead owner is now in memory.
      lit->second.busy->need_owner_data = false;
      maybe_finish(line);
    }
  }

  Message resp;
  resp.kind = MsgKind::InitRecovResp;
  resp.src = node();
  resp.dst = rec.reply_to;
  resp.txn = rec.id;
  resp.count = static_cast<std::uint32_t>(rec.lines.size());
  send_(resp);
}

}  // namespace cxlsim
