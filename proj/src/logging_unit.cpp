#include "cxlsim/logging_unit.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "cxlsim/errors.hpp"

namespace cxlsim {

LoggingUnit::LoggingUnit(std::uint32_t cn, Engine& engine, const ClusterConfig& cfg, Send send)
    : cn_(cn),
      engine_(engine),
      cfg_(cfg),
      send_(std::move(send)),
      sram_capacity_(static_cast<std::uint32_t>(cfg.sram_log_bytes / kSramEntryBytes)) {}

std::uint64_t LoggingUnit::compressed_bytes(const std::vector<LogRecord>& seg) const {
  if (compressor_) return compressor_(seg);
  if (seg.empty()) return 0;
  const double raw = static_cast<double>(seg.size() * kDramEntryBytes);
  return static_cast<std::uint64_t>(std::ceil(raw / cfg_.compression_ratio - 1e-9));
}

void LoggingUnit::note_sram() {
  stats_.max_sram_entries = std::max<std::uint64_t>(stats_.max_sram_entries, sram_used_);
}

void LoggingUnit::on_repl(const Message& m) {
  if (crashed_) return;
  ++stats_.repls;
  if (m.epoch < epoch_) {
    ++stats_.stale_repls;
    return;
  }
  const auto k = static_cast<std::uint32_t>(std::popcount(m.mask));
  if (!backlog_.empty() || sram_used_ + k > sram_capacity_) {
    ++stats_.backpressured;
    // Head-of-SB REPLs jump ahead of proactive ones: only they can unblock a
    // commit, and commits are what free SRAM space.
    if (m.flag) {
      auto it = std::find_if(backlog_.begin(), backlog_.end(), [](const Message& q) { return !q.flag; });
      backlog_.insert(it, m);
    } else {
      backlog_.push_back(m);
    }
    process_backlog();
    return;
  }
  accept(m);
}

void LoggingUnit::accept(const Message& m) {
  Group g;
  for (std::uint32_t w = 0; w < kMaxWords; ++w) {
    if (m.mask & (1u << w)) {
      g.entries.push_back(LogRecord{m.src, m.core, m.line, static_cast<std::uint8_t>(w), m.data[w], 0});
    }
  }
  sram_used_ += static_cast<std::uint32_t>(g.entries.size());
  stats_.entries_logged += g.entries.size();
  note_sram();
  groups_[GroupKey{m.src, m.txn, m.epoch}] = std::move(g);

  const SimTime start = std::max(engine_.now(), sram_port_free_);
  sram_port_free_ = start + SimTime::from_ns(cfg_.sram_access_ns);
  Message ack;
  ack.kind = MsgKind::REPL_ACK;
  ack.src = cn_;
  ack.dst = m.src;
  ack.txn = m.txn;
  ack.epoch = m.epoch;
  ack.core = m.core;
  ack.line = m.line;
  engine_.schedule(sram_port_free_, cn_, [this, ack] {
    if (!crashed_) send_(ack);
  });
}

void LoggingUnit::process_backlog() {
  while (!backlog_.empty()) {
    const Message& m = backlog_.front();
    const auto k = static_cast<std::uint32_t>(std::popcount(m.mask));
    if (sram_used_ + k > sram_capacity_) return;
    Message copy = m;
    backlog_.pop_front();
    accept(copy);
  }
}

void LoggingUnit::on_val(const Message& m) {
  if (crashed_) return;
  ++stats_.vals;
  auto it = groups_.find(GroupKey{m.src, m.txn, m.epoch});
  if (it == groups_.end() || it->second.valid) {
    throw UnmatchedVal("CN" + std::to_string(cn_) + " got VAL ts=" + std::to_string(m.ts) + " from CN" +
                       std::to_string(m.src) + " txn " + std::to_string(m.txn) + " with no pending REPL");
  }
  it->second.valid = true;
  it->second.ts = m.ts;
  for (auto& e : it->second.entries) {
    e.grant = m.seq;
    e.commit_seq = m.cseq;
  }
  waiting_[m.src][m.ts] = it->first;
  drain_source(m.src);
}

void LoggingUnit::drain_source(std::uint32_t src) {
  auto& next = next_expected_[src];
  if (next == 0) next = 1;
  auto& pending = waiting_[src];
  bool moved = false;
  while (!pending.empty() && pending.begin()->first == next) {
    const GroupKey key = pending.begin()->second;
    pending.erase(pending.begin());
    auto git = groups_.find(key);
    const std::uint64_t ts = git->second.ts;
    auto& last = last_migrated_ts_[src];
    if (ts <= last) ++stats_.ts_inversions;
    for (const auto& e : git->second.entries) {
      dram_.push_back(e);
      shadow_ts_.push_back(ts);
    }
    last = ts;
    stats_.migrated += git->second.entries.size();
    sram_used_ -= static_cast<std::uint32_t>(git->second.entries.size());
    groups_.erase(git);
    ++next;
    moved = true;
  }
  if (!moved) return;
  stats_.max_dram_bytes = std::max(stats_.max_dram_bytes, dram_bytes());
  if (dram_bytes() > cfg_.dram_log_bytes) {
    throw DramLogOverflow("CN" + std::to_string(cn_) + " DRAM log holds " + std::to_string(dram_bytes()) +
                          " bytes, capacity " + std::to_string(cfg_.dram_log_bytes));
  }
  process_backlog();
}

bool LoggingUnit::start_dump_round(std::uint64_t round, const Responsible& responsible, bool all,
                                   NodeId coordinator) {
  if (crashed_ || round_) return false;
  round_ = Round{round, dram_.size(), responsible, all};
  ++stats_.dump_rounds;

  // Per source the log is in commit order, so the last entry below the
  // watermark bounds everything this unit holds from that source.
  auto marks = std::make_shared<Bulk>();
  marks->marks.assign(cfg_.num_cns, 0);
  std::map<std::uint32_t, std::vector<LogRecord>> by_mn;
  for (std::size_t i = 0; i < round_->watermark; ++i) {
    const auto& e = dram_[i];
    marks->marks[e.requester_cn] = std::max(marks->marks[e.requester_cn], e.commit_seq);
    if (!all && responsible(e.line) != cn_) continue;
    by_mn[home_mn(e.line, cfg_.line_bytes, cfg_.num_mns)].push_back(e);
  }
  std::uint32_t segments = 0;
  for (auto& [mn, seg] : by_mn) {
    const std::uint64_t bytes = compressed_bytes(seg);
    const auto msgs = static_cast<std::uint32_t>(std::max<std::uint64_t>(1, (bytes + kFlitBytes - 1) / kFlitBytes));
    stats_.dumped_entries += seg.size();
    auto bulk = std::make_shared<Bulk>();
    bulk->segment = std::move(seg);
    for (std::uint32_t i = 0; i < msgs; ++i) {
      Message d;
      d.kind = MsgKind::LogDump;
      d.src = cn_;
      d.dst = cfg_.num_cns + mn;
      d.txn = round;
      d.count = msgs;
      // The segment rides on the last flit; the others only carry bytes.
      if (i + 1 == msgs) d.bulk = bulk;
      send_(d);
      ++stats_.dump_messages;
    }
    ++segments;
  }
  Message done;
  done.kind = MsgKind::DumpDone;
  done.src = cn_;
  done.dst = coordinator;
  done.txn = round;
  done.count = segments;
  done.size_bytes = round_up_flits(8 + 8 * cfg_.num_cns);
  done.bulk = std::move(marks);
  send_(done);
  return true;
}

void LoggingUnit::on_clear_grant(const Message& m) {
  if (crashed_ || !round_ || round_->id != m.txn) return;
  if (!m.flag && m.bulk) {  // flag marks an aborted round
    const auto& marks = m.bulk->marks;
    const std::size_t n = cfg_.num_cns;
    std::vector<LogRecord> kept;
    std::vector<std::uint64_t> kept_ts;
    std::uint64_t cleared = 0;
    for (std::size_t i = 0; i < dram_.size(); ++i) {
      const auto& e = dram_[i];
      bool drop = false;
      if (i < round_->watermark) {
        if (round_->all) {
          drop = true;
        } else {
          const std::uint32_t r = round_->responsible(e.line);
          const std::size_t k = static_cast<std::size_t>(r) * n + e.requester_cn;
          drop = r == cn_ || (k < marks.size() && e.commit_seq <= marks[k]);
        }
      }
      if (drop) {
        ++cleared;
      } else {
        kept.push_back(e);
        kept_ts.push_back(shadow_ts_[i]);
      }
    }
    dram_ = std::move(kept);
    shadow_ts_ = std::move(kept_ts);
    stats_.cleared_entries += cleared;
  }
  round_.reset();
}

std::vector<FetchReply> LoggingUnit::traverse(const std::vector<FetchRequest>& reqs, SimTime* cost) {
  ++stats_.traversals;
  std::map<Addr, FetchRequest> wanted;
  for (const auto& r : reqs) wanted[r.line] = r;
  std::map<std::pair<Addr, std::uint8_t>, std::vector<Version>> found;

  auto consider = [&](const LogRecord& e, bool from_dram) {
    auto it = wanted.find(e.line);
    if (it == wanted.end()) return;
    if (e.requester_cn != it->second.owner || e.grant != it->second.grant) return;
    found[{e.line, e.word}].push_back(Version{e.value, from_dram});
  };

  // Validated-but-waiting SRAM groups are newer than anything their source
  // has in DRAM; walk each source's queue from the highest timestamp down.
  std::uint64_t scanned = 0;
  for (const auto& [src, q] : waiting_) {
    for (auto it = q.rbegin(); it != q.rend(); ++it) {
      const auto& g = groups_.at(it->second);
      for (auto e = g.entries.rbegin(); e != g.entries.rend(); ++e) {
        consider(*e, false);
        ++scanned;
      }
    }
  }
  for (const auto& [key, g] : groups_) {
    if (g.valid) continue;
    for (const auto& e : g.entries) {
      if (wanted.count(e.line) && e.requester_cn == wanted[e.line].owner) ++stats_.invalid_skipped;
    }
  }
  for (auto it = dram_.rbegin(); it != dram_.rend(); ++it) consider(*it, true);
  scanned += dram_.size();
  if (cost) *cost = SimTime::cycles(std::max<std::uint64_t>(1, scanned), cfg_.lu_mhz);

  std::vector<FetchReply> out;
  out.reserve(found.size());
  for (auto& [k, v] : found) out.push_back(FetchReply{k.first, k.second, std::move(v)});
  return out;
}

void LoggingUnit::on_fetch(const Message& m) {
  if (crashed_) return;
  SimTime cost;
  auto bulk = std::make_shared<Bulk>();
  bulk->replies = traverse(m.bulk ? m.bulk->requests : std::vector<FetchRequest>{}, &cost);
  std::uint64_t entries = 0;
  for (const auto& r : bulk->replies) entries += r.versions.size();
  Message resp;
  resp.kind = MsgKind::FetchLatestVersResp;
  resp.src = cn_;
  resp.dst = m.src;
  resp.txn = m.txn;
  resp.size_bytes = round_up_flits(kFlitBytes + entries * kLogRecordBytes);
  resp.bulk = std::move(bulk);
  engine_.schedule_after(cost, cn_, [this, resp] {
    if (!crashed_) send_(resp);
  });
}

void LoggingUnit::recov_end(std::uint32_t new_epoch) {
  if (crashed_) return;
  epoch_ = std::max(epoch_, new_epoch);
  for (auto it = groups_.begin(); it != groups_.end();) {
    if (!it->second.valid && it->first.epoch < epoch_) {
      sram_used_ -= static_cast<std::uint32_t>(it->second.entries.size());
      stats_.gc_dropped += it->second.entries.size();
      it = groups_.erase(it);
    } else {
      ++it;
    }
  }
  std::erase_if(backlog_, [&](const Message& q) { return q.epoch < epoch_; });
  process_backlog();
}

}  // namespace cxlsim
