#include <gtest/gtest.h>

#include <algorithm>
#include <memory>

#include "cxlsim/cache.hpp"
#include "cxlsim/config.hpp"
#include "cxlsim/directory.hpp"
#include "cxlsim/engine.hpp"
#include "cxlsim/errors.hpp"
#include "cxlsim/fabric.hpp"
#include "cxlsim/logging_unit.hpp"
#include "cxlsim/recovery.hpp"
#include "cxlsim/replication.hpp"
#include "cxlsim/sync.hpp"

using namespace cxlsim;

namespace {

ClusterConfig small_cfg(std::uint32_t cns = 4, std::uint32_t mns = 1) {
  ClusterConfig c;
  c.num_cns = cns;
  c.num_mns = mns;
  c.replication_factor = std::min<std::uint32_t>(3, cns);
  c.p_reorder = 0.0;
  return c;
}

const Addr kLine = kRemoteBit | 0x4000;

}  // namespace

// ---- fabric ----

TEST(Fabric, IdleMessageTakesHalfRttPlusOneSerialization) {
  Engine e;
  auto cfg = small_cfg();
  Fabric f(e, cfg, 1);
  std::vector<std::pair<SimTime, MsgKind>> got;
  f.set_handler([&](const Message& m) { got.emplace_back(e.now(), m.kind); });
  EXPECT_EQ(f.serialization(64).ps, 400u);  // 64 B at 160 GB/s
  Message m;
  m.kind = MsgKind::Rd;
  m.src = 0;
  m.dst = f.mn_node(0);
  f.send(m);
  e.run_until_quiescent();
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(got[0].first.ps, 100400u);
}

TEST(Fabric, BackToBackMessagesQueueOnTheLinks) {
  Engine e;
  auto cfg = small_cfg();
  Fabric f(e, cfg, 1);
  std::vector<std::uint64_t> at;
  f.set_handler([&](const Message&) { at.push_back(e.now().ps); });
  Message m;
  m.dst = f.mn_node(0);
  m.src = 0;
  f.send(m);
  f.send(m);  // same egress
  m.src = 1;
  f.send(m);  // same ingress
  e.run_until_quiescent();
  EXPECT_EQ(at, (std::vector<std::uint64_t>{100400, 100800, 101200}));
}

TEST(Fabric, ReorderingSwapsButNeverBeatsMinimumLatency) {
  Engine e;
  auto cfg = small_cfg();
  cfg.p_reorder = 1.0;
  Fabric f(e, cfg, 3);
  std::vector<std::uint64_t> order;
  std::vector<std::uint64_t> at;
  f.set_handler([&](const Message& m) {
    order.push_back(m.txn);
    at.push_back(e.now().ps);
  });
  Message m;
  m.src = 0;
  m.dst = 1;
  m.txn = 1;
  f.send(m);
  m.txn = 2;
  f.send(m);
  e.run_until_quiescent();
  EXPECT_EQ(order, (std::vector<std::uint64_t>{2, 1}));
  EXPECT_GE(at[0], f.min_latency(64).ps);
  EXPECT_EQ(f.stats().reordered, 1u);
}

TEST(Fabric, ViralCnDropsTrafficAndMsiGoesToLowestLiveCn) {
  Engine e;
  auto cfg = small_cfg();
  Fabric f(e, cfg, 1);
  std::vector<Message> got;
  f.set_handler([&](const Message& m) { got.push_back(m); });
  f.detect_failure(0);
  f.detect_failure(0);  // idempotent
  Message m;
  m.src = 2;
  m.dst = 0;
  f.send(m);
  e.run_until_quiescent();
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(got[0].kind, MsgKind::MSI);
  EXPECT_EQ(got[0].dst, 1u);
  EXPECT_EQ(got[0].count, 0u);
  EXPECT_EQ(f.stats().dropped_viral, 1u);
  m.dst = 99;
  EXPECT_THROW(f.send(m), UnknownDestination);
}

TEST(Fabric, BytesAreChargedToBothCnEnds) {
  Engine e;
  auto cfg = small_cfg();
  Fabric f(e, cfg, 1);
  Message m;
  m.kind = MsgKind::REPL;
  m.src = 0;
  m.dst = 1;
  m.size_bytes = 128;
  f.send(m);
  const auto rep = static_cast<std::size_t>(TrafficClass::Replication);
  EXPECT_EQ(f.cn_bytes()[0][rep], 128u);
  EXPECT_EQ(f.cn_bytes()[1][rep], 128u);
  EXPECT_EQ(f.cn_bytes()[2][rep], 0u);
}

// ---- cache ----

TEST(Cache, LruEvictsLeastRecentlyTouched) {
  LruCache<int> c(2 * 64, 2, 64);  // one set, two ways
  EXPECT_FALSE(c.insert(0, 1));
  EXPECT_FALSE(c.insert(64, 2));
  c.touch(0);
  auto ev = c.insert(128, 3);
  ASSERT_TRUE(ev);
  EXPECT_EQ(ev->first, 64u);
  EXPECT_EQ(*c.find(0), 1);
  EXPECT_EQ(c.find(64), nullptr);
  EXPECT_TRUE(c.erase(0));
  EXPECT_EQ(c.size(), 1u);
}

// ---- replication helpers ----

TEST(Replication, ReplicaSelectionIsContiguousModN) {
  EXPECT_EQ(select_replicas(0, 16, 3), (std::vector<std::uint32_t>{0, 1, 2}));
  EXPECT_EQ(select_replicas(15 * 64, 16, 3), (std::vector<std::uint32_t>{15, 0, 1}));
  EXPECT_EQ(select_replicas(17 * 64, 16, 3), (std::vector<std::uint32_t>{1, 2, 3}));
  EXPECT_EQ(select_replicas(0, 2, 3).size(), 2u);
}

TEST(Replication, MapOverSurvivorsExcludesVictims) {
  ReplicaMap m({0, 2, 3}, 2, 64);
  for (Addr l = 0; l < 64 * 30; l += 64) {
    const auto r = m.replicas(l);
    EXPECT_EQ(r.size(), 2u);
    EXPECT_EQ(std::count(r.begin(), r.end(), 1u), 0);
  }
  EXPECT_EQ(m.rank_of(0, 0), 0);
  EXPECT_EQ(m.rank_of(0, 2), 1);
  EXPECT_EQ(m.rank_of(0, 3), -1);
}

TEST(Replication, CommitGateTable) {
  using enum ReplState;
  using enum CohState;
  EXPECT_TRUE(commit_gate(Protocol::Proactive, false, NotSent, NotStarted).ready);
  EXPECT_FALSE(commit_gate(Protocol::WT, true, AcksComplete, Complete).ready);
  EXPECT_TRUE(commit_gate(Protocol::WB, true, NotSent, Complete).ready);
  EXPECT_EQ(commit_gate(Protocol::WB, true, NotSent, InFlight).reason, GateReason::Coherence);
  for (auto p : {Protocol::Baseline, Protocol::Parallel, Protocol::Proactive}) {
    EXPECT_TRUE(commit_gate(p, true, AcksComplete, Complete).ready);
    EXPECT_EQ(commit_gate(p, true, ReplsSent, Complete).reason, GateReason::Replication);
    EXPECT_EQ(commit_gate(p, true, AcksComplete, InFlight).reason, GateReason::Coherence);
    EXPECT_EQ(commit_gate(p, true, NotSent, NotStarted).reason, GateReason::Both);
    EXPECT_FALSE(commit_gate(p, true, Validated, Complete).ready);
  }
}

TEST(Replication, TimestampCountersArePerDestination) {
  TimestampCounters ts(4);
  EXPECT_EQ(ts.next(2), 1u);
  EXPECT_EQ(ts.next(2), 2u);
  EXPECT_EQ(ts.next(0), 1u);
  EXPECT_EQ(ts.issued(2), 2u);
  EXPECT_EQ(ts.issued(3), 0u);
  EXPECT_EQ(repl_size(1), 64u);
  EXPECT_EQ(repl_size(6), 64u);
  EXPECT_EQ(repl_size(7), 128u);
}

// ---- logging unit ----

namespace {

struct LuRig {
  Engine engine;
  ClusterConfig cfg = small_cfg();
  std::vector<std::pair<SimTime, Message>> out;
  std::unique_ptr<LoggingUnit> lu;

  explicit LuRig(std::uint64_t sram_bytes = 4096) {
    cfg.sram_log_bytes = sram_bytes;
    lu = std::make_unique<LoggingUnit>(1, engine, cfg, [this](Message m) { out.emplace_back(engine.now(), std::move(m)); });
  }

  static Message repl(std::uint32_t src, std::uint64_t txn, Addr line, std::uint8_t mask, std::uint64_t base) {
    Message m;
    m.kind = MsgKind::REPL;
    m.src = src;
    m.dst = 1;
    m.txn = txn;
    m.line = line;
    m.mask = mask;
    for (std::uint32_t w = 0; w < kMaxWords; ++w) m.data[w] = base + w;
    return m;
  }
  static Message val(std::uint32_t src, std::uint64_t txn, std::uint64_t ts, std::uint64_t grant = 1,
                     std::uint64_t cseq = 0) {
    Message m;
    m.kind = MsgKind::VAL;
    m.src = src;
    m.dst = 1;
    m.txn = txn;
    m.ts = ts;
    m.seq = grant;
    m.cseq = cseq ? cseq : ts;
    return m;
  }
  std::size_t count(MsgKind k) const {
    return static_cast<std::size_t>(std::count_if(out.begin(), out.end(), [k](const auto& p) { return p.second.kind == k; }));
  }
};

}  // namespace

TEST(LoggingUnit, AcksAfterOneSramAccess) {
  LuRig r;
  r.lu->on_repl(LuRig::repl(0, 1, kLine, 0b101, 100));
  EXPECT_EQ(r.lu->sram_used(), 2u);
  r.engine.run_until_quiescent();
  ASSERT_EQ(r.out.size(), 1u);
  EXPECT_EQ(r.out[0].second.kind, MsgKind::REPL_ACK);
  EXPECT_EQ(r.out[0].second.dst, 0u);
  EXPECT_EQ(r.out[0].first, SimTime::from_ns(4));
}

TEST(LoggingUnit, MigratesInTimestampOrderPerSource) {
  LuRig r;
  r.lu->on_repl(LuRig::repl(0, 1, kLine, 0b1, 10));
  r.lu->on_repl(LuRig::repl(0, 2, kLine, 0b1, 20));
  r.lu->on_repl(LuRig::repl(2, 9, kLine + 64, 0b1, 30));
  r.lu->on_val(LuRig::val(0, 2, 2));  // arrives first, must wait
  EXPECT_EQ(r.lu->dram_entries(), 0u);
  r.lu->on_val(LuRig::val(2, 9, 1));  // other source is independent
  EXPECT_EQ(r.lu->dram_entries(), 1u);
  r.lu->on_val(LuRig::val(0, 1, 1));
  ASSERT_EQ(r.lu->dram_entries(), 3u);
  EXPECT_EQ(r.lu->dram_log()[1].value, 10u);
  EXPECT_EQ(r.lu->dram_log()[2].value, 20u);
  EXPECT_EQ(r.lu->stats().ts_inversions, 0u);
  EXPECT_EQ(r.lu->sram_used(), 0u);
  EXPECT_EQ(r.lu->dram_bytes(), 3u * kDramEntryBytes);
}

TEST(LoggingUnit, ValWithoutReplIsAProtocolViolation) {
  LuRig r;
  EXPECT_THROW(r.lu->on_val(LuRig::val(0, 5, 1)), UnmatchedVal);
  r.lu->on_repl(LuRig::repl(0, 5, kLine, 1, 1));
  r.lu->on_val(LuRig::val(0, 5, 2));  // waits for ts 1
  EXPECT_THROW(r.lu->on_val(LuRig::val(0, 5, 2)), UnmatchedVal);
}

TEST(LoggingUnit, FullSramBackpressuresUntilMigration) {
  LuRig r(2 * kSramEntryBytes);
  ASSERT_EQ(r.lu->sram_capacity(), 2u);
  r.lu->on_repl(LuRig::repl(0, 1, kLine, 0b11, 0));
  r.lu->on_repl(LuRig::repl(0, 2, kLine, 0b1, 0));
  r.engine.run_until_quiescent();
  EXPECT_EQ(r.count(MsgKind::REPL_ACK), 1u);
  EXPECT_EQ(r.lu->stats().backpressured, 1u);
  r.lu->on_val(LuRig::val(0, 1, 1));
  r.engine.run_until_quiescent();
  EXPECT_EQ(r.count(MsgKind::REPL_ACK), 2u);
  EXPECT_EQ(r.lu->sram_used(), 1u);
}

TEST(LoggingUnit, TraversalReturnsOwnerTenureNewestFirst) {
  LuRig r;
  r.lu->on_repl(LuRig::repl(0, 1, kLine, 0b1, 100));
  r.lu->on_val(LuRig::val(0, 1, 1, /*grant*/ 3));
  r.lu->on_repl(LuRig::repl(0, 2, kLine, 0b1, 200));
  r.lu->on_val(LuRig::val(0, 2, 2, 3));
  r.lu->on_repl(LuRig::repl(2, 1, kLine, 0b1, 900));  // another requester
  r.lu->on_val(LuRig::val(2, 1, 1, 3));
  r.lu->on_repl(LuRig::repl(0, 3, kLine, 0b1, 300));  // never validated
  r.lu->on_repl(LuRig::repl(0, 4, kLine, 0b1, 400));  // validated, waits for ts 3
  r.lu->on_val(LuRig::val(0, 4, 4, 3));
  SimTime cost;
  auto rep = r.lu->traverse({FetchRequest{kLine, 0, 3}}, &cost);
  ASSERT_EQ(rep.size(), 1u);
  ASSERT_EQ(rep[0].versions.size(), 3u);
  EXPECT_EQ(rep[0].versions[0].value, 400u);
  EXPECT_FALSE(rep[0].versions[0].from_dram);
  EXPECT_EQ(rep[0].versions[1].value, 200u);
  EXPECT_TRUE(rep[0].versions[1].from_dram);
  EXPECT_EQ(rep[0].versions[2].value, 100u);
  EXPECT_GT(cost.ps, 0u);
  // A different grant is an earlier tenure: nothing to return.
  EXPECT_TRUE(r.lu->traverse({FetchRequest{kLine, 0, 2}}, nullptr).empty());
}

TEST(LoggingUnit, RecovEndDropsStaleInvalidEntries) {
  LuRig r;
  r.lu->on_repl(LuRig::repl(0, 1, kLine, 0b11, 0));
  r.lu->recov_end(1);
  EXPECT_EQ(r.lu->sram_used(), 0u);
  EXPECT_EQ(r.lu->stats().gc_dropped, 2u);
  auto stale = LuRig::repl(0, 2, kLine, 0b1, 0);
  r.lu->on_repl(stale);  // epoch 0 < 1
  EXPECT_EQ(r.lu->sram_used(), 0u);
  EXPECT_EQ(r.lu->stats().stale_repls, 1u);
}

TEST(LoggingUnit, DumpShipsResponsibleShareAndClearsByMarks) {
  LuRig r;
  const Addr a = kLine, b = kLine + 64;
  r.lu->on_repl(LuRig::repl(0, 1, a, 0b1, 1));
  r.lu->on_val(LuRig::val(0, 1, 1, 1, 1));
  r.lu->on_repl(LuRig::repl(0, 2, b, 0b1, 2));
  r.lu->on_val(LuRig::val(0, 2, 2, 1, 2));
  ASSERT_EQ(r.lu->dram_entries(), 2u);
  // This unit (CN1) ships line a; CN3 is responsible for line b.
  auto resp = [&](Addr l) { return l == a ? 1u : 3u; };
  ASSERT_TRUE(r.lu->start_dump_round(7, resp, false, r.cfg.num_cns));
  EXPECT_FALSE(r.lu->start_dump_round(8, resp, false, r.cfg.num_cns));
  ASSERT_EQ(r.count(MsgKind::DumpDone), 1u);
  ASSERT_GE(r.count(MsgKind::LogDump), 1u);
  const auto& dump = std::find_if(r.out.begin(), r.out.end(), [](auto& p) { return p.second.bulk && p.second.kind == MsgKind::LogDump; })->second;
  ASSERT_EQ(dump.bulk->segment.size(), 1u);
  EXPECT_EQ(dump.bulk->segment[0].line, a);
  const auto& done = std::find_if(r.out.begin(), r.out.end(), [](auto& p) { return p.second.kind == MsgKind::DumpDone; })->second;
  EXPECT_EQ(done.bulk->marks.at(0), 2u);

  // CN3 reports it has only shipped source 0 up to commit 1, so b stays.
  auto grant = std::make_shared<Bulk>();
  grant->marks.assign(r.cfg.num_cns * r.cfg.num_cns, 0);
  grant->marks[3 * r.cfg.num_cns + 0] = 1;
  Message g;
  g.kind = MsgKind::ClearGrant;
  g.txn = 7;
  g.bulk = grant;
  r.lu->on_clear_grant(g);
  ASSERT_EQ(r.lu->dram_entries(), 1u);
  EXPECT_EQ(r.lu->dram_log()[0].line, b);
  EXPECT_FALSE(r.lu->dump_in_progress());
}

TEST(LoggingUnit, AbortedRoundKeepsEverything) {
  LuRig r;
  r.lu->on_repl(LuRig::repl(0, 1, kLine, 0b1, 1));
  r.lu->on_val(LuRig::val(0, 1, 1));
  ASSERT_TRUE(r.lu->start_dump_round(1, [](Addr) { return 1u; }, true, r.cfg.num_cns));
  Message g;
  g.kind = MsgKind::ClearGrant;
  g.txn = 1;
  g.flag = true;
  r.lu->on_clear_grant(g);
  EXPECT_EQ(r.lu->dram_entries(), 1u);
  EXPECT_FALSE(r.lu->dump_in_progress());
}

// ---- directory and crash repair ----

namespace {

struct MnRig {
  Engine engine;
  ClusterConfig cfg = small_cfg(6, 1);
  std::vector<Message> out;
  std::set<std::uint32_t> dead;
  std::vector<std::tuple<Addr, LineData, RepairInfo>> repairs;
  MemoryNode mn{0, engine, cfg, [this](Message m) { out.push_back(std::move(m)); }, hooks()};

  MemoryNodeHooks hooks() {
    MemoryNodeHooks h;
    h.is_dead = [this](std::uint32_t c) { return dead.count(c) > 0; };
    h.replicas = [](Addr) { return std::vector<std::uint32_t>{1, 2, 3}; };
    h.on_repair = [this](Addr l, const LineData& d, const RepairInfo& i) { repairs.emplace_back(l, d, i); };
    return h;
  }
  Message req(MsgKind k, std::uint32_t cn) const {
    Message m;
    m.kind = k;
    m.src = cn;
    m.dst = mn.node();
    m.line = kLine;
    return m;
  }
  std::vector<Message> take(MsgKind k) {
    std::vector<Message> r;
    for (auto& m : out) {
      if (m.kind == k) r.push_back(m);
    }
    std::erase_if(out, [k](const Message& m) { return m.kind == k; });
    return r;
  }
  static Message fetch_resp(std::uint32_t from, std::uint64_t id, std::uint8_t word,
                            std::vector<Version> versions) {
    auto b = std::make_shared<Bulk>();
    if (!versions.empty()) b->replies.push_back(FetchReply{kLine, word, std::move(versions)});
    Message m;
    m.kind = MsgKind::FetchLatestVersResp;
    m.src = from;
    m.txn = id;
    m.bulk = b;
    return m;
  }
};

}  // namespace

TEST(Directory, ReadThenExclusiveInvalidatesSharers) {
  MnRig r;
  r.mn.handle(r.req(MsgKind::Rd, 0));
  r.engine.run_until_quiescent();
  auto acks = r.take(MsgKind::Rd_ACK);
  ASSERT_EQ(acks.size(), 1u);
  EXPECT_EQ(acks[0].seq, 1u);
  EXPECT_EQ(r.engine.now(), SimTime::from_ns(r.cfg.dram_ns));
  EXPECT_EQ(r.mn.entry(kLine)->state(), DirState::Shared);

  r.mn.handle(r.req(MsgKind::RdX, 4));
  auto invs = r.take(MsgKind::Inv);
  ASSERT_EQ(invs.size(), 1u);
  EXPECT_EQ(invs[0].dst, 0u);
  EXPECT_EQ(invs[0].seq, 1u);
  r.engine.run_until_quiescent();
  EXPECT_TRUE(r.take(MsgKind::RdX_ACK).empty());  // still waiting for the Inv_ACK

  Message ia;
  ia.kind = MsgKind::Inv_ACK;
  ia.src = 0;
  ia.line = kLine;
  ia.txn = invs[0].txn;
  r.mn.handle(ia);
  r.engine.run_until_quiescent();
  auto x = r.take(MsgKind::RdX_ACK);
  ASSERT_EQ(x.size(), 1u);
  EXPECT_EQ(x[0].dst, 4u);
  EXPECT_EQ(x[0].seq, 2u);
  EXPECT_EQ(r.mn.entry(kLine)->owner, 4u);
}

TEST(Directory, OwnerDataComesBackOnDowngrade) {
  MnRig r;
  auto& e = r.mn.poke(kLine);
  e.owned = true;
  e.owner = 2;
  e.owner_seq = 5;
  e.grants = 5;
  r.mn.handle(r.req(MsgKind::Rd, 3));
  auto invs = r.take(MsgKind::Inv);
  ASSERT_EQ(invs.size(), 1u);
  EXPECT_TRUE(invs[0].flag);  // downgrade
  Message ia;
  ia.kind = MsgKind::Inv_ACK;
  ia.src = 2;
  ia.line = kLine;
  ia.txn = invs[0].txn;
  ia.flag = true;
  ia.data[0] = 77;
  r.mn.handle(ia);
  r.engine.run_until_quiescent();
  auto acks = r.take(MsgKind::Rd_ACK);
  ASSERT_EQ(acks.size(), 1u);
  EXPECT_EQ(acks[0].data[0], 77u);
  EXPECT_EQ(r.mn.entry(kLine)->sharers.size(), 2u);
}

TEST(Directory, WriteThroughAppliesAndAcksAfterPersist) {
  MnRig r;
  auto m = r.req(MsgKind::WT_Store, 1);
  m.mask = 0b10;
  m.data[1] = 42;
  r.mn.handle(m);
  r.engine.run_until_quiescent();
  auto acks = r.take(MsgKind::WT_ACK);
  ASSERT_EQ(acks.size(), 1u);
  EXPECT_EQ(r.mn.memory(kLine)[1], 42u);
  EXPECT_EQ(r.engine.now(), SimTime::from_ns(r.cfg.dram_ns + r.cfg.pmem_ns));
}

TEST(Directory, RecoveryDropsSharerBitsWithoutFetching) {
  MnRig r;
  auto& e = r.mn.poke(kLine);
  e.sharers = {{1, 1}, {4, 2}};
  r.dead = {1};
  r.mn.recover({1}, 0, 9);
  EXPECT_TRUE(r.take(MsgKind::FetchLatestVers).empty());
  auto resp = r.take(MsgKind::InitRecovResp);
  ASSERT_EQ(resp.size(), 1u);
  EXPECT_EQ(resp[0].count, 0u);
  EXPECT_EQ(r.mn.entry(kLine)->sharers.count(1), 0u);
  EXPECT_EQ(r.mn.entry(kLine)->sharers.count(4), 1u);
}

TEST(Directory, OwnedLineIsRebuiltFromSurvivingReplicas) {
  MnRig r;
  auto& e = r.mn.poke(kLine);
  e.owned = true;
  e.owner = 1;
  e.owner_seq = 4;
  e.data[0] = 5;
  r.dead = {1};
  r.mn.recover({1}, 0, 9);
  auto f = r.take(MsgKind::FetchLatestVers);
  ASSERT_EQ(f.size(), 2u);  // replicas 2 and 3, not the victim
  EXPECT_EQ(f[0].dst, 2u);
  EXPECT_EQ(f[1].dst, 3u);
  EXPECT_EQ(f[0].bulk->requests.at(0).grant, 4u);
  EXPECT_TRUE(r.mn.recovery_pending());

  r.mn.handle(MnRig::fetch_resp(2, 9, 0, {{60, true}, {50, true}}));
  EXPECT_TRUE(r.take(MsgKind::InitRecovResp).empty());
  r.mn.handle(MnRig::fetch_resp(3, 9, 0, {{60, true}}));
  auto resp = r.take(MsgKind::InitRecovResp);
  ASSERT_EQ(resp.size(), 1u);
  EXPECT_EQ(resp[0].count, 1u);
  EXPECT_EQ(r.mn.memory(kLine)[0], 60u);
  EXPECT_FALSE(r.mn.entry(kLine)->owned);
  ASSERT_EQ(r.repairs.size(), 1u);
  EXPECT_EQ(std::get<2>(r.repairs[0]).from_logs, 1u);
  EXPECT_EQ(std::get<2>(r.repairs[0]).divergent, 0u);

  // Running the repair again changes nothing.
  r.mn.recover({1}, 0, 10);
  EXPECT_TRUE(r.take(MsgKind::FetchLatestVers).empty());
  EXPECT_EQ(r.take(MsgKind::InitRecovResp).at(0).count, 0u);
  EXPECT_EQ(r.mn.memory(kLine)[0], 60u);
}

TEST(Directory, DivergentLogsPreferDramResidentHead) {
  MnRig r;
  auto& e = r.mn.poke(kLine);
  e.owned = true;
  e.owner = 1;
  e.owner_seq = 1;
  r.dead = {1};
  r.mn.recover({1}, 0, 3);
  // Replica 2 validated a newer update still in SRAM; replica 3 already
  // migrated the one before it. Only a migrated update is known committed.
  r.mn.handle(MnRig::fetch_resp(2, 3, 0, {{70, false}, {60, true}}));
  r.mn.handle(MnRig::fetch_resp(3, 3, 0, {{60, true}}));
  EXPECT_EQ(r.mn.memory(kLine)[0], 60u);
  EXPECT_EQ(std::get<2>(r.repairs.at(0)).divergent, 1u);
}

TEST(Directory, PersistedSegmentsFillWordsTheLogsNoLongerHold) {
  MnRig r;
  r.mn.apply_log_dump(2, 1, {LogRecord{1, 4, kLine, 0, 11, 7, 1}, LogRecord{1, 4, kLine, 1, 12, 6, 2}});
  r.mn.apply_log_dump(3, 2, {LogRecord{1, 4, kLine, 0, 13, 7, 3}});
  EXPECT_EQ(r.mn.query_persisted(kLine).front().value, 13u);
  auto& e = r.mn.poke(kLine);
  e.owned = true;
  e.owner = 1;
  e.owner_seq = 7;
  e.data[1] = 99;
  r.dead = {1};
  r.mn.recover({1}, 0, 4);
  r.mn.handle(MnRig::fetch_resp(2, 4, 0, {}));
  r.mn.handle(MnRig::fetch_resp(3, 4, 0, {}));
  EXPECT_EQ(r.mn.memory(kLine)[0], 13u);  // newest segment, current tenure
  EXPECT_EQ(r.mn.memory(kLine)[1], 99u);  // grant 6 is an earlier tenure
  EXPECT_EQ(std::get<2>(r.repairs.at(0)).from_persisted, 1u);
}

TEST(Directory, QueuedRequestsOfVictimsAreDropped) {
  MnRig r;
  r.mn.handle(r.req(MsgKind::RdX, 1));
  r.mn.handle(r.req(MsgKind::RdX, 2));
  r.mn.handle(r.req(MsgKind::RdX, 3));
  r.engine.run_until_quiescent();
  auto x = r.take(MsgKind::RdX_ACK);
  ASSERT_EQ(x.size(), 1u);
  auto invs = r.take(MsgKind::Inv);  // CN2 now waits on CN1
  ASSERT_EQ(invs.size(), 1u);
  r.dead = {1};
  r.mn.recover({1}, 0, 1);
  r.mn.handle(MnRig::fetch_resp(2, 1, 0, {}));
  r.mn.handle(MnRig::fetch_resp(3, 1, 0, {}));
  r.engine.run_until_quiescent();
  x = r.take(MsgKind::RdX_ACK);
  ASSERT_EQ(x.size(), 1u);
  EXPECT_EQ(x[0].dst, 2u);
}

// ---- sync ----

TEST(Sync, LocksHandOffFifo) {
  std::vector<std::uint32_t> woken;
  LockTable t([&](std::uint32_t c) { woken.push_back(c); });
  EXPECT_TRUE(t.acquire(1, 10));
  EXPECT_FALSE(t.acquire(1, 11));
  EXPECT_FALSE(t.acquire(1, 12));
  EXPECT_FALSE(t.acquire(1, 11));  // not queued twice
  EXPECT_EQ(t.waiters(1), 2u);
  EXPECT_THROW(t.release(1, 11), ProtocolViolation);
  t.release(1, 10);
  EXPECT_EQ(woken, (std::vector<std::uint32_t>{11}));
  EXPECT_FALSE(t.acquire(1, 12));  // reserved for 11
  EXPECT_TRUE(t.acquire(1, 11));
  t.forget({11});
  EXPECT_EQ(woken.back(), 12u);
  EXPECT_TRUE(t.acquire(1, 12));
}

TEST(Sync, BarrierReleasesWhenAllLiveParticipantsArrive) {
  std::vector<std::uint32_t> rel;
  BarrierManager b({0, 1, 2}, [&](std::uint32_t c) { rel.push_back(c); });
  b.arrive(5, 0);
  b.arrive(5, 2);
  EXPECT_TRUE(rel.empty());
  b.set_participants({0, 2});  // core 1 died
  EXPECT_EQ(rel, (std::vector<std::uint32_t>{0, 2}));
  EXPECT_EQ(b.arrived(5), 0u);
}

// ---- crash specs and image verification ----

TEST(Recovery, CrashSpecs) {
  auto p = parse_crash_spec("cn=1+4,t=12.5us");
  EXPECT_EQ(p.victims, (std::vector<std::uint32_t>{1, 4}));
  EXPECT_EQ(p.at->ps, 12500000u);
  p = parse_crash_spec("cn=3,commit=500");
  EXPECT_EQ(*p.after_commits, 500u);
  EXPECT_EQ(parse_crash_spec(format_crash_spec(p)).victims, p.victims);
  EXPECT_THROW(parse_crash_spec("t=1ms"), SpecError);
  EXPECT_THROW(parse_crash_spec("cn=1"), SpecError);
  EXPECT_THROW(parse_crash_spec("cn=1,t=3h"), SpecError);
  EXPECT_THROW(parse_crash_spec("cn=1,when=3"), SpecError);
}

TEST(Recovery, VerifyImageClassifiesMismatches) {
  GoldenHistory g;
  LineData d{};
  d[0] = store_value(0, 0);
  g.on_commit(0, kLine, 0b1, d, SimTime::from_ns(1));
  d[0] = store_value(0, 3);
  g.on_commit(0, kLine, 0b1, d, SimTime::from_ns(2));
  EXPECT_EQ(g.last(kLine), store_value(0, 3));
  EXPECT_EQ(g.tso_violations(), 0u);

  std::map<Addr, std::uint64_t> img{{kLine, store_value(0, 3)}};
  EXPECT_TRUE(verify_image(img, g, false).pass);
  img[kLine] = store_value(0, 0);
  auto v = verify_image(img, g, false);
  EXPECT_FALSE(v.pass);
  EXPECT_EQ(v.lost_commits, 1u);
  img[kLine] = store_value(0, 3);
  img[kLine + 8] = 5;  // never written
  EXPECT_FALSE(verify_image(img, g, false).pass);

  d[1] = 5;
  g.on_repl_issued(kLine, 0b10, d);
  auto w = verify_image(img, g, true);
  EXPECT_TRUE(w.pass);
  EXPECT_EQ(w.in_flight_accepted, 1u);

  d[0] = store_value(0, 1);  // goes backwards for core 0
  g.on_commit(0, kLine + 64, 0b1, d, SimTime::from_ns(3));
  EXPECT_EQ(g.tso_violations(), 1u);
}
