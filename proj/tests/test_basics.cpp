#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "cxlsim/address.hpp"
#include "cxlsim/config.hpp"
#include "cxlsim/engine.hpp"
#include "cxlsim/errors.hpp"
#include "cxlsim/rng.hpp"
#include "cxlsim/trace.hpp"
#include "cxlsim/workload.hpp"
#include "trace_oracle.hpp"

using namespace cxlsim;

// ---- time ----

TEST(SimTime, CyclesRoundUp) {
  // 2.4 GHz: 1 cycle = 416.67 ps.
  EXPECT_EQ(core_cycles(1).ps, 417u);
  EXPECT_EQ(core_cycles(12).ps, 5000u);
  EXPECT_EQ(SimTime::cycles(1, 500).ps, 2000u);
  EXPECT_EQ(SimTime::from_ns_f(0.4).ps, 400u);
  EXPECT_EQ(SimTime::from_ns_f(0.0004).ps, 1u);
}

// ---- engine ----

TEST(Engine, FiresInTimeThenInsertionOrder) {
  Engine e;
  std::vector<int> order;
  e.schedule(SimTime::from_ns(5), 0, [&] { order.push_back(3); });
  e.schedule(SimTime::from_ns(1), 0, [&] { order.push_back(1); });
  e.schedule(SimTime::from_ns(5), 0, [&] { order.push_back(4); });
  e.schedule(SimTime::from_ns(1), 0, [&] { order.push_back(2); });
  e.run_until_quiescent();
  EXPECT_EQ(order, (std::vector<int>{1, 2, 3, 4}));
  EXPECT_EQ(e.now(), SimTime::from_ns(5));
}

TEST(Engine, CancelledEventsNeverRun) {
  Engine e;
  int hits = 0;
  auto h = e.schedule(SimTime::from_ns(1), 0, [&] { ++hits; });
  e.schedule(SimTime::from_ns(2), 0, [&] { hits += 10; });
  EXPECT_TRUE(e.cancel(h));
  EXPECT_FALSE(e.cancel(h));
  e.run_until_quiescent();
  EXPECT_EQ(hits, 10);
  EXPECT_EQ(e.stats().cancelled, 1u);
}

TEST(Engine, SchedulingInThePastThrows) {
  Engine e;
  e.schedule(SimTime::from_ns(10), 0, [&] { e.schedule(SimTime::from_ns(9), 0, [] {}); });
  EXPECT_THROW(e.run_until_quiescent(), SchedulingInPast);
}

TEST(Engine, BackgroundTimersDoNotHideDeadlock) {
  Engine e;
  std::function<void()> tick = [&] { e.schedule_after(SimTime::from_ns(1), 0, tick, EventKind::Background); };
  e.schedule(SimTime::zero(), 0, tick, EventKind::Background);
  e.set_blocked_reporter([] { return std::vector<std::string>{"core 3 waits for lock 7"}; });
  try {
    e.run_until([] { return false; });
    FAIL() << "expected deadlock";
  } catch (const Deadlock& d) {
    ASSERT_EQ(d.blocked().size(), 1u);
    EXPECT_NE(std::string(d.what()).find("lock 7"), std::string::npos);
  }
}

TEST(Engine, RunUntilStopsOnPredicate) {
  Engine e;
  int n = 0;
  for (int i = 1; i <= 10; ++i) e.schedule(SimTime::from_ns(i), 0, [&] { ++n; });
  e.run_until([&] { return n == 4; });
  EXPECT_EQ(e.now(), SimTime::from_ns(4));
  EXPECT_EQ(e.foreground_pending(), 6u);
}

TEST(Engine, TimeLimitIsEnforced) {
  Engine e;
  e.set_time_limit(SimTime::from_ns(5));
  e.schedule(SimTime::from_ns(6), 0, [] {});
  EXPECT_THROW(e.run_until_quiescent(), SimError);
}

// ---- rng ----

TEST(Rng, StreamsAreReproducibleAndIndependent) {
  SeededRng a(42, 1), b(42, 1), c(42, 2), d(43, 1);
  bool differs_c = false, differs_d = false;
  for (int i = 0; i < 64; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs_c |= x != c.next_u64();
    differs_d |= x != d.next_u64();
  }
  EXPECT_TRUE(differs_c);
  EXPECT_TRUE(differs_d);
}

TEST(Rng, BoundedDrawsStayInRange) {
  SeededRng r(7, 0);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto v = r.between(3, 9);
    ASSERT_GE(v, 3u);
    ASSERT_LE(v, 9u);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 7u);
  EXPECT_FALSE(r.chance(0.0));
  EXPECT_TRUE(r.chance(1.0));
}

// ---- config ----

TEST(Config, DefaultsMatchArchitectureTable) {
  ClusterConfig c;
  EXPECT_EQ(c.num_cns, 16u);
  EXPECT_EQ(c.sb_entries, 72u);
  EXPECT_EQ(c.replication_factor, 3u);
  EXPECT_EQ(c.dram_log_bytes, 18ull << 20);
  EXPECT_EQ(c.sram_log_bytes, 4096u);
  EXPECT_EQ(c.protocol, Protocol::Proactive);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, ParsesTextWithSuffixesAndComments) {
  const auto c = parse_config_text(
      "# comment\n"
      "num_cns = 8\n"
      "Nr = 2\n"
      "llc_size = 4MiB\n"
      "sram_log_bytes = 2KiB\n"
      "protocol = baseline\n"
      "coalescing_enabled = false\n"
      "p_reorder = 0.5\n");
  EXPECT_EQ(c.num_cns, 8u);
  EXPECT_EQ(c.replication_factor, 2u);
  EXPECT_EQ(c.llc.size_bytes, 4u << 20);
  EXPECT_EQ(c.sram_log_bytes, 2048u);
  EXPECT_EQ(c.protocol, Protocol::Baseline);
  EXPECT_FALSE(c.coalescing_enabled);
  EXPECT_DOUBLE_EQ(c.p_reorder, 0.5);
}

TEST(Config, RoundTripsThroughFormat) {
  ClusterConfig c;
  c.num_cns = 5;
  c.protocol = Protocol::WT;
  c.compression_ratio = 3.25;
  const auto back = parse_config_text(format_config(c));
  EXPECT_EQ(format_config(back), format_config(c));
}

TEST(Config, RejectsBadInput) {
  ClusterConfig c;
  try {
    set_config_key(c, "num_cnz", "4");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "num_cnz");
  }
  EXPECT_THROW(set_config_key(c, "num_cns", "four"), ConfigError);
  EXPECT_THROW(set_config_key(c, "protocol", "nope"), ConfigError);
  EXPECT_THROW(set_config_key(c, "coalescing_enabled", "maybe"), ConfigError);
  c.replication_factor = 17;
  EXPECT_THROW(c.validate(), RangeError);
  c = ClusterConfig{};
  c.p_reorder = 1.5;
  EXPECT_THROW(c.validate(), RangeError);
  c = ClusterConfig{};
  c.line_bytes = 128;  // 16 words do not fit an 8-bit mask
  EXPECT_THROW(c.validate(), RangeError);
}

TEST(Config, EveryListedKeyIsSettable) {
  for (const auto& k : config_keys()) {
    ClusterConfig c;
    std::string v = "1";
    if (k == "protocol") v = "wb";
    if (k == "coalescing_enabled") v = "true";
    EXPECT_NO_THROW(set_config_key(c, k, v)) << k;
  }
}

// ---- addresses ----

TEST(Address, HomeAndSyncLines) {
  EXPECT_TRUE(is_remote(kRemoteBit | 0x40));
  EXPECT_FALSE(is_remote(0x40));
  EXPECT_EQ(home_mn(kRemoteBit + 3 * 64, 64, 16), (line_index(kRemoteBit, 64) + 3) % 16);
  EXPECT_TRUE(is_sync_line(lock_line(3, 64)));
  EXPECT_TRUE(is_sync_line(barrier_line(0, 64)));
  EXPECT_FALSE(is_sync_line(kRemoteBit | 0x1000));
  EXPECT_NE(store_value(0, 5), store_value(1, 5));
}

// ---- trace ----

TEST(Trace, WriteParseRoundTrip) {
  Trace t;
  t.cores.resize(2);
  t.cores[0] = {TraceOp::store(kRemoteBit | 0x80), TraceOp::lock(1), TraceOp::load(0x40), TraceOp::unlock(1),
                TraceOp::barrier(0), TraceOp::compute(12)};
  t.cores[1] = {TraceOp::barrier(0), TraceOp::load(kRemoteBit | 0x88)};
  std::stringstream ss;
  write_trace(ss, t);
  const auto back = parse_trace(ss);
  EXPECT_EQ(back, t);
  EXPECT_EQ(back.total_ops(), 8u);
}

TEST(Trace, ParseErrorsCarryLineNumbers) {
  std::stringstream ss("# cores 1\nc0 LD 0x10 L\nc0 JMP 4\n");
  try {
    parse_trace(ss);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  std::stringstream bad_flag("c0 ST 0x10 R\n");
  EXPECT_THROW(parse_trace(bad_flag), ParseError);
}

TEST(Trace, UnbalancedBarriersAreRejected) {
  std::stringstream ss("c0 BAR 1\nc1 CMP 3\n");
  EXPECT_THROW(parse_trace(ss), BarrierMismatch);
}

// ---- workload ----

TEST(Workload, PresetsValidateAndUnknownThrows) {
  for (const auto& n : preset_names()) EXPECT_NO_THROW(preset(n).validate()) << n;
  EXPECT_THROW(preset("tpcc"), SpecError);
  auto w = preset("ycsb-like");
  w.write_fraction = 1.5;
  EXPECT_THROW(w.validate(), SpecError);
}

TEST(Workload, GenerationIsDeterministicPerSeed) {
  auto w = preset("write-heavy");
  w.ops_per_core = 300;
  const auto a = generate_trace(w, 5, 4, 2);
  const auto b = generate_trace(w, 5, 4, 2);
  const auto c = generate_trace(w, 6, 4, 2);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_EQ(a.cores.size(), 8u);
  EXPECT_NO_THROW(a.check_barriers());
}

TEST(Workload, GeneratedTracesAreRaceFreeAndOrderIndependent) {
  for (const auto& name : preset_names()) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      auto w = preset(name);
      w.ops_per_core = 400;
      const auto t = generate_trace(w, seed, 4, 2);
      const auto a = oracle::analyze_trace(t, 2);
      EXPECT_FALSE(a.deadlocked) << name << " seed " << seed;
      EXPECT_EQ(a.race_count, 0u) << name << " seed " << seed;
      EXPECT_EQ(a.lock_order_dependent, 0u) << name << " seed " << seed;
      EXPECT_FALSE(a.final_image.empty());
    }
  }
}

TEST(Workload, WriteFractionIsRoughlyHonoured) {
  auto w = preset("ycsb-like");
  w.ops_per_core = 5000;
  w.sync_density = 0.0;
  w.compute_fraction = 0.0;
  const auto t = generate_trace(w, 3, 2, 2);
  double loads = 0, stores = 0;
  for (const auto& c : t.cores) {
    for (const auto& op : c) {
      loads += op.kind == OpKind::Load;
      stores += op.kind == OpKind::Store;
    }
  }
  EXPECT_NEAR(stores / (loads + stores), w.write_fraction, 0.03);
}

// ---- the test oracle itself ----

TEST(TraceOracle, FlagsUnorderedConflicts) {
  const Addr x = kRemoteBit | 0x1000;
  Trace t;
  t.cores = {{TraceOp::store(x)}, {TraceOp::store(x)}};
  const auto a = oracle::analyze_trace(t, 2);
  EXPECT_EQ(a.race_count, 1u);
  EXPECT_TRUE(a.races.at(0).write_write);
}

TEST(TraceOracle, BarriersAndLocksOrderAccesses) {
  const Addr x = kRemoteBit | 0x1000;
  Trace t;
  t.cores = {{TraceOp::store(x), TraceOp::barrier(0)}, {TraceOp::barrier(0), TraceOp::store(x)}};
  auto a = oracle::analyze_trace(t, 2);
  EXPECT_EQ(a.race_count, 0u);
  EXPECT_EQ(a.lock_order_dependent, 0u);
  EXPECT_EQ(a.final_image.at(x), store_value(1, 1));

  t.cores = {{TraceOp::lock(2), TraceOp::store(x), TraceOp::unlock(2)},
             {TraceOp::lock(2), TraceOp::load(x), TraceOp::store(x), TraceOp::unlock(2)}};
  a = oracle::analyze_trace(t, 2);
  EXPECT_EQ(a.race_count, 0u);
  EXPECT_EQ(a.lock_order_dependent, 1u);
}

TEST(TraceOracle, DetectsDeadlock) {
  Trace t;
  t.cores = {{TraceOp::lock(1), TraceOp::barrier(0), TraceOp::unlock(1)},
             {TraceOp::lock(1), TraceOp::barrier(0), TraceOp::unlock(1)}};
  EXPECT_TRUE(oracle::analyze_trace(t, 2).deadlocked);
}
