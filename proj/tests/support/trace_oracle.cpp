#include "trace_oracle.hpp"

#include <algorithm>
#include <set>

namespace cxlsim::oracle {

namespace {

using Clock = std::vector<std::uint32_t>;

void join(Clock& a, const Clock& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::max(a[i], b[i]);
}

struct Epoch {
  std::uint32_t core = 0;
  std::uint32_t clock = 0;
  std::uint32_t bclock = 0;  // writer's own barrier-only clock
  bool valid = false;
};

struct WordState {
  Epoch write;
  std::map<std::uint32_t, std::uint32_t> reads;  // core -> clock since last write
  std::uint64_t value = 0;
  bool dependent = false;
};

struct CoreState {
  std::size_t pc = 0;
  Clock vc;
  Clock bvc;  // joins at barriers only
  bool at_barrier = false;
};

struct LockState {
  bool held = false;
  Clock vc;
};

}  // namespace

TraceAnalysis analyze_trace(const Trace& trace, std::uint32_t cores_per_cn, std::uint32_t word_bytes) {
  (void)cores_per_cn;
  TraceAnalysis out;
  const std::size_t n = trace.cores.size();
  std::vector<CoreState> cores(n);
  for (std::size_t c = 0; c < n; ++c) {
    cores[c].vc.assign(n, 0);
    cores[c].bvc.assign(n, 0);
    cores[c].vc[c] = 1;
    cores[c].bvc[c] = 1;
  }
  std::map<std::uint32_t, LockState> locks;
  std::map<Addr, WordState> words;

  auto race = [&](Addr w, std::uint32_t a, std::uint32_t b, bool ww) {
    ++out.race_count;
    if (out.races.size() < 16) out.races.push_back(Race{w, a, b, ww});
  };

  auto access = [&](std::uint32_t c, Addr addr, bool write) {
    if ((addr >> 47) == 0) return;  // local memory is private to its node
    const Addr w = addr - addr % word_bytes;
    auto& s = words[w];
    auto& me = cores[c];
    if (s.write.valid && s.write.core != c && s.write.clock > me.vc[s.write.core]) race(w, s.write.core, c, write);
    if (write) {
      for (const auto& [r, clk] : s.reads) {
        if (r != c && clk > me.vc[r]) race(w, r, c, false);
      }
      if (s.write.valid && s.write.core != c && s.write.bclock > me.bvc[s.write.core]) s.dependent = true;
      s.reads.clear();
      s.write = Epoch{c, me.vc[c], me.bvc[c], true};
      s.value = (static_cast<std::uint64_t>(c + 1) << 32) | (me.pc + 1);
    } else {
      s.reads[c] = me.vc[c];
    }
  };

  bool progress = true;
  auto all_done = [&] {
    return std::all_of(cores.begin(), cores.end(), [&, i = std::size_t{0}](const CoreState& cs) mutable {
      return cs.pc >= trace.cores[i++].size();
    });
  };
  while (!all_done()) {
    if (!progress) {
      out.deadlocked = true;
      break;
    }
    progress = false;
    for (std::uint32_t c = 0; c < n; ++c) {
      auto& me = cores[c];
      if (me.pc >= trace.cores[c].size() || me.at_barrier) continue;
      const TraceOp& op = trace.cores[c][me.pc];
      switch (op.kind) {
        case OpKind::Compute: break;
        case OpKind::Load: access(c, op.addr, false); break;
        case OpKind::Store: access(c, op.addr, true); break;
        case OpKind::LockAcq: {
          auto& l = locks[op.sync_id];
          if (l.vc.empty()) l.vc.assign(n, 0);
          if (l.held) continue;
          l.held = true;
          join(me.vc, l.vc);
          break;
        }
        case OpKind::LockRel: {
          auto& l = locks[op.sync_id];
          l.held = false;
          l.vc = me.vc;
          ++me.vc[c];
          break;
        }
        case OpKind::Barrier: {
          me.at_barrier = true;
          progress = true;
          // Released once every unfinished core waits at a barrier.
          bool all = true;
          for (std::uint32_t o = 0; o < n; ++o) {
            if (cores[o].pc < trace.cores[o].size() && !cores[o].at_barrier) all = false;
          }
          if (all) {
            Clock j(n, 0), jb(n, 0);
            for (auto& o : cores) {
              if (!o.at_barrier) continue;
              join(j, o.vc);
              join(jb, o.bvc);
            }
            for (std::uint32_t o = 0; o < n; ++o) {
              auto& cs = cores[o];
              if (!cs.at_barrier) continue;
              cs.vc = j;
              cs.bvc = jb;
              ++cs.vc[o];
              ++cs.bvc[o];
              cs.at_barrier = false;
              ++cs.pc;
            }
          }
          continue;
        }
      }
      ++me.pc;
      progress = true;
    }
  }
  for (const auto& [w, s] : words) {
    if (s.write.valid) out.final_image[w] = s.value;
    if (s.dependent) ++out.lock_order_dependent;
  }
  return out;
}

std::map<Addr, std::uint64_t> nonzero(const std::map<Addr, std::uint64_t>& image) {
  std::map<Addr, std::uint64_t> out;
  for (const auto& [k, v] : image) {
    if (v != 0) out.emplace(k, v);
  }
  return out;
}

}  // namespace cxlsim::oracle
