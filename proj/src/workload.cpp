#include "cxlsim/workload.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "cxlsim/errors.hpp"
#include "cxlsim/rng.hpp"

namespace cxlsim {

void WorkloadSpec::validate() const {
  auto frac = [](double v, const char* n) {
    if (!(v >= 0.0 && v <= 1.0)) throw SpecError(std::string(n) + " must lie in [0,1]");
  };
  frac(remote_fraction, "remote_fraction");
  frac(write_fraction, "write_fraction");
  frac(barrier_share, "barrier_share");
  frac(compute_fraction, "compute_fraction");
  if (footprint_bytes == 0) throw SpecError("footprint_bytes must be positive");
  if (local_footprint_bytes == 0) throw SpecError("local_footprint_bytes must be positive");
  if (coalescing_run_length < 1.0) throw SpecError("coalescing_run_length must be >= 1");
  if (sync_density < 0.0) throw SpecError("sync_density must be non-negative");
  if (num_locks == 0) throw SpecError("num_locks must be positive");
  if (compute_cycles == 0) throw SpecError("compute_cycles must be positive");
  if (distribution == AccessDistribution::Zipf && zipf_theta <= 0.0)
    throw SpecError("zipf_theta must be positive");
}

std::vector<std::string> preset_names() {
  return {"ycsb-like", "write-heavy", "coalesce-friendly", "sparse-sync"};
}

WorkloadSpec preset(const std::string& name) {
  WorkloadSpec s;
  s.name = name;
  if (name == "ycsb-like") {
    // Key-value store over CXL memory: all accesses remote, 80/20, uniform.
    s.remote_fraction = 1.0;
    s.write_fraction = 0.2;
    s.distribution = AccessDistribution::Uniform;
    s.footprint_bytes = 64ULL << 20;
    s.coalescing_run_length = 1.0;
    s.sync_density = 1.0;
    s.barrier_share = 0.25;
    s.compute_fraction = 0.2;
  } else if (name == "write-heavy") {
    // Stencil-like sweep: 40% of memory ops are remote stores, streaming,
    // with frequent short critical sections on migratory lock data.
    s.remote_fraction = 0.8;
    s.write_fraction = 0.5;
    s.distribution = AccessDistribution::Stream;
    s.footprint_bytes = 16ULL << 20;
    s.coalescing_run_length = 1.0;
    s.sync_density = 6.0;
    s.barrier_share = 0.1;
    s.compute_fraction = 0.2;
  } else if (name == "coalesce-friendly") {
    s.remote_fraction = 0.7;
    s.write_fraction = 0.4;
    s.distribution = AccessDistribution::Uniform;
    s.footprint_bytes = 16ULL << 20;
    s.coalescing_run_length = 5.5;  // runs of 3-8 same-line stores
    s.sync_density = 1.0;
    s.barrier_share = 0.25;
    s.compute_fraction = 0.2;
  } else if (name == "sparse-sync") {
    s.remote_fraction = 0.6;
    s.write_fraction = 0.3;
    s.distribution = AccessDistribution::Zipf;
    s.zipf_theta = 0.8;
    s.footprint_bytes = 8ULL << 20;
    s.sync_density = 4.0;
    s.barrier_share = 0.9;
    s.compute_fraction = 0.3;
  } else {
    throw SpecError("unknown workload preset '" + name + "'");
  }
  return s;
}

Addr lock_region_word(std::uint32_t lock_id, std::uint32_t core, std::uint32_t line_bytes,
                      std::uint32_t word_bytes) {
  const std::uint32_t words = line_bytes / word_bytes;
  // 64 lines per region leaves room for up to 64 * words cores.
  const Addr region = kLockDataBase + static_cast<Addr>(lock_id) * 64 * line_bytes;
  return region + static_cast<Addr>(core / words) * line_bytes +
         static_cast<Addr>(core % words) * word_bytes;
}

namespace {

class ZipfSampler {
 public:
  ZipfSampler(std::uint64_t n, double theta) : cdf_(n) {
    double sum = 0.0;
    for (std::uint64_t i = 0; i < n; ++i) {
      sum += 1.0 / std::pow(static_cast<double>(i + 1), theta);
      cdf_[i] = sum;
    }
    for (auto& v : cdf_) v /= sum;
  }
  std::uint64_t sample(SeededRng& rng) const {
    const double u = rng.uniform();
    auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.end()) return cdf_.size() - 1;
    return static_cast<std::uint64_t>(it - cdf_.begin());
  }

 private:
  std::vector<double> cdf_;
};

struct CoreGen {
  const WorkloadSpec& spec;
  SeededRng rng;
  std::uint32_t core;
  std::uint32_t ncores;
  std::uint32_t cores_per_cn;
  std::uint32_t line_bytes;
  std::uint32_t word_bytes;
  std::uint32_t words;
  std::uint64_t slice_lines;
  const ZipfSampler* zipf;
  CoreTrace out;

  std::uint32_t phase = 0;
  std::uint64_t stream_cursor = 0;  // word cursor within the slice
  // Active coalescing run of remote stores.
  std::uint32_t run_left = 0;
  Addr run_line = 0;
  std::uint32_t run_word = 0;

  Addr slice_base() const {
    const std::uint64_t slice = (core + static_cast<std::uint64_t>(phase) * cores_per_cn) % ncores;
    return kRemoteBit + slice * slice_lines * line_bytes;
  }

  std::uint64_t pick_line_index() {
    switch (spec.distribution) {
      case AccessDistribution::Uniform: return rng.below(slice_lines);
      case AccessDistribution::Zipf: return zipf->sample(rng);
      case AccessDistribution::Stream: return (stream_cursor / words) % slice_lines;
    }
    return 0;
  }

  Addr remote_addr() {
    const std::uint64_t li = pick_line_index();
    std::uint32_t w;
    if (spec.distribution == AccessDistribution::Stream) {
      w = static_cast<std::uint32_t>(stream_cursor % words);
      ++stream_cursor;
    } else {
      w = static_cast<std::uint32_t>(rng.below(words));
    }
    return slice_base() + li * line_bytes + static_cast<Addr>(w) * word_bytes;
  }

  Addr remote_store_addr() {
    if (run_left > 0) {
      --run_left;
      ++run_word;
      return run_line + static_cast<Addr>(run_word) * word_bytes;
    }
    std::uint32_t len = 1;
    if (spec.coalescing_run_length > 1.0) {
      // Geometric with the requested mean, capped at one full line.
      const double p = 1.0 / spec.coalescing_run_length;
      while (len < words && !rng.chance(p)) ++len;
    }
    const Addr a = remote_addr();
    run_line = line_of(a, line_bytes);
    run_word = std::min<std::uint32_t>(word_of(a, line_bytes, word_bytes), words - len);
    run_left = len - 1;
    if (spec.distribution == AccessDistribution::Stream && len > 1) stream_cursor += len - 1;
    return run_line + static_cast<Addr>(run_word) * word_bytes;
  }

  Addr local_addr() {
    const Addr base = static_cast<Addr>(core % cores_per_cn) << 32;
    const std::uint64_t lines = std::max<std::uint64_t>(1, spec.local_footprint_bytes / line_bytes);
    return base + rng.below(lines) * line_bytes + rng.below(words) * word_bytes;
  }

  void memory_op() {
    const bool remote = rng.chance(spec.remote_fraction);
    const bool write = rng.chance(spec.write_fraction);
    if (!remote) {
      out.push_back(write ? TraceOp::store(local_addr()) : TraceOp::load(local_addr()));
      return;
    }
    if (write) {
      out.push_back(TraceOp::store(remote_store_addr()));
    } else {
      out.push_back(TraceOp::load(remote_addr()));
    }
  }

  // Emits LOCK, the critical-section body, UNLOCK; returns ops emitted.
  std::uint64_t critical_section() {
    const auto id = static_cast<std::uint32_t>(rng.below(spec.num_locks));
    out.push_back(TraceOp::lock(id));
    const std::uint32_t lines = (ncores + words - 1) / words;
    for (std::uint32_t i = 0; i < spec.lock_cs_ops; ++i) {
      if (rng.chance(spec.write_fraction)) {
        out.push_back(TraceOp::store(lock_region_word(id, core, line_bytes, word_bytes)));
      } else {
        const Addr region = lock_region_word(id, 0, line_bytes, word_bytes);
        out.push_back(TraceOp::load(region + rng.below(lines) * line_bytes +
                                    rng.below(words) * word_bytes));
      }
    }
    out.push_back(TraceOp::unlock(id));
    return spec.lock_cs_ops + 2;
  }
};

}  // namespace

Trace generate_trace(const WorkloadSpec& spec, std::uint64_t seed, std::uint32_t num_cns,
                     std::uint32_t cores_per_cn, std::uint32_t line_bytes,
                     std::uint32_t word_bytes) {
  spec.validate();
  const std::uint32_t ncores = num_cns * cores_per_cn;
  const std::uint32_t words = line_bytes / word_bytes;
  const std::uint64_t data_lines = std::max<std::uint64_t>(ncores, spec.footprint_bytes / line_bytes);
  const std::uint64_t slice_lines = data_lines / ncores;

  const std::uint64_t n = spec.ops_per_core;
  const double sync_events = static_cast<double>(n) * spec.sync_density / 1000.0;
  const auto barriers = static_cast<std::uint64_t>(std::llround(sync_events * spec.barrier_share));
  const double cs_events = std::max(0.0, sync_events - static_cast<double>(barriers));
  const double p_cs =
      n == 0 ? 0.0 : cs_events / static_cast<double>(n) / (1.0 - spec.compute_fraction + 1e-12);

  std::unique_ptr<ZipfSampler> zipf;
  if (spec.distribution == AccessDistribution::Zipf) {
    zipf = std::make_unique<ZipfSampler>(slice_lines, spec.zipf_theta);
  }

  Trace trace;
  trace.cores.resize(ncores);
  for (std::uint32_t c = 0; c < ncores; ++c) {
    CoreGen g{spec,       SeededRng(seed, 0x10000 + c), c,          ncores, cores_per_cn,
              line_bytes, word_bytes,                   words,      slice_lines, zipf.get(),
              {}};
    g.out.reserve(n + 16);
    std::uint64_t emitted = 0;
    for (std::uint64_t b = 0; b <= barriers; ++b) {
      const std::uint64_t phase_end = n * (b + 1) / (barriers + 1);
      g.phase = static_cast<std::uint32_t>(b);
      g.stream_cursor = 0;
      g.run_left = 0;
      while (emitted < phase_end) {
        if (g.rng.chance(spec.compute_fraction)) {
          g.out.push_back(TraceOp::compute(static_cast<std::uint32_t>(g.rng.between(1, spec.compute_cycles))));
          ++emitted;
        } else if (g.rng.chance(p_cs) && phase_end - emitted >= spec.lock_cs_ops + 2) {
          g.run_left = 0;
          emitted += g.critical_section();
        } else {
          g.memory_op();
          ++emitted;
        }
      }
      if (b < barriers) g.out.push_back(TraceOp::barrier(0));
    }
    trace.cores[c] = std::move(g.out);
  }
  return trace;
}

}  // namespace cxlsim
