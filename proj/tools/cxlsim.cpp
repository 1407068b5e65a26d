// Command-line front end: run, sweep, fuzz-recovery, gen-trace.
#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "cxlsim/experiment.hpp"
#include "cxlsim/errors.hpp"

using namespace cxlsim;

namespace {

std::uint64_t default_seed() {
  if (const char* s = std::getenv("CXLSIM_SEED")) {
    try {
      return std::stoull(s);
    } catch (const std::exception&) {
      std::cerr << "ignoring unparsable CXLSIM_SEED='" << s << "'\n";
    }
  }
  return 1;
}

std::vector<std::string> split(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw SimError("cannot write " + path);
  f << text;
}

// Config file first, then --key value flags in key order.
struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "cluster config file (key = value lines)")->check(CLI::ExistingFile);
    for (const auto& k : config_keys()) app->add_option("--" + k, values[k], "config key " + k);
  }
  ClusterConfig build() const {
    ClusterConfig cfg = file.empty() ? ClusterConfig{} : parse_config(file);
    for (const auto& [k, v] : values) {
      if (!v.empty()) set_config_key(cfg, k, v);
    }
    cfg.validate();
    return cfg;
  }
};

struct WorkloadFlags {
  std::string preset_name = "ycsb-like";
  std::string trace_path;
  std::uint64_t ops_per_core = 0;

  void attach(CLI::App* app, bool allow_trace) {
    app->add_option("--preset", preset_name, "workload preset")
        ->check(CLI::IsMember(preset_names()));
    if (allow_trace) app->add_option("--trace", trace_path, "trace file (overrides --preset)")->check(CLI::ExistingFile);
    app->add_option("--ops-per-core", ops_per_core, "ops per core for generated workloads");
  }
  void apply(RunSpec& spec) const {
    spec.workload = preset(preset_name);
    if (ops_per_core) spec.workload.ops_per_core = ops_per_core;
    if (!trace_path.empty()) spec.trace = load_trace(trace_path);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cxlsim: CXL shared-memory cluster simulator with fault-tolerant write-back replication"};
  app.require_subcommand(1);
  std::uint64_t seed = default_seed();

  // run
  auto* run = app.add_subcommand("run", "run one simulation");
  ConfigFlags run_cfg;
  WorkloadFlags run_wl;
  std::vector<std::string> crashes;
  std::string out_json = "result.json";
  std::string out_summary;
  run_cfg.attach(run);
  run_wl.attach(run, true);
  run->add_option("--seed", seed, "seed (default: $CXLSIM_SEED or 1)");
  run->add_option("--crash", crashes, "crash plan, e.g. cn=0,t=12.5ms or cn=1+4,commit=500");
  run->add_option("--out", out_json, "result file");
  run->add_option("--summary", out_summary, "also write the summary to this file");

  // sweep
  auto* sw = app.add_subcommand("sweep", "run one simulation per value of a dimension");
  ConfigFlags sw_cfg;
  WorkloadFlags sw_wl;
  std::string dimension;
  std::string values;
  std::string out_csv = "sweep.csv";
  std::string gnuplot;
  sw_cfg.attach(sw);
  sw_wl.attach(sw, true);
  sw->add_option("--seed", seed, "seed shared by every point");
  sw->add_option("--dimension", dimension, "protocol | Nr | num_cns | link_GBps | coalescing")->required();
  sw->add_option("--values", values, "comma-separated values")->required();
  sw->add_option("--out", out_csv, "CSV file");
  sw->add_option("--emit-gnuplot", gnuplot, "also write a gnuplot data file");

  // fuzz-recovery
  auto* fz = app.add_subcommand("fuzz-recovery", "randomised crash trials, nonzero exit on any oracle failure");
  ConfigFlags fz_cfg;
  FuzzOptions fopts;
  std::string protocols = "BASELINE,PARALLEL,PROACTIVE";
  std::string p_reorders = "0,0.5";
  std::string presets = "ycsb-like,write-heavy,coalesce-friendly,sparse-sync";
  std::string fz_out;
  bool verbose = false;
  fz_cfg.attach(fz);
  fz->add_option("--seed", seed, "campaign seed");
  fz->add_option("--trials", fopts.trials, "number of trials");
  fz->add_option("--victims", fopts.victims, "CNs crashed together per trial");
  fz->add_option("--protocols", protocols, "comma-separated replicating variants");
  fz->add_option("--p-reorder-values", p_reorders, "comma-separated reorder probabilities");
  fz->add_option("--presets", presets, "comma-separated workload presets");
  fz->add_option("--ops-per-core", fopts.ops_per_core, "ops per core per trial");
  fz->add_option("--out", fz_out, "summary JSON file");
  fz->add_flag("-v,--verbose", verbose, "one line per trial");

  // gen-trace
  auto* gt = app.add_subcommand("gen-trace", "write a generated workload as a trace file");
  ConfigFlags gt_cfg;
  WorkloadFlags gt_wl;
  std::string gt_out = "trace.txt";
  gt_cfg.attach(gt);
  gt_wl.attach(gt, false);
  gt->add_option("--seed", seed, "workload seed");
  gt->add_option("--out", gt_out, "trace file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      RunSpec spec;
      spec.cfg = run_cfg.build();
      run_wl.apply(spec);
      spec.seed = seed;
      for (const auto& c : crashes) spec.crashes.push_back(parse_crash_spec(c));
      const auto r = run_experiment(spec);
      write_file(out_json, to_json(r) + "\n");
      const auto text = summary(r);
      std::cout << text;
      if (!out_summary.empty()) write_file(out_summary, text);
      return r.completed && r.verdict.pass ? 0 : 1;
    }
    if (*sw) {
      RunSpec spec;
      spec.cfg = sw_cfg.build();
      sw_wl.apply(spec);
      spec.seed = seed;
      const auto dim = parse_dimension(dimension);
      const auto rows = sweep(spec, dim, split(values));
      const auto csv = sweep_csv(dim, rows);
      write_file(out_csv, csv);
      if (!gnuplot.empty()) write_file(gnuplot, sweep_gnuplot(dim, rows));
      std::cout << csv;
      bool ok = true;
      for (const auto& r : rows) ok = ok && r.result.completed && r.result.verdict.pass;
      return ok ? 0 : 1;
    }
    if (*fz) {
      fopts.base = fz_cfg.build();
      fopts.seed = seed;
      fopts.protocols.clear();
      for (const auto& p : split(protocols)) fopts.protocols.push_back(parse_protocol(p));
      fopts.p_reorder.clear();
      for (const auto& p : split(p_reorders)) fopts.p_reorder.push_back(std::stod(p));
      fopts.presets = split(presets);
      if (verbose) {
        fopts.on_trial = [](std::uint32_t i, const FuzzTrial& t) {
          std::cout << "trial " << i << " " << to_string(t.protocol) << " " << t.preset << " p=" << t.p_reorder << " "
                    << format_crash_spec(t.crash) << " seed " << t.seed << ": " << (t.pass ? "PASS" : "FAIL") << "\n";
        };
      }
      const auto s = fuzz_recovery(fopts);
      if (!fz_out.empty()) write_file(fz_out, to_json(s) + "\n");
      std::cout << s.passed << "/" << s.trials << " trials passed, " << s.recovered << " recovered, "
                << s.lost_commits << " lost commits, " << s.ts_inversions << " ts inversions, "
                << s.gating_violations << " gating violations\n";
      for (const auto& f : s.failures) {
        std::cout << "  FAIL trial " << f.index << " seed " << f.seed << " " << to_string(f.protocol) << " "
                  << f.preset << " " << format_crash_spec(f.crash) << (f.error.empty() ? "" : ": " + f.error) << "\n";
        for (const auto& p : f.problems) std::cout << "    " << p << "\n";
      }
      return s.ok() ? 0 : 1;
    }
    if (*gt) {
      const auto cfg = gt_cfg.build();
      RunSpec spec;
      spec.cfg = cfg;
      gt_wl.apply(spec);
      spec.seed = seed;
      write_trace(gt_out, build_trace(spec));
      std::cout << "wrote " << gt_out << "\n";
      return 0;
    }
  } catch (const SimError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
