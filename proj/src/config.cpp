#include "cxlsim/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "cxlsim/errors.hpp"

namespace cxlsim {

std::string_view to_string(Protocol p) {
  switch (p) {
    case Protocol::WB: return "WB";
    case Protocol::WT: return "WT";
    case Protocol::Baseline: return "BASELINE";
    case Protocol::Parallel: return "PARALLEL";
    case Protocol::Proactive: return "PROACTIVE";
  }
  return "?";
}

Protocol parse_protocol(std::string_view s) {
  std::string up(s);
  for (auto& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (up == "WB") return Protocol::WB;
  if (up == "WT") return Protocol::WT;
  if (up == "BASELINE") return Protocol::Baseline;
  if (up == "PARALLEL") return Protocol::Parallel;
  if (up == "PROACTIVE") return Protocol::Proactive;
  throw ConfigError("protocol", "unknown protocol '" + std::string(s) + "'");
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::uint64_t parse_uint(std::string_view key, std::string_view v) {
  v = trim(v);
  std::uint64_t mult = 1;
  auto strip = [&](std::string_view suffix, std::uint64_t m) {
    if (v.size() > suffix.size() && v.substr(v.size() - suffix.size()) == suffix) {
      v = trim(v.substr(0, v.size() - suffix.size()));
      mult = m;
      return true;
    }
    return false;
  };
  strip("GiB", 1ULL << 30) || strip("MiB", 1ULL << 20) || strip("KiB", 1ULL << 10);
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError(std::string(key), "expected an unsigned integer, got '" + std::string(v) + "'");
  }
  return out * mult;
}

double parse_double(std::string_view key, std::string_view v) {
  v = trim(v);
  std::string s(v);
  try {
    std::size_t used = 0;
    double d = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw ConfigError(std::string(key), "expected a number, got '" + s + "'");
  }
}

bool parse_bool(std::string_view key, std::string_view v) {
  v = trim(v);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(std::string(key), "expected a boolean, got '" + std::string(v) + "'");
}

using Setter = std::function<void(ClusterConfig&, std::string_view key, std::string_view)>;

template <class T>
Setter uint_field(T ClusterConfig::*m) {
  return [m](ClusterConfig& c, std::string_view k, std::string_view v) {
    c.*m = static_cast<T>(parse_uint(k, v));
  };
}

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = [] {
    std::map<std::string, Setter, std::less<>> t;
    t["num_cns"] = uint_field(&ClusterConfig::num_cns);
    t["num_mns"] = uint_field(&ClusterConfig::num_mns);
    t["cores_per_cn"] = uint_field(&ClusterConfig::cores_per_cn);
    t["sb_entries"] = uint_field(&ClusterConfig::sb_entries);
    t["lq_entries"] = uint_field(&ClusterConfig::lq_entries);
    t["l1_size"] = [](ClusterConfig& c, auto k, auto v) { c.l1.size_bytes = parse_uint(k, v); };
    t["l1_assoc"] = [](ClusterConfig& c, auto k, auto v) {
      c.l1.assoc = static_cast<std::uint32_t>(parse_uint(k, v));
    };
    t["l1_latency"] = [](ClusterConfig& c, auto k, auto v) {
      c.l1.latency_cycles = static_cast<std::uint32_t>(parse_uint(k, v));
    };
    t["llc_size"] = [](ClusterConfig& c, auto k, auto v) { c.llc.size_bytes = parse_uint(k, v); };
    t["llc_assoc"] = [](ClusterConfig& c, auto k, auto v) {
      c.llc.assoc = static_cast<std::uint32_t>(parse_uint(k, v));
    };
    t["llc_latency"] = [](ClusterConfig& c, auto k, auto v) {
      c.llc.latency_cycles = static_cast<std::uint32_t>(parse_uint(k, v));
    };
    t["line_bytes"] = uint_field(&ClusterConfig::line_bytes);
    t["word_bytes"] = uint_field(&ClusterConfig::word_bytes);
    t["dram_ns"] = uint_field(&ClusterConfig::dram_ns);
    t["pmem_ns"] = uint_field(&ClusterConfig::pmem_ns);
    t["link_GBps"] = uint_field(&ClusterConfig::link_GBps);
    t["net_rtt_ns"] = uint_field(&ClusterConfig::net_rtt_ns);
    t["sram_log_bytes"] = uint_field(&ClusterConfig::sram_log_bytes);
    t["sram_access_ns"] = uint_field(&ClusterConfig::sram_access_ns);
    t["dram_log_bytes"] = uint_field(&ClusterConfig::dram_log_bytes);
    t["dump_period_us"] = uint_field(&ClusterConfig::dump_period_us);
    t["replication_factor"] = uint_field(&ClusterConfig::replication_factor);
    t["Nr"] = uint_field(&ClusterConfig::replication_factor);
    t["compression_ratio"] = [](ClusterConfig& c, auto k, auto v) {
      c.compression_ratio = parse_double(k, v);
    };
    t["protocol"] = [](ClusterConfig& c, auto, auto v) { c.protocol = parse_protocol(trim(v)); };
    t["coalescing_enabled"] = [](ClusterConfig& c, auto k, auto v) {
      c.coalescing_enabled = parse_bool(k, v);
    };
    t["p_reorder"] = [](ClusterConfig& c, auto k, auto v) { c.p_reorder = parse_double(k, v); };
    t["detect_timeout_us"] = uint_field(&ClusterConfig::detect_timeout_us);
    t["cpu_mhz"] = uint_field(&ClusterConfig::cpu_mhz);
    t["lu_mhz"] = uint_field(&ClusterConfig::lu_mhz);
    return t;
  }();
  return table;
}

}  // namespace

void set_config_key(ClusterConfig& cfg, std::string_view key, std::string_view value) {
  const auto& t = setters();
  auto it = t.find(trim(key));
  if (it == t.end()) throw ConfigError(std::string(trim(key)), "unknown key");
  it->second(cfg, trim(key), value);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : setters()) keys.push_back(k);
  return keys;
}

void ClusterConfig::validate() const {
  auto positive = [](std::uint64_t v, const char* name) {
    if (v == 0) throw RangeError(std::string(name) + " must be positive");
  };
  positive(num_cns, "num_cns");
  positive(num_mns, "num_mns");
  positive(cores_per_cn, "cores_per_cn");
  positive(sb_entries, "sb_entries");
  positive(lq_entries, "lq_entries");
  positive(l1.size_bytes, "l1_size");
  positive(l1.assoc, "l1_assoc");
  positive(llc.size_bytes, "llc_size");
  positive(llc.assoc, "llc_assoc");
  positive(line_bytes, "line_bytes");
  positive(word_bytes, "word_bytes");
  positive(link_GBps, "link_GBps");
  positive(net_rtt_ns, "net_rtt_ns");
  positive(sram_log_bytes, "sram_log_bytes");
  positive(dram_log_bytes, "dram_log_bytes");
  positive(dump_period_us, "dump_period_us");
  positive(cpu_mhz, "cpu_mhz");
  positive(lu_mhz, "lu_mhz");
  if (line_bytes % word_bytes != 0) throw RangeError("line_bytes must be divisible by word_bytes");
  if (words_per_line() > 8) throw RangeError("at most 8 words per line (8-bit word mask)");
  if (replication_factor < 1) throw RangeError("replication_factor (Nr) must be >= 1");
  if (replication_factor > num_cns) throw RangeError("replication_factor (Nr) must be <= num_cns");
  if (num_cns > 64) throw RangeError("num_cns must be <= 64");
  if (compression_ratio <= 0.0) throw RangeError("compression_ratio must be positive");
  if (p_reorder < 0.0 || p_reorder > 1.0) throw RangeError("p_reorder must be in [0,1]");
  if (l1.size_bytes % (static_cast<std::uint64_t>(line_bytes) * l1.assoc) != 0)
    throw RangeError("l1_size must be a multiple of line_bytes * l1_assoc");
  if (llc.size_bytes % (static_cast<std::uint64_t>(line_bytes) * llc.assoc) != 0)
    throw RangeError("llc_size must be a multiple of line_bytes * llc_assoc");
}

ClusterConfig parse_config_text(std::string_view text) {
  ClusterConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    std::string_view l = line;
    if (auto hash = l.find('#'); hash != std::string_view::npos) l = l.substr(0, hash);
    l = trim(l);
    if (l.empty()) continue;
    auto eq = l.find('=');
    if (eq == std::string_view::npos) throw ConfigError(std::string(l), "expected 'key = value'");
    set_config_key(cfg, l.substr(0, eq), l.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

ClusterConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string format_config(const ClusterConfig& c) {
  std::ostringstream os;
  os << "num_cns = " << c.num_cns << "\n"
     << "num_mns = " << c.num_mns << "\n"
     << "cores_per_cn = " << c.cores_per_cn << "\n"
     << "sb_entries = " << c.sb_entries << "\n"
     << "lq_entries = " << c.lq_entries << "\n"
     << "l1_size = " << c.l1.size_bytes << "\n"
     << "l1_assoc = " << c.l1.assoc << "\n"
     << "l1_latency = " << c.l1.latency_cycles << "\n"
     << "llc_size = " << c.llc.size_bytes << "\n"
     << "llc_assoc = " << c.llc.assoc << "\n"
     << "llc_latency = " << c.llc.latency_cycles << "\n"
     << "line_bytes = " << c.line_bytes << "\n"
     << "word_bytes = " << c.word_bytes << "\n"
     << "dram_ns = " << c.dram_ns << "\n"
     << "pmem_ns = " << c.pmem_ns << "\n"
     << "link_GBps = " << c.link_GBps << "\n"
     << "net_rtt_ns = " << c.net_rtt_ns << "\n"
     << "sram_log_bytes = " << c.sram_log_bytes << "\n"
     << "sram_access_ns = " << c.sram_access_ns << "\n"
     << "dram_log_bytes = " << c.dram_log_bytes << "\n"
     << "dump_period_us = " << c.dump_period_us << "\n"
     << "replication_factor = " << c.replication_factor << "\n"
     << "compression_ratio = " << c.compression_ratio << "\n"
     << "protocol = " << to_string(c.protocol) << "\n"
     << "coalescing_enabled = " << (c.coalescing_enabled ? "true" : "false") << "\n"
     << "p_reorder = " << c.p_reorder << "\n"
     << "detect_timeout_us = " << c.detect_timeout_us << "\n"
     << "cpu_mhz = " << c.cpu_mhz << "\n"
     << "lu_mhz = " << c.lu_mhz << "\n";
  return os.str();
}

}  // namespace cxlsim
