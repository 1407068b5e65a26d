#include "cxlsim/trace.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "cxlsim/errors.hpp"

namespace cxlsim {

std::size_t Trace::total_ops() const {
  std::size_t n = 0;
  for (const auto& c : cores) n += c.size();
  return n;
}

void Trace::check_barriers() const {
  std::vector<std::map<std::uint32_t, std::size_t>> counts(cores.size());
  std::map<std::uint32_t, bool> ids;
  for (std::size_t c = 0; c < cores.size(); ++c) {
    for (const auto& op : cores[c]) {
      if (op.kind == OpKind::Barrier) {
        ++counts[c][op.sync_id];
        ids[op.sync_id] = true;
      }
    }
  }
  for (const auto& [id, _] : ids) {
    const std::size_t expect = counts.empty() ? 0 : counts[0][id];
    for (std::size_t c = 0; c < counts.size(); ++c) {
      if (counts[c][id] != expect) {
        throw BarrierMismatch("barrier " + std::to_string(id) + " appears " +
                              std::to_string(counts[c][id]) + " times on core " + std::to_string(c) +
                              " but " + std::to_string(expect) + " times on core 0");
      }
    }
  }
}

void write_trace(std::ostream& out, const Trace& trace) {
  out << "# cores " << trace.cores.size() << "\n";
  char buf[32];
  for (std::size_t c = 0; c < trace.cores.size(); ++c) {
    for (const auto& op : trace.cores[c]) {
      out << 'c' << c << ' ';
      switch (op.kind) {
        case OpKind::Load:
        case OpKind::Store: {
          auto [end, _] = std::to_chars(buf, buf + sizeof(buf), op.addr, 16);
          out << (op.kind == OpKind::Load ? "LD 0x" : "ST 0x") << std::string_view(buf, end - buf)
              << (op.remote ? " R" : " L");
          break;
        }
        case OpKind::LockAcq: out << "LOCK " << op.sync_id; break;
        case OpKind::LockRel: out << "UNLOCK " << op.sync_id; break;
        case OpKind::Barrier: out << "BAR " << op.sync_id; break;
        case OpKind::Compute: out << "CMP " << op.cycles; break;
      }
      out << '\n';
    }
  }
}

void write_trace(const std::filesystem::path& path, const Trace& trace) {
  std::ofstream out(path);
  if (!out) throw SimError("cannot write trace file " + path.string());
  write_trace(out, trace);
}

namespace {

template <class T>
T parse_num(std::string_view tok, int base, std::size_t line_no, const char* what) {
  if (base == 16 && tok.size() > 2 && tok[0] == '0' && (tok[1] == 'x' || tok[1] == 'X')) {
    tok.remove_prefix(2);
  }
  T v{};
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v, base);
  if (tok.empty() || ec != std::errc{} || ptr != tok.data() + tok.size()) {
    throw ParseError(line_no, std::string("bad ") + what + " '" + std::string(tok) + "'");
  }
  return v;
}

}  // namespace

Trace parse_trace(std::istream& in) {
  Trace trace;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) {
      std::string_view comment = line.substr(hash + 1);
      std::istringstream cs{std::string(comment)};
      std::string word;
      std::size_t n = 0;
      if (line.substr(0, hash).find_first_not_of(" \t\r") == std::string_view::npos &&
          (cs >> word) && word == "cores" && (cs >> n)) {
        if (trace.cores.size() < n) trace.cores.resize(n);
      }
      line = line.substr(0, hash);
    }
    std::istringstream ls{std::string(line)};
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    if (tok[0].size() < 2 || tok[0][0] != 'c') throw ParseError(line_no, "expected core tag c<N>");
    const auto core = parse_num<std::size_t>(std::string_view(tok[0]).substr(1), 10, line_no, "core");
    if (tok.size() < 2) throw ParseError(line_no, "missing op mnemonic");
    const std::string& m = tok[1];
    TraceOp op;
    auto need = [&](std::size_t n) {
      if (tok.size() != n) throw ParseError(line_no, "wrong operand count for " + m);
    };
    if (m == "LD" || m == "ST") {
      need(4);
      op.kind = m == "LD" ? OpKind::Load : OpKind::Store;
      op.addr = parse_num<Addr>(tok[2], 16, line_no, "address");
      if (tok[3] == "R") {
        op.remote = true;
      } else if (tok[3] == "L") {
        op.remote = false;
      } else {
        throw ParseError(line_no, "expected R or L, got '" + tok[3] + "'");
      }
      if (op.remote != is_remote(op.addr)) {
        throw ParseError(line_no, "remote flag disagrees with address bit 47");
      }
    } else if (m == "LOCK" || m == "UNLOCK" || m == "BAR") {
      need(3);
      op.kind = m == "LOCK" ? OpKind::LockAcq : m == "UNLOCK" ? OpKind::LockRel : OpKind::Barrier;
      op.sync_id = parse_num<std::uint32_t>(tok[2], 10, line_no, "sync id");
    } else if (m == "CMP") {
      need(3);
      op.kind = OpKind::Compute;
      op.cycles = parse_num<std::uint32_t>(tok[2], 10, line_no, "cycle count");
    } else {
      throw ParseError(line_no, "unknown op mnemonic '" + m + "'");
    }
    if (trace.cores.size() <= core) trace.cores.resize(core + 1);
    trace.cores[core].push_back(op);
  }
  trace.check_barriers();
  return trace;
}

Trace load_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SimError("cannot open trace file " + path.string());
  return parse_trace(in);
}

}  // namespace cxlsim
