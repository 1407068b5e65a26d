#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cxlsim/engine.hpp"
#include "cxlsim/message.hpp"

namespace cxlsim {

struct CrashPlan {
  std::vector<std::uint32_t> victims;        // crash simultaneously
  std::optional<SimTime> at;                 // absolute time, or
  std::optional<std::uint64_t> after_commits;  // after the Nth remote commit cluster-wide
};

// Parses "cn=0,t=12.5ms" / "cn=1+4,commit=500" (t accepts ps, ns, us, ms).
CrashPlan parse_crash_spec(const std::string& spec);
std::string format_crash_spec(const CrashPlan& plan);

// Oracle-side record of every remote store. Never consulted by the protocol.
class GoldenHistory {
 public:
  struct Update {
    std::uint64_t value;
    SimTime time;
    std::uint32_t core;
  };

  // Word-granular addresses (line + 8 * word).
  void on_commit(std::uint32_t core, Addr line, std::uint8_t mask, const LineData& values, SimTime t,
                 std::uint32_t word_bytes = 8);
  void on_repl_issued(Addr line, std::uint8_t mask, const LineData& values, std::uint32_t word_bytes = 8);

  std::optional<std::uint64_t> last(Addr word) const;
  const std::vector<Update>* history(Addr word) const;
  bool in_flight(Addr word, std::uint64_t value) const;
  const std::map<Addr, std::vector<Update>>& committed() const { return committed_; }
  std::uint64_t commits() const { return commits_; }
  // Commits whose trace positions went backwards for their core.
  std::uint64_t tso_violations() const { return tso_violations_; }

 private:
  std::map<Addr, std::vector<Update>> committed_;
  std::map<Addr, std::set<std::uint64_t>> in_flight_;
  std::map<std::uint32_t, std::uint64_t> last_op_;
  std::uint64_t commits_ = 0;
  std::uint64_t tso_violations_ = 0;
};

struct WordDiff {
  Addr word = 0;
  std::uint64_t expected = 0;
  std::uint64_t actual = 0;
  std::string why;
};

struct Verdict {
  bool pass = true;
  std::uint64_t words_checked = 0;
  std::uint64_t lost_commits = 0;  // recovered value older than the last committed one
  std::uint64_t in_flight_accepted = 0;
  std::vector<WordDiff> diffs;     // first few only
  std::vector<std::string> problems;

  void fail(std::string why);
  void merge(const Verdict& o);
};

// Compares an image against the oracle: every word must hold its last
// committed value, or a value from an update still in flight when
// `allow_in_flight` is set.
Verdict verify_image(const std::map<Addr, std::uint64_t>& image, const GoldenHistory& oracle,
                     bool allow_in_flight);

struct RecoveryReport {
  std::vector<std::uint32_t> victims;
  std::uint32_t cm_cn = 0;
  SimTime crash_time{};
  SimTime detect_time{};
  SimTime msi_time{};
  SimTime interrupt_done{};
  SimTime init_recov_done{};
  SimTime recov_end_done{};
  std::uint64_t owned_at_crash = 0;
  std::uint64_t shared_at_crash = 0;
  std::uint64_t repaired_lines = 0;
  std::uint64_t repaired_words_logs = 0;
  std::uint64_t repaired_words_persisted = 0;
  std::uint64_t divergent_words = 0;
  std::uint64_t sharer_bits_removed = 0;
  std::uint64_t fetches = 0;
  std::uint64_t messages = 0;
  std::uint64_t expected_messages = 0;
  std::uint64_t live_cns = 0;
  Verdict verdict;
};

class RecoveryHost {
 public:
  virtual ~RecoveryHost() = default;
  virtual Engine& host_engine() = 0;
  virtual void host_send(Message m) = 0;
  virtual std::vector<std::uint32_t> live_cns() const = 0;
  virtual std::vector<std::uint32_t> pending_victims() const = 0;
  virtual std::uint32_t num_mns() const = 0;
  virtual NodeId mn_node(std::uint32_t i) const = 0;
  virtual std::uint64_t recovery_messages_sent() const = 0;
  // Cluster-wide bookkeeping that must precede RecovEnd (epoch, replica map,
  // barrier membership, orphaned locks) plus the RecovEnd-time checks.
  virtual std::uint32_t prepare_recov_end(const std::vector<std::uint32_t>& victims, RecoveryReport& report) = 0;
};

// Configuration Manager logic, run on the CN that received the MSI.
class RecoveryCoordinator {
 public:
  explicit RecoveryCoordinator(RecoveryHost& host) : host_(host) {}

  void on_msi(std::uint32_t cm_cn, std::uint32_t victim);
  void on_response(const Message& m);
  bool active() const { return phase_ != Phase::Idle; }
  const std::vector<RecoveryReport>& reports() const { return reports_; }

 private:
  enum class Phase { Idle, Interrupting, Recovering, Ending };
  void begin(std::uint32_t cm_cn);
  void broadcast(MsgKind kind, const std::vector<NodeId>& dsts, std::shared_ptr<const Bulk> bulk,
                 std::uint32_t epoch = 0);

  RecoveryHost& host_;
  Phase phase_ = Phase::Idle;
  std::uint64_t id_ = 0;
  std::uint32_t cm_ = 0;
  std::uint32_t awaiting_ = 0;
  std::uint64_t msgs_at_start_ = 0;
  std::vector<std::uint32_t> live_;
  RecoveryReport current_;
  std::vector<RecoveryReport> reports_;
};

}  // namespace cxlsim
