#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <vector>

namespace cxlsim {

// Lock ownership. Cores still pay for RdX on the lock line; this table only
// decides who wins, handing the lock FIFO to waiters on release.
class LockTable {
 public:
  using Wake = std::function<void(std::uint32_t core)>;
  explicit LockTable(Wake wake) : wake_(std::move(wake)) {}

  // True if `core` now holds the lock; otherwise it is queued (once).
  bool acquire(std::uint32_t id, std::uint32_t core);
  // Throws ProtocolViolation if `core` does not hold the lock.
  void release(std::uint32_t id, std::uint32_t core);
  // Frees locks held or reserved by dead cores and drops them from queues.
  void forget(const std::set<std::uint32_t>& dead_cores);

  std::optional<std::uint32_t> holder(std::uint32_t id) const;
  std::size_t waiters(std::uint32_t id) const;

 private:
  struct Lock {
    std::optional<std::uint32_t> holder;
    std::optional<std::uint32_t> reserved;
    std::deque<std::uint32_t> queue;
  };
  void hand_off(Lock& l);

  Wake wake_;
  std::map<std::uint32_t, Lock> locks_;
};

// Barrier rendezvous over the live cores.
class BarrierManager {
 public:
  using Release = std::function<void(std::uint32_t core)>;
  BarrierManager(std::set<std::uint32_t> participants, Release release)
      : participants_(std::move(participants)), release_(std::move(release)) {}

  void arrive(std::uint32_t id, std::uint32_t core);
  // Recomputes membership (after a crash) and releases any barrier that the
  // remaining participants have all reached.
  void set_participants(std::set<std::uint32_t> participants);
  std::size_t arrived(std::uint32_t id) const;

 private:
  void check(std::uint32_t id);

  std::set<std::uint32_t> participants_;
  Release release_;
  std::map<std::uint32_t, std::set<std::uint32_t>> arrived_;
};

}  // namespace cxlsim
