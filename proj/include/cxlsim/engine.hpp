#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cxlsim/errors.hpp"
#include "cxlsim/sim_time.hpp"

namespace cxlsim {

using ComponentId = std::uint32_t;

// Background events (periodic timers) do not keep a run alive: a queue holding
// only background events counts as empty for deadlock detection.
enum class EventKind : std::uint8_t { Foreground, Background };

struct EventHandle {
  std::uint64_t sequence = 0;
  bool valid() const { return sequence != 0; }
};

struct EngineStats {
  std::uint64_t scheduled = 0;
  std::uint64_t delivered = 0;
  std::uint64_t cancelled = 0;
  std::uint64_t pending = 0;
};

class Engine {
 public:
  using Action = std::function<void()>;
  using BlockedReporter = std::function<std::vector<std::string>()>;

  Engine() = default;
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  SimTime now() const { return now_; }

  EventHandle schedule(SimTime at, ComponentId target, Action action,
                       EventKind kind = EventKind::Foreground);
  EventHandle schedule_after(SimTime delay, ComponentId target, Action action,
                             EventKind kind = EventKind::Foreground) {
    return schedule(now_ + delay, target, std::move(action), kind);
  }

  // Returns false if the event already fired or was already cancelled.
  bool cancel(EventHandle handle);

  // Processes events in (fire_time, sequence) order until `done` holds. Throws
  // Deadlock when only background events remain and `done` is still false.
  SimTime run_until(const std::function<bool()>& done);

  // Processes events until no foreground event remains.
  SimTime run_until_quiescent();

  void set_blocked_reporter(BlockedReporter r) { blocked_reporter_ = std::move(r); }
  void set_time_limit(SimTime limit) { time_limit_ = limit; }

  EngineStats stats() const;
  std::uint64_t foreground_pending() const { return foreground_pending_; }
  ComponentId current_target() const { return current_target_; }

 private:
  struct Entry {
    SimTime fire_time;
    std::uint64_t sequence;
    ComponentId target;
    EventKind kind;
    Action action;
  };
  struct Later {
    bool operator()(const Entry& a, const Entry& b) const {
      if (a.fire_time != b.fire_time) return a.fire_time > b.fire_time;
      return a.sequence > b.sequence;
    }
  };

  bool step();
  [[noreturn]] void raise_deadlock(const std::string& why) const;

  SimTime now_{};
  SimTime time_limit_ = SimTime::max();
  std::uint64_t next_sequence_ = 1;
  std::vector<Entry> heap_;
  // Live events by sequence; entries are erased when fired or cancelled.
  std::unordered_map<std::uint64_t, EventKind> live_;
  std::uint64_t foreground_pending_ = 0;
  std::uint64_t scheduled_ = 0;
  std::uint64_t delivered_ = 0;
  std::uint64_t cancelled_ = 0;
  ComponentId current_target_ = 0;
  BlockedReporter blocked_reporter_;
};

}  // namespace cxlsim
