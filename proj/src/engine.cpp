#include "cxlsim/engine.hpp"

#include <algorithm>
#include <cmath>

namespace cxlsim {

SimTime SimTime::from_ns_f(double ns) {
  return SimTime{static_cast<std::uint64_t>(std::ceil(ns * 1000.0 - 1e-9))};
}

EventHandle Engine::schedule(SimTime at, ComponentId target, Action action, EventKind kind) {
  if (at < now_) {
    throw SchedulingInPast("event at " + std::to_string(at.ps) + "ps scheduled while clock is " +
                           std::to_string(now_.ps) + "ps");
  }
  const std::uint64_t seq = next_sequence_++;
  heap_.push_back(Entry{at, seq, target, kind, std::move(action)});
  std::push_heap(heap_.begin(), heap_.end(), Later{});
  live_.emplace(seq, kind);
  ++scheduled_;
  if (kind == EventKind::Foreground) ++foreground_pending_;
  return EventHandle{seq};
}

bool Engine::cancel(EventHandle handle) {
  auto it = live_.find(handle.sequence);
  if (it == live_.end()) return false;
  if (it->second == EventKind::Foreground) --foreground_pending_;
  live_.erase(it);
  ++cancelled_;
  return true;
}

bool Engine::step() {
  while (!heap_.empty()) {
    std::pop_heap(heap_.begin(), heap_.end(), Later{});
    Entry e = std::move(heap_.back());
    heap_.pop_back();
    auto it = live_.find(e.sequence);
    if (it == live_.end()) continue;  // cancelled
    live_.erase(it);
    if (e.kind == EventKind::Foreground) --foreground_pending_;
    if (e.fire_time > time_limit_) {
      throw SimError("simulation exceeded time limit of " + std::to_string(time_limit_.ps) + "ps");
    }
    now_ = e.fire_time;
    current_target_ = e.target;
    ++delivered_;
    e.action();
    return true;
  }
  return false;
}

void Engine::raise_deadlock(const std::string& why) const {
  std::vector<std::string> blocked;
  if (blocked_reporter_) blocked = blocked_reporter_();
  std::string msg = why;
  for (const auto& b : blocked) msg += "\n  blocked: " + b;
  throw Deadlock(msg, std::move(blocked));
}

SimTime Engine::run_until(const std::function<bool()>& done) {
  while (!done()) {
    if (foreground_pending_ == 0) {
      raise_deadlock("event queue drained at " + std::to_string(now_.ps) +
                     "ps with run predicate still false");
    }
    if (!step()) raise_deadlock("event queue empty");
  }
  return now_;
}

SimTime Engine::run_until_quiescent() {
  while (foreground_pending_ > 0) {
    if (!step()) break;
  }
  return now_;
}

EngineStats Engine::stats() const {
  return EngineStats{scheduled_, delivered_, cancelled_, static_cast<std::uint64_t>(live_.size())};
}

}  // namespace cxlsim
