#include "cxlsim/sync.hpp"

#include <algorithm>
#include <string>

#include "cxlsim/errors.hpp"

namespace cxlsim {

bool LockTable::acquire(std::uint32_t id, std::uint32_t core) {
  auto& l = locks_[id];
  if (l.holder == core) return true;
  if (!l.holder && (!l.reserved || *l.reserved == core)) {
    l.holder = core;
    l.reserved.reset();
    return true;
  }
  if (std::find(l.queue.begin(), l.queue.end(), core) == l.queue.end() && l.reserved != core) {
    l.queue.push_back(core);
  }
  return false;
}

void LockTable::hand_off(Lock& l) {
  if (l.holder || l.reserved || l.queue.empty()) return;
  l.reserved = l.queue.front();
  l.queue.pop_front();
  wake_(*l.reserved);
}

void LockTable::release(std::uint32_t id, std::uint32_t core) {
  auto& l = locks_[id];
  if (l.holder != core) {
    throw ProtocolViolation("core " + std::to_string(core) + " released lock " + std::to_string(id) +
                            " it does not hold");
  }
  l.holder.reset();
  hand_off(l);
}

void LockTable::forget(const std::set<std::uint32_t>& dead) {
  for (auto& [id, l] : locks_) {
    std::erase_if(l.queue, [&](std::uint32_t c) { return dead.count(c) > 0; });
    if (l.holder && dead.count(*l.holder)) l.holder.reset();
    if (l.reserved && dead.count(*l.reserved)) l.reserved.reset();
    hand_off(l);
  }
}

std::optional<std::uint32_t> LockTable::holder(std::uint32_t id) const {
  auto it = locks_.find(id);
  return it == locks_.end() ? std::nullopt : it->second.holder;
}

std::size_t LockTable::waiters(std::uint32_t id) const {
  auto it = locks_.find(id);
  return it == locks_.end() ? 0 : it->second.queue.size();
}

void BarrierManager::arrive(std::uint32_t id, std::uint32_t core) {
  arrived_[id].insert(core);
  check(id);
}

void BarrierManager::check(std::uint32_t id) {
  auto& a = arrived_[id];
  for (auto p : participants_) {
    if (!a.count(p)) return;
  }
  std::set<std::uint32_t> released;
  released.swap(a);
  for (auto c : released) {
    if (participants_.count(c)) release_(c);
  }
}

void BarrierManager::set_participants(std::set<std::uint32_t> participants) {
  participants_ = std::move(participants);
  std::vector<std::uint32_t> ids;
  for (const auto& [id, a] : arrived_) ids.push_back(id);
  for (auto id : ids) {
    if (!arrived_[id].empty()) check(id);
  }
}

std::size_t BarrierManager::arrived(std::uint32_t id) const {
  auto it = arrived_.find(id);
  return it == arrived_.end() ? 0 : it->second.size();
}

}  // namespace cxlsim
