#pragma once

#include <compare>
#include <cstdint>
#include <limits>
#include <ostream>

namespace cxlsim {

// Simulated time in picoseconds. 2.4 GHz and 500 MHz cycles both land on whole
// picoseconds after rounding up, so nothing accumulates fractional drift.
struct SimTime {
  std::uint64_t ps = 0;

  constexpr SimTime() = default;
  constexpr explicit SimTime(std::uint64_t picoseconds) : ps(picoseconds) {}

  static constexpr SimTime zero() { return SimTime{0}; }
  static constexpr SimTime max() {
    return SimTime{std::numeric_limits<std::uint64_t>::max()};
  }
  static constexpr SimTime from_ps(std::uint64_t v) { return SimTime{v}; }
  static constexpr SimTime from_ns(std::uint64_t v) { return SimTime{v * 1000}; }
  static constexpr SimTime from_us(std::uint64_t v) { return SimTime{v * 1000000}; }

  // Fractional nanoseconds, rounded up to the next picosecond.
  static SimTime from_ns_f(double ns);

  // Duration of `cycles` clock cycles at `mhz`, rounded up.
  static constexpr SimTime cycles(std::uint64_t cycles, std::uint64_t mhz) {
    const std::uint64_t num = cycles * 1000000ULL;
    return SimTime{(num + mhz - 1) / mhz};
  }

  constexpr double ns() const { return static_cast<double>(ps) / 1000.0; }
  constexpr double us() const { return static_cast<double>(ps) / 1e6; }

  constexpr auto operator<=>(const SimTime&) const = default;

  constexpr SimTime operator+(SimTime o) const { return SimTime{ps + o.ps}; }
  constexpr SimTime operator-(SimTime o) const { return SimTime{ps - o.ps}; }
  constexpr SimTime& operator+=(SimTime o) {
    ps += o.ps;
    return *this;
  }
};

inline std::ostream& operator<<(std::ostream& os, SimTime t) {
  return os << t.ps << "ps";
}

constexpr std::uint64_t kCoreMhz = 2400;
constexpr std::uint64_t kLoggingUnitMhz = 500;

constexpr SimTime core_cycles(std::uint64_t n, std::uint64_t mhz = kCoreMhz) {
  return SimTime::cycles(n, mhz);
}

}  // namespace cxlsim
