#pragma once
// Phase of an instant within the ~11-year solar activity cycle.

#include <flare/core.hpp>

#include <cmath>
#include <numbers>

namespace flare {

struct CycleConfig {
  // 2008-12-01 00:00 UTC, start of solar cycle 24.
  Instant t_base = std::chrono::sys_days{std::chrono::year{2008} / 12 / 1};
  // 48,204 two-hour steps.
  double period_hours = 96408.0;

  void validate() const {
    if (!(period_hours > 0.0)) fail(ErrorKind::InvalidArgument, "cycle period must be positive");
  }
};

/// -cos(2 pi (t - t_base) / T); -1 at cycle minimum, +1 half a period later.
inline double cycle_phase(Instant t, const CycleConfig& cfg = {}) {
  cfg.validate();
  const double dt = hours_between(cfg.t_base, t);
  // Reduce first so large offsets keep full precision in the cosine argument.
  const double frac = std::fmod(dt, cfg.period_hours) / cfg.period_hours;
  return -std::cos(2.0 * std::numbers::pi * frac);
}

}  // namespace flare
