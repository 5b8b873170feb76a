#pragma once

#include <cstdint>
#include <string>

namespace sybilsim {

/// Simulation time in whole seconds (the task reporting period).
using Tick = std::int64_t;

/// One per-second user submission {id, road, speed, t}.
struct Report {
  std::string vehicle_id;
  std::string edge_id;
  double speed = 0.0;  // m/s
  Tick t = 0;

  friend bool operator==(const Report&, const Report&) = default;
};

}  // namespace sybilsim
