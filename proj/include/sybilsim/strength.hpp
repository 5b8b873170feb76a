#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sybilsim/engine.hpp"

namespace sybilsim {

/// Individual-victim setup: a single routed nmcs-user plus optional
/// background traffic. Background users report but keep their free-flow
/// routes, so they only dilute the estimate on the target.
struct VictimExperiment {
  std::shared_ptr<const RoadNetwork> network;
  Trip victim;
  std::vector<Trip> background;
  std::vector<std::string> targets;
  Tick attack_start = 0;
  Tick attack_duration = 600;
  RunOptions options;
};

struct StrengthSearchResult {
  std::vector<std::size_t> counts;
  std::vector<double> speeds;
  /// success[i][j]: counts[i] Sybils per target at speeds[j] kept the victim
  /// off every target edge.
  std::vector<std::vector<bool>> success;
  std::optional<std::size_t> min_count;
  std::optional<double> max_speed;
  /// Summed over every run of the grid.
  std::size_t gap_violations = 0;
  bool conserved = true;

  bool found() const { return min_count.has_value(); }
};

inline const std::vector<std::size_t> kDefaultStrengthCounts{2, 4, 6, 8, 10, 12, 14, 16};
inline const std::vector<double> kDefaultStrengthSpeeds{0.5, 1, 1.5, 2, 3, 4, 5, 6};

struct VictimOutcome {
  bool avoided = false;
  std::optional<Tick> arrived;
  std::vector<EdgeIdx> route_taken;
  std::size_t sybils_max_concurrent = 0;
  std::size_t gap_violations = 0;
  bool conserved = true;
};

VictimOutcome run_victim(const VictimExperiment& experiment, std::size_t count, double speed);

/// One cell: Sybils capped at `count` concurrently per target, driving at
/// `speed`. True when the victim arrives without entering any target edge.
bool victim_avoids_targets(const VictimExperiment& experiment, std::size_t count,
                           double speed);

/// Full grid search; the frontier is the smallest count with any success
/// and, at that count, the largest successful speed.
StrengthSearchResult minimal_strength_search(
    const VictimExperiment& experiment,
    const std::vector<std::size_t>& counts = kDefaultStrengthCounts,
    const std::vector<double>& speeds = kDefaultStrengthSpeeds);

}  // namespace sybilsim
