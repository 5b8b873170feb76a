#pragma once

#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "sybilsim/adversary.hpp"
#include "sybilsim/engine.hpp"

namespace sybilsim {

using VehicleSet = std::set<std::string>;

/// nmcs-users of the baseline entering a target edge with entry time in
/// [start, start + duration].
VehicleSet affected_users(const RunArtifacts& baseline, const AttackSpec& spec,
                          const RoadNetwork& net);

struct Classification {
  VehicleSet did_enter;
  VehicleSet did_not_enter;
  /// Affected vehicles that never departed in the attack run.
  VehicleSet missing;
};

Classification classify(const VehicleSet& affected, const RunArtifacts& attack_run,
                        const AttackSpec& spec, const RoadNetwork& net);

struct Segment {
  EdgeIdx start_edge = 0;
  EdgeIdx end_edge = 0;
  bool start_fallback = false;
  bool end_fallback = false;
};

/// Shared edges bracketing the deviation around the targets: nearest edge
/// before the first target (resp. after the last) on the baseline route that
/// the attack route also uses. Falls back to the baseline origin/destination
/// edge, flagged. nullopt when the baseline route holds no target.
std::optional<Segment> divergence_segment(std::span<const EdgeIdx> route_base,
                                          std::span<const EdgeIdx> route_attack,
                                          std::span<const EdgeIdx> targets);

/// Exit of the last edge minus entry of the first, over the whole trip or
/// from the entry of segment.start_edge to the exit of segment.end_edge.
/// nullopt for unfinished trips or a segment not traversed.
std::optional<double> travel_time(const RunArtifacts& run, std::string_view vehicle,
                                  const std::optional<Segment>& segment = std::nullopt);

/// Travel time minus the sum of length / speed_limit over the edges driven.
std::optional<double> time_loss(const RunArtifacts& run, const RoadNetwork& net,
                                std::string_view vehicle,
                                const std::optional<Segment>& segment = std::nullopt);

/// |did_not_enter| / (|did_not_enter| + |did_enter|); nullopt if both are 0.
std::optional<double> sample_ratio(std::size_t did_not_enter, std::size_t did_enter);

struct TimeRange {
  Tick from = std::numeric_limits<Tick>::min();
  Tick to = std::numeric_limits<Tick>::max();
};

/// Per edge (all edges, id order): entries by `users` in the attack run minus
/// entries in the baseline, counting entry times within `range`.
std::map<std::string, long long> flow_delta(const RunArtifacts& baseline,
                                            const RunArtifacts& attack_run,
                                            const VehicleSet& users, const RoadNetwork& net,
                                            TimeRange range = {});

struct VehicleImpact {
  std::string id;
  bool did_enter = false;
  bool segment_fallback = false;
  std::optional<double> travel_time_base;
  std::optional<double> travel_time_attack;
  std::optional<double> time_loss_base;
  std::optional<double> time_loss_attack;

  std::optional<double> travel_time_pct() const;
  std::optional<double> time_loss_pct() const;
};

struct ImpactReport {
  std::string group;
  AttackSpec attack;
  VehicleSet affected;
  Classification sets;
  std::optional<double> sample_ratio;
  /// Did Not Enter compares divergence segments, Did Enter whole trips.
  std::vector<VehicleImpact> vehicles;
  std::size_t unfinished_excluded = 0;
  std::map<std::string, long long> flow_delta;
  std::size_t sybils_spawned = 0;
  std::size_t sybils_max_concurrent = 0;
  /// Mean number of active nmcs-users over the attack period.
  double mean_active_users = 0.0;
};

/// Pairs a baseline with an attack run sharing seed and demand. Flow deltas
/// count affected users' entries from the attack start onward.
ImpactReport compute_impact(const RoadNetwork& net, const RunArtifacts& baseline,
                            const RunArtifacts& attack_run, const AttackSpec& spec,
                            std::string group = {});

struct AggregateRow {
  std::string group;
  std::size_t reports = 0;
  std::size_t did_not_enter = 0;
  std::optional<double> median_travel_time_pct;
  std::optional<double> median_time_loss_pct;
  std::optional<double> mean_sample_ratio;
};

struct AggregateSummary {
  std::vector<AggregateRow> rows;  // group order
  /// Per-report mean travel-time change weighted by Did Not Enter size.
  std::optional<double> weighted_mean_travel_time_pct;
  std::size_t weighted_population = 0;
  std::size_t reports_without_did_not_enter = 0;
  std::size_t zero_baseline_skipped = 0;
};

AggregateSummary aggregate(const std::vector<ImpactReport>& reports);

std::optional<double> median(std::vector<double> values);

std::string impact_to_json(const ImpactReport& report);
void write_impact(const ImpactReport& report, const std::filesystem::path& dir);
std::string aggregate_to_json(const AggregateSummary& summary);

}  // namespace sybilsim
