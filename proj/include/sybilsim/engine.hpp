#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "sybilsim/adversary.hpp"
#include "sybilsim/mobility.hpp"
#include "sybilsim/road_network.hpp"
#include "sybilsim/server.hpp"

namespace sybilsim {

struct RunOptions {
  std::string run_id = "run";
  SimConfig sim;
  WindowConfig window;
  double speed_floor = kDefaultSpeedFloor;
  /// Hard stop; trips still running are reported as unfinished.
  Tick horizon = 6 * 3600;
  bool record_estimates = false;
  /// When set, only these nmcs-users follow server routes; the remaining
  /// users still report but drive their free-flow route.
  std::optional<std::set<std::string>> routed_users;
};

struct VehicleRecord {
  std::string id;
  Role role = Role::kNonUser;
  Tick depart = 0;
  EdgeIdx origin = 0;
  EdgeIdx destination = 0;
  std::optional<Tick> inserted;
  std::optional<Tick> arrived;
  std::vector<EdgeIdx> route_taken;
};

struct SybilSummary {
  std::size_t total_spawned = 0;
  std::size_t max_concurrent = 0;
  std::size_t injected_reports = 0;
};

struct RunArtifacts {
  std::string run_id;
  std::uint64_t seed = 0;
  std::optional<AttackSpec> attack;
  /// Sorted by (vehicle_id, entry_time).
  std::vector<TraceEvent> traces;
  /// Sorted by id; one per demand trip.
  std::vector<VehicleRecord> vehicles;
  SimStats stats;
  bool conserved = true;
  Tick end_time = 0;
  std::size_t unfinished = 0;
  std::optional<SybilSummary> sybils;
  std::vector<EstimateRow> estimates;
  /// Active nmcs-users at each second, index = t.
  std::vector<std::size_t> active_users;

  const VehicleRecord* vehicle(std::string_view id) const;
  /// Trace events of one vehicle in traversal order.
  std::vector<const TraceEvent*> events_of(std::string_view id) const;
};

/// Runs one co-simulation in lockstep seconds: mobility step, user reports,
/// Sybil injection, window ingest, and at slide boundaries estimate refresh
/// plus rerouting. An attack with zero duration (or no attack) gives the
/// baseline. `trace` may carry a pre-simulated attack; otherwise one is
/// pre-simulated from `attack`.
RunArtifacts run_simulation(std::shared_ptr<const RoadNetwork> network,
                            const std::vector<Trip>& demand, const RunOptions& options,
                            const AttackSpec* attack = nullptr,
                            const SybilTrace* trace = nullptr);

// Demand file: JSON list of {"id","depart","origin","destination","role"}.
std::vector<Trip> parse_demand(std::string_view json_text, const RoadNetwork& net);
std::vector<Trip> load_demand(const std::filesystem::path& path, const RoadNetwork& net);
std::string demand_to_json(const std::vector<Trip>& demand, const RoadNetwork& net);

// Run artifacts on disk: traces.csv, vehicles.csv, run.json (+ estimates.csv).
void write_traces_csv(const RunArtifacts& run, const RoadNetwork& net,
                      const std::filesystem::path& path);
void write_estimates_csv(const RunArtifacts& run, const std::filesystem::path& path);
void write_run(const RunArtifacts& run, const RoadNetwork& net,
               const std::filesystem::path& dir);
RunArtifacts read_run(const std::filesystem::path& dir, const RoadNetwork& net);

}  // namespace sybilsim
