#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sybilsim/adversary.hpp"
#include "sybilsim/engine.hpp"
#include "sybilsim/metrics.hpp"
#include "sybilsim/routing.hpp"

namespace sybilsim {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Grid with optional arterials: every `arterial_every`-th row and column
/// (counting from 0) gets the arterial speed limit and lane count.
struct GridSpec {
  int rows = 6;
  int cols = 6;
  double edge_length = 200.0;
  double speed_limit = 13.89;
  int lanes = 1;
  int arterial_every = 0;
  double arterial_speed_limit = 22.22;
  int arterial_lanes = 2;
};

RoadNetwork generate_grid_network(const GridSpec& spec);

/// Time-of-day analogs: heavy south-to-north, heavy north-to-south, light
/// uniform.
enum class DemandProfile { kMorning, kAfternoon, kEvening };

std::string_view to_string(DemandProfile profile);
DemandProfile parse_profile(std::string_view text);

struct SyntheticDemand {
  std::size_t n_vehicles = 500;
  /// Departures fall in [0, depart_window); the light profile uses twice that.
  Tick depart_window = 900;
  DemandProfile profile = DemandProfile::kEvening;
  /// Share of trips drawn from the directional bands in the rush profiles.
  double directional_share = 0.7;
};

/// Seeded synthetic trips with connected OD pairs, ids veh00000.. in
/// departure order, all benign-non-user until roles are assigned.
std::vector<Trip> generate_demand(const RoadNetwork& net, const SyntheticDemand& spec,
                                  std::uint64_t seed);

/// Marks exactly floor(n * rate + 0.5) trips as nmcs-users, chosen by a
/// seeded shuffle.
void assign_roles(std::vector<Trip>& trips, double penetration_rate, std::uint64_t seed);

struct SweepSpec {
  /// Each entry is one attack's target set; empty means use the top
  /// `auto_targets` edges from target selection, one per attack.
  std::vector<std::vector<std::string>> targets;
  std::size_t auto_targets = 1;
  std::vector<Tick> durations{1200, 2400, 3600};
  std::vector<DemandProfile> profiles{DemandProfile::kMorning, DemandProfile::kAfternoon,
                                      DemandProfile::kEvening};
  std::vector<double> speeds{0.5};
  Tick attack_start = 600;
  std::optional<std::size_t> max_sybils;
  std::optional<std::size_t> max_active_per_target;
  /// 0 = one per hardware thread.
  unsigned jobs = 0;
};

struct ScenarioConfig {
  std::uint64_t seed = 1;
  std::optional<std::filesystem::path> network_path;
  GridSpec grid;
  std::optional<std::filesystem::path> demand_path;
  SyntheticDemand synthetic;
  double penetration_rate = 0.5;
  WindowConfig window;
  SimConfig sim;
  double speed_floor = kDefaultSpeedFloor;
  Tick horizon = 4 * 3600;
  std::optional<AttackSpec> attack;
  std::size_t target_count = 5;
  TargetSelectionOptions target_selection;
  SweepSpec sweep;

  /// Throws ConfigError.
  void validate() const;
};

/// Relative paths are resolved against `base_dir`.
ScenarioConfig parse_scenario(std::string_view json_text,
                              const std::filesystem::path& base_dir = {});
ScenarioConfig load_scenario(const std::filesystem::path& path);
/// Canonical form with every default spelled out (sorted keys).
std::string scenario_to_json(const ScenarioConfig& config);

RoadNetwork build_network(const ScenarioConfig& config);
/// Demand file if given, otherwise synthetic demand (optionally with another
/// profile); roles assigned at the penetration rate unless read from file.
std::vector<Trip> build_demand(const ScenarioConfig& config, const RoadNetwork& net,
                               std::optional<DemandProfile> profile = std::nullopt);
RunOptions run_options(const ScenarioConfig& config, std::string run_id);

struct SweepCell {
  std::vector<std::string> targets;
  Tick duration = 0;
  DemandProfile profile = DemandProfile::kEvening;
  double speed = 0.5;

  std::string label() const;
  /// Group key used for aggregation: targets, duration, time of day.
  std::string group() const;
};

struct SweepCellResult {
  SweepCell cell;
  std::optional<ImpactReport> report;
  std::string error;
  /// Baseline plus attack run.
  std::size_t gap_violations = 0;
  bool conserved = true;
};

struct SweepResult {
  std::vector<SweepCellResult> cells;
  AggregateSummary summary;
};

/// Cartesian product targets x durations x profiles x speeds.
std::vector<SweepCell> sweep_cells(const ScenarioConfig& config, const RoadNetwork& net);

/// Paired baseline/attack per cell (baselines shared per profile). Cells run
/// on independent workers; results come back in cell order. A failing cell
/// records its error and the sweep continues.
SweepResult run_sweep(const ScenarioConfig& config,
                      std::shared_ptr<const RoadNetwork> network);

/// cells.csv, summary.json and one impact directory per cell.
void write_sweep(const SweepResult& result, const std::filesystem::path& dir);

/// FNV-1a 64-bit.
std::uint64_t fnv1a64(std::string_view data);

}  // namespace sybilsim
