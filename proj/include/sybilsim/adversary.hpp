#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sybilsim/mobility.hpp"
#include "sybilsim/report.hpp"
#include "sybilsim/road_network.hpp"

namespace sybilsim {

class NmcsServer;

struct AttackSpec {
  std::vector<std::string> targets;  // edge ids
  Tick start = 0;
  Tick duration = 0;
  double sybil_speed = 0.5;
  /// Cap on Sybils spawned in total across all targets.
  std::optional<std::size_t> max_sybils;
  /// Cap on Sybils simultaneously present on each target edge.
  std::optional<std::size_t> max_active_per_target;

  /// Spawning happens for t in [start, end()).
  Tick end() const { return start + duration; }
  /// Throws std::invalid_argument on a malformed spec.
  void validate(const RoadNetwork& net) const;
};

struct TargetStrength {
  std::string edge_id;
  std::size_t spawned = 0;
  std::size_t max_concurrent = 0;
};

/// Pre-simulated ghost report streams, ordered by (t, vehicle id).
class SybilTrace {
 public:
  SybilTrace() = default;
  SybilTrace(std::vector<Report> reports, std::size_t total_spawned,
             std::size_t max_concurrent, std::vector<TargetStrength> per_target);

  const std::vector<Report>& reports() const { return reports_; }
  /// Reports stamped at second t.
  std::span<const Report> at(Tick t) const;
  std::size_t total_spawned() const { return total_spawned_; }
  std::size_t max_concurrent() const { return max_concurrent_; }
  const std::vector<TargetStrength>& per_target() const { return per_target_; }
  std::optional<Tick> first_time() const;
  std::optional<Tick> last_time() const;

 private:
  std::vector<Report> reports_;
  std::size_t total_spawned_ = 0;
  std::size_t max_concurrent_ = 0;
  std::vector<TargetStrength> per_target_;
};

/// Drives Sybils over each target edge of an otherwise empty network copy.
/// Every second of [start, end) one spawn is attempted per lane of every
/// target; a spawn is admitted under the ordinary headway rule. Sybils move
/// at min(sybil_speed, speed_limit) from the moment they appear, never leave
/// their target edge, and report once per second until they reach its end.
SybilTrace presimulate(const RoadNetwork& net, const AttackSpec& spec,
                       const SimConfig& sim_config);

/// Feeds the trace reports stamped at t into the server. Replays of the same
/// second collapse under the server's per-second resampling.
std::size_t inject(const SybilTrace& trace, NmcsServer& server, Tick t);

AttackSpec parse_attack_spec(std::string_view json_text);
AttackSpec load_attack_spec(const std::filesystem::path& path);
std::string attack_spec_to_json(const AttackSpec& spec);

void write_sybil_trace(const SybilTrace& trace, const std::filesystem::path& reports_csv,
                       const std::filesystem::path& summary_json);
SybilTrace read_sybil_trace(const std::filesystem::path& reports_csv,
                            const std::filesystem::path& summary_json);

}  // namespace sybilsim
