#include "sybilsim/strength.hpp"

#include <algorithm>

namespace sybilsim {

VictimOutcome run_victim(const VictimExperiment& experiment, std::size_t count, double speed) {
  const RoadNetwork& net = *experiment.network;
  AttackSpec spec;
  spec.targets = experiment.targets;
  spec.start = experiment.attack_start;
  spec.duration = experiment.attack_duration;
  spec.sybil_speed = speed;
  spec.max_active_per_target = count;

  Trip victim = experiment.victim;
  victim.role = Role::kUser;
  std::vector<Trip> demand = experiment.background;
  demand.push_back(victim);

  RunOptions options = experiment.options;
  options.routed_users = std::set<std::string>{victim.id};
  const RunArtifacts run = run_simulation(experiment.network, demand, options, &spec);

  VictimOutcome out;
  out.gap_violations = run.stats.gap_violations;
  out.conserved = run.conserved;
  if (run.sybils) out.sybils_max_concurrent = run.sybils->max_concurrent;
  const VehicleRecord* rec = run.vehicle(victim.id);
  if (rec == nullptr) return out;
  out.arrived = rec->arrived;
  out.route_taken = rec->route_taken;
  if (!rec->arrived) return out;
  std::vector<EdgeIdx> targets;
  for (const auto& t : spec.targets) targets.push_back(net.edge_index(t));
  out.avoided = std::none_of(rec->route_taken.begin(), rec->route_taken.end(), [&](EdgeIdx e) {
    return std::find(targets.begin(), targets.end(), e) != targets.end();
  });
  return out;
}

bool victim_avoids_targets(const VictimExperiment& experiment, std::size_t count,
                           double speed) {
  return run_victim(experiment, count, speed).avoided;
}

StrengthSearchResult minimal_strength_search(const VictimExperiment& experiment,
                                             const std::vector<std::size_t>& counts,
                                             const std::vector<double>& speeds) {
  StrengthSearchResult result;
  result.counts = counts;
  result.speeds = speeds;
  std::sort(result.counts.begin(), result.counts.end());
  std::sort(result.speeds.begin(), result.speeds.end());
  result.success.assign(result.counts.size(), std::vector<bool>(result.speeds.size(), false));

  for (std::size_t i = 0; i < result.counts.size(); ++i) {
    for (std::size_t j = 0; j < result.speeds.size(); ++j) {
      const VictimOutcome o = run_victim(experiment, result.counts[i], result.speeds[j]);
      result.success[i][j] = o.avoided;
      result.gap_violations += o.gap_violations;
      result.conserved = result.conserved && o.conserved;
    }
  }
  for (std::size_t i = 0; i < result.counts.size() && !result.min_count; ++i) {
    for (std::size_t j = result.speeds.size(); j-- > 0;) {
      if (result.success[i][j]) {
        result.min_count = result.counts[i];
        result.max_speed = result.speeds[j];
        break;
      }
    }
  }
  return result;
}

}  // namespace sybilsim
