#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sybilsim/report.hpp"
#include "sybilsim/road_network.hpp"
#include "sybilsim/routing.hpp"

namespace sybilsim {

enum class Role { kNonUser, kUser, kSybil };

std::string_view to_string(Role role);
Role parse_role(std::string_view text);

struct SimConfig {
  double dt = 1.0;
  double vehicle_length = 5.0;
  double min_gap = 2.5;
  double accel = 2.6;
  std::uint64_t seed = 0;

  double headway() const { return vehicle_length + min_gap; }
  void validate() const;
};

/// A demand entry: one trip to insert once `depart` is reached.
struct Trip {
  std::string id;
  Tick depart = 0;
  EdgeIdx origin = 0;
  EdgeIdx destination = 0;
  Role role = Role::kNonUser;
};

struct Vehicle {
  std::string id;
  Tick depart = 0;
  EdgeIdx origin = 0;
  EdgeIdx destination = 0;
  Role role = Role::kNonUser;
  /// Planned edges; route[route_pos] is the current edge.
  std::vector<EdgeIdx> route;
  std::size_t route_pos = 0;
  int lane = 0;
  double position = 0.0;  // front bumper, meters from edge start
  double speed = 0.0;
  double max_speed_cap = std::numeric_limits<double>::infinity();

  EdgeIdx current_edge() const { return route[route_pos]; }
  bool on_last_edge() const { return route_pos + 1 == route.size(); }
};

struct TraceEvent {
  std::string vehicle_id;
  EdgeIdx edge = 0;
  Tick entry_time = 0;
  std::optional<Tick> exit_time;
};

struct SimStats {
  std::size_t inserted = 0;
  std::size_t arrived = 0;
  std::size_t gap_violations = 0;
  std::size_t speed_violations = 0;
  std::size_t blocked_insertions = 0;
  std::size_t unroutable = 0;
};

/// Computes the planned route for a trip at insertion time.
using RouteProvider = std::function<std::optional<Route>(const Trip&)>;

/// Discrete-time car-following simulation. Time advances in steps of
/// SimConfig::dt = 1 s. Positions are front-bumper offsets; a vehicle of
/// length L at position p occupies [p - L, p].
class SimState {
 public:
  SimState(std::shared_ptr<const RoadNetwork> network, SimConfig config,
           Tick start_time = 0);

  Tick now() const { return now_; }
  const RoadNetwork& network() const { return *network_; }
  const SimConfig& config() const { return config_; }

  /// Queues trips; they are inserted by insert_departures() once due.
  void add_demand(std::vector<Trip> trips);
  /// Defaults to the free-flow shortest route.
  void set_route_provider(RouteProvider provider);

  /// Places `v` at position 0 on the least-occupied admissible lane of its
  /// origin edge. Admissible: below lane capacity and the nearest vehicle
  /// ahead is at least vehicle_length + min_gap away. Keeps v.speed as the
  /// initial speed (0 for ordinary departures).
  bool insert_vehicle(Vehicle v);
  /// Same admission rule restricted to one lane.
  bool insert_vehicle_on_lane(Vehicle v, int lane);
  /// Tries every due pending trip in (depart, id) order; blocked trips retry
  /// on the next call.
  void insert_departures();

  /// Advances one step: moves every vehicle (edges in id order, leaders
  /// first), handles edge transitions and arrivals, then inserts departures.
  void step();

  /// One report per active nmcs-user at the current time.
  std::vector<Report> emit_reports() const;

  const Vehicle* find(std::string_view id) const;
  /// Active vehicles in id order.
  std::vector<const Vehicle*> active_vehicles() const;
  std::size_t active_count() const { return active_; }
  std::size_t pending_count() const { return pending_.size(); }

  /// Replaces everything after the current edge. The current edge is kept.
  void replace_route_suffix(std::string_view id, std::vector<EdgeIdx> suffix);

  /// Vehicle ids on a lane, leader first.
  const std::deque<std::uint32_t>& lane(EdgeIdx edge, int lane) const {
    return lanes_[edge][lane];
  }
  const Vehicle& vehicle_at(std::uint32_t slot) const { return vehicles_[slot]; }

  /// All edge traversals so far, in entry order; open ones have no exit.
  const std::vector<TraceEvent>& trace() const { return trace_; }
  const std::unordered_map<std::string, Tick>& arrivals() const { return arrivals_; }
  const std::unordered_map<std::string, Tick>& insertions() const { return insertion_times_; }
  const SimStats& stats() const { return stats_; }
  /// inserted == arrived + active.
  bool conserved() const { return stats_.inserted == stats_.arrived + active_; }

 private:
  int lane_limit(EdgeIdx edge) const;
  bool lane_admits(EdgeIdx edge, int lane, double front_position) const;
  double entry_space(EdgeIdx edge) const;
  std::optional<int> choose_entry_lane(EdgeIdx edge, double front_position) const;
  void place(std::uint32_t slot, EdgeIdx edge, int lane, double position, Tick at);
  void advance_vehicle(std::uint32_t slot, const Vehicle* leader, Tick next);
  void check_invariants();
  bool insert_on(Vehicle v, std::optional<int> forced_lane);

  std::shared_ptr<const RoadNetwork> network_;
  SimConfig config_;
  Tick now_ = 0;
  RouteProvider route_provider_;

  std::vector<Vehicle> vehicles_;
  std::vector<char> active_flags_;
  std::vector<Tick> moved_at_;
  std::vector<std::size_t> open_event_;
  std::unordered_map<std::string, std::uint32_t> slot_of_;
  std::vector<std::vector<std::deque<std::uint32_t>>> lanes_;
  std::size_t active_ = 0;

  std::vector<Trip> pending_;
  std::vector<TraceEvent> trace_;
  std::unordered_map<std::string, Tick> arrivals_;
  std::unordered_map<std::string, Tick> insertion_times_;
  SimStats stats_;
};

}  // namespace sybilsim
