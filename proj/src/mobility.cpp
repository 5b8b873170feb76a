#include "sybilsim/mobility.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sybilsim {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEps = 1e-9;
}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::kNonUser: return "benign-non-user";
    case Role::kUser: return "nmcs-user";
    case Role::kSybil: return "sybil";
  }
  return "unknown";
}

Role parse_role(std::string_view text) {
  if (text == "benign-non-user") return Role::kNonUser;
  if (text == "nmcs-user") return Role::kUser;
  if (text == "sybil") return Role::kSybil;
  throw std::invalid_argument("unknown role '" + std::string(text) + "'");
}

void SimConfig::validate() const {
  if (dt != 1.0) throw std::invalid_argument("dt must be exactly 1 s");
  if (!(vehicle_length > 0.0) || !(min_gap > 0.0) || !(accel > 0.0)) {
    throw std::invalid_argument("vehicle_length, min_gap and accel must be positive");
  }
}

SimState::SimState(std::shared_ptr<const RoadNetwork> network, SimConfig config,
                   Tick start_time)
    : network_(std::move(network)), config_(config), now_(start_time) {
  if (!network_) throw std::invalid_argument("network is null");
  config_.validate();
  lanes_.resize(network_->edge_count());
  for (EdgeIdx e = 0; e < network_->edge_count(); ++e) {
    lanes_[e].resize(static_cast<std::size_t>(network_->edge(e).lanes));
  }
  const auto free_flow = network_->free_flow_times();
  route_provider_ = [net = network_, free_flow](const Trip& trip) {
    return route_between_edges(*net, free_flow, trip.origin, trip.destination);
  };
}

void SimState::add_demand(std::vector<Trip> trips) {
  for (const auto& t : trips) {
    if (t.origin >= network_->edge_count() || t.destination >= network_->edge_count()) {
      throw std::invalid_argument("trip '" + t.id + "' references an unknown edge");
    }
  }
  pending_.insert(pending_.end(), std::make_move_iterator(trips.begin()),
                  std::make_move_iterator(trips.end()));
  std::stable_sort(pending_.begin(), pending_.end(), [](const Trip& a, const Trip& b) {
    if (a.depart != b.depart) return a.depart < b.depart;
    return a.id < b.id;
  });
}

void SimState::set_route_provider(RouteProvider provider) {
  route_provider_ = std::move(provider);
}

int SimState::lane_limit(EdgeIdx edge) const {
  return std::max(1, network_->edge(edge).lane_capacity(config_.vehicle_length,
                                                        config_.min_gap));
}

bool SimState::lane_admits(EdgeIdx edge, int lane, double front_position) const {
  const auto& q = lanes_[edge][lane];
  if (static_cast<int>(q.size()) >= lane_limit(edge)) return false;
  if (q.empty()) return true;
  const Vehicle& last = vehicles_[q.back()];
  return last.position - config_.vehicle_length - front_position >=
         config_.min_gap - kEps;
}

std::optional<int> SimState::choose_entry_lane(EdgeIdx edge,
                                               double front_position) const {
  std::optional<int> best;
  std::size_t best_count = 0;
  for (int l = 0; l < network_->edge(edge).lanes; ++l) {
    if (!lane_admits(edge, l, front_position)) continue;
    const auto count = lanes_[edge][l].size();
    if (!best || count < best_count) {
      best = l;
      best_count = count;
    }
  }
  return best;
}

// Free space behind the last vehicle of the roomiest entry lane. A full lane
// offers exactly min_gap so that an approaching vehicle halts at the edge end.
double SimState::entry_space(EdgeIdx edge) const {
  double best = -kInf;
  for (int l = 0; l < network_->edge(edge).lanes; ++l) {
    const auto& q = lanes_[edge][l];
    double space;
    if (static_cast<int>(q.size()) >= lane_limit(edge)) {
      space = config_.min_gap;
    } else if (q.empty()) {
      space = kInf;
    } else {
      space = vehicles_[q.back()].position - config_.vehicle_length;
    }
    best = std::max(best, space);
  }
  return best;
}

void SimState::place(std::uint32_t slot, EdgeIdx edge, int lane, double position,
                     Tick at) {
  Vehicle& v = vehicles_[slot];
  v.lane = lane;
  v.position = position;
  lanes_[edge][lane].push_back(slot);
  open_event_[slot] = trace_.size();
  trace_.push_back(TraceEvent{v.id, edge, at, std::nullopt});
}

bool SimState::insert_on(Vehicle v, std::optional<int> forced_lane) {
  if (v.route.empty()) v.route.push_back(v.origin);
  if (v.origin >= network_->edge_count()) {
    throw std::invalid_argument("vehicle '" + v.id + "' has an unknown origin edge");
  }
  if (v.route.front() != v.origin || v.route.back() != v.destination ||
      !is_connected(*network_, v.route)) {
    throw std::invalid_argument("vehicle '" + v.id +
                                "' route must run from origin to destination");
  }
  if (slot_of_.contains(v.id)) {
    throw std::invalid_argument("vehicle '" + v.id + "' already present");
  }
  const EdgeIdx edge = v.origin;
  std::optional<int> lane;
  if (forced_lane) {
    if (*forced_lane < 0 || *forced_lane >= network_->edge(edge).lanes) {
      throw std::invalid_argument("lane out of range");
    }
    if (lane_admits(edge, *forced_lane, 0.0)) lane = forced_lane;
  } else {
    lane = choose_entry_lane(edge, 0.0);
  }
  if (!lane) return false;

  v.route_pos = 0;
  v.speed = std::clamp(v.speed, 0.0,
                       std::min(network_->edge(edge).speed_limit, v.max_speed_cap));
  const auto slot = static_cast<std::uint32_t>(vehicles_.size());
  slot_of_.emplace(v.id, slot);
  insertion_times_.emplace(v.id, now_);
  vehicles_.push_back(std::move(v));
  active_flags_.push_back(1);
  moved_at_.push_back(now_);
  open_event_.push_back(0);
  place(slot, edge, *lane, 0.0, now_);
  ++active_;
  ++stats_.inserted;
  return true;
}

bool SimState::insert_vehicle(Vehicle v) { return insert_on(std::move(v), std::nullopt); }

bool SimState::insert_vehicle_on_lane(Vehicle v, int lane) {
  return insert_on(std::move(v), lane);
}

void SimState::insert_departures() {
  std::vector<Trip> retry;
  std::size_t i = 0;
  for (; i < pending_.size() && pending_[i].depart <= now_; ++i) {
    Trip& trip = pending_[i];
    auto route = route_provider_(trip);
    if (!route) {
      ++stats_.unroutable;
      continue;
    }
    Vehicle v;
    v.id = trip.id;
    v.depart = trip.depart;
    v.origin = trip.origin;
    v.destination = trip.destination;
    v.role = trip.role;
    v.route = std::move(route->edges);
    if (!insert_vehicle(std::move(v))) {
      ++stats_.blocked_insertions;
      retry.push_back(std::move(trip));
    }
  }
  retry.insert(retry.end(), std::make_move_iterator(pending_.begin() + static_cast<std::ptrdiff_t>(i)),
               std::make_move_iterator(pending_.end()));
  pending_ = std::move(retry);
}

void SimState::advance_vehicle(std::uint32_t slot, const Vehicle* leader, Tick next) {
  Vehicle& v = vehicles_[slot];
  const EdgeIdx edge_idx = v.current_edge();
  const Edge& edge = network_->edge(edge_idx);
  const double dt = config_.dt;

  double gap;
  if (leader != nullptr) {
    gap = leader->position - config_.vehicle_length - v.position;
  } else if (v.on_last_edge()) {
    gap = kInf;
  } else {
    gap = (edge.length - v.position) + entry_space(v.route[v.route_pos + 1]);
  }
  const double v_safe = (gap - config_.min_gap) / dt;
  const double cap = std::min(edge.speed_limit, v.max_speed_cap);
  const double new_speed = std::max(0.0, std::min({v.speed + config_.accel * dt, cap, v_safe}));
  const double new_pos = v.position + new_speed * dt;
  moved_at_[slot] = next;

  if (new_pos < edge.length) {
    v.position = new_pos;
    v.speed = new_speed;
    return;
  }

  auto& lane_queue = lanes_[edge_idx][v.lane];
  if (v.on_last_edge()) {
    lane_queue.pop_front();
    trace_[open_event_[slot]].exit_time = next;
    arrivals_.emplace(v.id, next);
    active_flags_[slot] = 0;
    --active_;
    ++stats_.arrived;
    v.position = edge.length;
    v.speed = new_speed;
    return;
  }

  const EdgeIdx next_edge = v.route[v.route_pos + 1];
  const Edge& n = network_->edge(next_edge);
  const double overflow = std::min(new_pos - edge.length, n.length);
  if (auto lane = choose_entry_lane(next_edge, overflow)) {
    lane_queue.pop_front();
    trace_[open_event_[slot]].exit_time = next;
    ++v.route_pos;
    v.speed = std::min({new_speed, n.speed_limit, v.max_speed_cap});
    place(slot, next_edge, *lane, overflow, next);
  } else {
    v.speed = (edge.length - v.position) / dt;
    v.position = edge.length;
  }
}

void SimState::step() {
  const Tick next = now_ + 1;
  for (EdgeIdx e : network_->edges_by_id()) {
    for (auto& queue : lanes_[e]) {
      if (queue.empty()) continue;
      const std::vector<std::uint32_t> snapshot(queue.begin(), queue.end());
      const Vehicle* leader = nullptr;
      for (std::uint32_t slot : snapshot) {
        if (moved_at_[slot] == next) continue;
        advance_vehicle(slot, leader, next);
        const Vehicle& v = vehicles_[slot];
        const bool still_here = active_flags_[slot] && v.current_edge() == e;
        leader = still_here ? &v : nullptr;
      }
    }
  }
  now_ = next;
  insert_departures();
  check_invariants();
}

void SimState::check_invariants() {
  for (EdgeIdx e = 0; e < lanes_.size(); ++e) {
    const Edge& edge = network_->edge(e);
    for (const auto& queue : lanes_[e]) {
      for (std::size_t i = 0; i < queue.size(); ++i) {
        const Vehicle& v = vehicles_[queue[i]];
        if (v.speed > std::min(edge.speed_limit, v.max_speed_cap) + kEps || v.speed < 0.0 ||
            v.position < -kEps || v.position > edge.length + kEps) {
          ++stats_.speed_violations;
        }
        if (i > 0) {
          const Vehicle& lead = vehicles_[queue[i - 1]];
          if (lead.position - config_.vehicle_length - v.position < config_.min_gap - kEps) {
            ++stats_.gap_violations;
          }
        }
      }
    }
  }
}

std::vector<Report> SimState::emit_reports() const {
  std::vector<Report> out;
  for (const Vehicle* v : active_vehicles()) {
    if (v->role != Role::kUser) continue;
    out.push_back(Report{v->id, network_->edge(v->current_edge()).id, v->speed, now_});
  }
  return out;
}

const Vehicle* SimState::find(std::string_view id) const {
  auto it = slot_of_.find(std::string(id));
  if (it == slot_of_.end() || !active_flags_[it->second]) return nullptr;
  return &vehicles_[it->second];
}

std::vector<const Vehicle*> SimState::active_vehicles() const {
  std::vector<const Vehicle*> out;
  out.reserve(active_);
  for (std::size_t s = 0; s < vehicles_.size(); ++s) {
    if (active_flags_[s]) out.push_back(&vehicles_[s]);
  }
  std::sort(out.begin(), out.end(),
            [](const Vehicle* a, const Vehicle* b) { return a->id < b->id; });
  return out;
}

void SimState::replace_route_suffix(std::string_view id, std::vector<EdgeIdx> suffix) {
  auto it = slot_of_.find(std::string(id));
  if (it == slot_of_.end() || !active_flags_[it->second]) {
    throw std::invalid_argument("no active vehicle '" + std::string(id) + "'");
  }
  Vehicle& v = vehicles_[it->second];
  std::vector<EdgeIdx> route(v.route.begin(),
                             v.route.begin() + static_cast<std::ptrdiff_t>(v.route_pos) + 1);
  route.insert(route.end(), suffix.begin(), suffix.end());
  if (!is_connected(*network_, route) || route.back() != v.destination) {
    throw std::invalid_argument("replacement route must connect to the destination");
  }
  v.route = std::move(route);
}

}  // namespace sybilsim
