#include "sybilsim/server.hpp"

#include <algorithm>
#include <stdexcept>

namespace sybilsim {

void WindowConfig::validate() const {
  if (w_size <= 0 || w_slide <= 0 || w_slide > w_size) {
    throw std::invalid_argument("window requires 0 < w_slide <= w_size");
  }
}

EdgeSpeedWindow::EdgeSpeedWindow(std::size_t edge_count, Tick w_size)
    : w_size_(w_size), cells_(edge_count) {
  if (w_size <= 0) throw std::invalid_argument("w_size must be positive");
}

void EdgeSpeedWindow::advance_to(Tick t) {
  if (t < now_) return;
  now_ = t;
  const Tick horizon = now_ - w_size_;
  for (auto& per_edge : cells_) {
    per_edge.erase(per_edge.begin(), per_edge.upper_bound(horizon));
  }
  reporters_.erase(reporters_.begin(), reporters_.upper_bound(horizon));
}

void EdgeSpeedWindow::erase_sample(EdgeIdx edge, Tick t, std::string_view reporter) {
  auto it = cells_[edge].find(t);
  if (it == cells_[edge].end()) return;
  auto& samples = it->second.samples;
  samples.erase(std::remove_if(samples.begin(), samples.end(),
                               [&](const auto& s) { return s.first == reporter; }),
                samples.end());
  if (samples.empty()) cells_[edge].erase(it);
}

IngestOutcome EdgeSpeedWindow::ingest(EdgeIdx edge, std::string_view reporter,
                                      double speed, Tick t) {
  if (edge >= cells_.size()) throw std::out_of_range("unknown edge index");
  if (speed < 0.0) throw std::invalid_argument("negative speed report");
  if (t > now_) advance_to(t);
  if (!in_window(t)) {
    ++dropped_stale_;
    return IngestOutcome::kStale;
  }
  auto outcome = IngestOutcome::kAccepted;
  auto& seen = reporters_[t];
  auto [it, fresh] = seen.try_emplace(std::string(reporter), edge);
  if (!fresh) {
    erase_sample(it->second, t, reporter);
    it->second = edge;
    ++resampled_;
    outcome = IngestOutcome::kResampled;
  }
  cells_[edge][t].samples.emplace_back(std::string(reporter), speed);
  return outcome;
}

std::optional<double> EdgeSpeedWindow::cell_mean(EdgeIdx edge, Tick t) const {
  if (!in_window(t)) return std::nullopt;
  auto it = cells_[edge].find(t);
  if (it == cells_[edge].end() || it->second.samples.empty()) return std::nullopt;
  double sum = 0.0;
  for (const auto& s : it->second.samples) sum += s.second;
  return sum / static_cast<double>(it->second.samples.size());
}

std::optional<double> EdgeSpeedWindow::mean_of_cell_means(EdgeIdx edge) const {
  double total = 0.0;
  std::size_t cells = 0;
  for (const auto& [t, cell] : cells_[edge]) {
    if (!in_window(t) || cell.samples.empty()) continue;
    double sum = 0.0;
    for (const auto& s : cell.samples) sum += s.second;
    total += sum / static_cast<double>(cell.samples.size());
    ++cells;
  }
  if (cells == 0) return std::nullopt;
  return total / static_cast<double>(cells);
}

std::size_t EdgeSpeedWindow::sample_count(EdgeIdx edge) const {
  std::size_t n = 0;
  for (const auto& [t, cell] : cells_[edge]) {
    if (in_window(t)) n += cell.samples.size();
  }
  return n;
}

double estimate_speed(const EdgeSpeedWindow& window, const RoadNetwork& net,
                      EdgeIdx edge, double speed_floor) {
  const double v = window.mean_of_cell_means(edge).value_or(net.edge(edge).speed_limit);
  return std::max(v, speed_floor);
}

SpeedEstimateTable SpeedEstimateTable::free_flow(const RoadNetwork& net, Tick at) {
  SpeedEstimateTable table;
  table.computed_at = at;
  table.speed.resize(net.edge_count());
  table.travel_time.resize(net.edge_count());
  table.samples.assign(net.edge_count(), 0);
  for (EdgeIdx e = 0; e < net.edge_count(); ++e) {
    table.speed[e] = net.edge(e).speed_limit;
    table.travel_time[e] = net.edge(e).free_flow_time();
  }
  return table;
}

std::optional<Eta> compute_eta(const RoadNetwork& net, const SpeedEstimateTable& table,
                               NodeIdx from, NodeIdx to) {
  if (table.travel_time.size() != net.edge_count()) {
    throw std::invalid_argument("estimate table does not cover the network");
  }
  auto route = shortest_path(net, table.travel_time, from, to);
  if (!route) return std::nullopt;
  const double eta = route->total_expected_time;
  return Eta{std::move(*route), eta};
}

RerouteSummary reroute_users(SimState& state, const SpeedEstimateTable& table,
                             const std::set<std::string>* only) {
  RerouteSummary summary;
  const RoadNetwork& net = state.network();
  std::vector<std::pair<std::string, std::vector<EdgeIdx>>> updates;
  for (const Vehicle* v : state.active_vehicles()) {
    if (v->role != Role::kUser) continue;
    if (only != nullptr && !only->contains(v->id)) continue;
    if (v->on_last_edge()) continue;
    ++summary.considered;
    const EdgeIdx current = v->current_edge();
    auto route = route_between_edges(net, table.travel_time, current, v->destination);
    if (!route) {
      ++summary.unreachable;
      continue;
    }
    std::vector<EdgeIdx> suffix(route->edges.begin() + 1, route->edges.end());
    const std::vector<EdgeIdx> old_suffix(
        v->route.begin() + static_cast<std::ptrdiff_t>(v->route_pos) + 1, v->route.end());
    if (suffix != old_suffix) {
      ++summary.changed;
      updates.emplace_back(v->id, std::move(suffix));
    }
  }
  for (auto& [id, suffix] : updates) state.replace_route_suffix(id, std::move(suffix));
  return summary;
}

NmcsServer::NmcsServer(std::shared_ptr<const RoadNetwork> network, WindowConfig window,
                       double speed_floor)
    : network_(std::move(network)),
      config_(window),
      speed_floor_(speed_floor),
      window_(network_->edge_count(), window.w_size),
      table_(SpeedEstimateTable::free_flow(*network_)) {
  config_.validate();
  if (!(speed_floor > 0.0)) throw std::invalid_argument("speed_floor must be positive");
}

IngestOutcome NmcsServer::ingest(const Report& report) {
  return window_.ingest(network_->edge_index(report.edge_id), report.vehicle_id,
                        report.speed, report.t);
}

const SpeedEstimateTable& NmcsServer::refresh(Tick t) {
  window_.advance_to(t);
  table_.computed_at = t;
  for (EdgeIdx e = 0; e < network_->edge_count(); ++e) {
    const double v = estimate_speed(window_, *network_, e, speed_floor_);
    table_.speed[e] = v;
    table_.travel_time[e] = network_->edge(e).length / v;
    table_.samples[e] = window_.sample_count(e);
  }
  return table_;
}

std::vector<EstimateRow> NmcsServer::dump() const {
  std::vector<EstimateRow> rows;
  rows.reserve(network_->edge_count());
  for (EdgeIdx e : network_->edges_by_id()) {
    rows.push_back(EstimateRow{table_.computed_at, network_->edge(e).id, table_.speed[e],
                               table_.samples[e]});
  }
  return rows;
}

}  // namespace sybilsim
