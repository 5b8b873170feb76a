#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sybilsim/mobility.hpp"
#include "sybilsim/report.hpp"
#include "sybilsim/road_network.hpp"
#include "sybilsim/routing.hpp"

namespace sybilsim {

struct WindowConfig {
  Tick w_size = 300;
  Tick w_slide = 30;

  void validate() const;
};

inline constexpr double kDefaultSpeedFloor = 0.1;

enum class IngestOutcome { kAccepted, kResampled, kStale };

/// Time-based sliding window of per-edge, per-second speed cells covering
/// (now - w_size, now]. Each cell keeps at most one sample per reporter and
/// second; a repeated (reporter, second) replaces the earlier sample.
class EdgeSpeedWindow {
 public:
  EdgeSpeedWindow(std::size_t edge_count, Tick w_size);

  Tick now() const { return now_; }
  Tick w_size() const { return w_size_; }

  /// Moves the window end forward and evicts cells with t <= now - w_size.
  void advance_to(Tick t);

  /// Reports newer than now advance the window first.
  IngestOutcome ingest(EdgeIdx edge, std::string_view reporter, double speed, Tick t);

  /// Unweighted mean of the non-empty per-second cell means; nullopt if the
  /// edge has no data in the window.
  std::optional<double> mean_of_cell_means(EdgeIdx edge) const;
  std::size_t sample_count(EdgeIdx edge) const;
  /// Mean of the cell at second t, if it holds data.
  std::optional<double> cell_mean(EdgeIdx edge, Tick t) const;

  std::size_t dropped_stale() const { return dropped_stale_; }
  std::size_t resampled() const { return resampled_; }

 private:
  struct Cell {
    std::vector<std::pair<std::string, double>> samples;
  };
  bool in_window(Tick t) const { return t > now_ - w_size_; }
  void erase_sample(EdgeIdx edge, Tick t, std::string_view reporter);

  Tick w_size_;
  Tick now_ = 0;
  std::vector<std::map<Tick, Cell>> cells_;
  // second -> reporter -> edge it reported on, for per-second resampling
  std::map<Tick, std::unordered_map<std::string, EdgeIdx>> reporters_;
  std::size_t dropped_stale_ = 0;
  std::size_t resampled_ = 0;
};

/// Window speed for one edge: mean of cell means, speed limit when the
/// window is empty, never below `speed_floor`.
double estimate_speed(const EdgeSpeedWindow& window, const RoadNetwork& net,
                      EdgeIdx edge, double speed_floor = kDefaultSpeedFloor);

struct SpeedEstimateTable {
  Tick computed_at = 0;
  std::vector<double> speed;        // m/s, by EdgeIdx
  std::vector<double> travel_time;  // seconds, by EdgeIdx
  std::vector<std::size_t> samples;

  /// Every edge at its speed limit.
  static SpeedEstimateTable free_flow(const RoadNetwork& net, Tick at = 0);
};

struct EstimateRow {
  Tick slide_time = 0;
  std::string edge_id;
  double estimate_mps = 0.0;
  std::size_t sample_count = 0;
};

struct Eta {
  Route route;
  double eta = 0.0;
};

std::optional<Eta> compute_eta(const RoadNetwork& net, const SpeedEstimateTable& table,
                               NodeIdx from, NodeIdx to);

struct RerouteSummary {
  std::size_t considered = 0;
  std::size_t changed = 0;
  std::size_t unreachable = 0;
};

/// For every active nmcs-user (optionally only those in `only`), re-plans
/// the part of the route after the current edge from the current edge's
/// end node. Users on their final edge are left alone.
RerouteSummary reroute_users(SimState& state, const SpeedEstimateTable& table,
                             const std::set<std::string>* only = nullptr);

/// The service: window store, latest estimate table, slide cadence.
class NmcsServer {
 public:
  NmcsServer(std::shared_ptr<const RoadNetwork> network, WindowConfig window,
             double speed_floor = kDefaultSpeedFloor);

  const RoadNetwork& network() const { return *network_; }
  const WindowConfig& window_config() const { return config_; }
  const EdgeSpeedWindow& window() const { return window_; }
  const SpeedEstimateTable& table() const { return table_; }

  void advance_to(Tick t) { window_.advance_to(t); }
  IngestOutcome ingest(const Report& report);
  bool is_slide(Tick t) const { return t % config_.w_slide == 0; }
  /// Recomputes every edge estimate at time t.
  const SpeedEstimateTable& refresh(Tick t);
  std::vector<EstimateRow> dump() const;

 private:
  std::shared_ptr<const RoadNetwork> network_;
  WindowConfig config_;
  double speed_floor_;
  EdgeSpeedWindow window_;
  SpeedEstimateTable table_;
};

}  // namespace sybilsim
