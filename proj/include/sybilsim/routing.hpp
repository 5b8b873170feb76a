#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sybilsim/road_network.hpp"

namespace sybilsim {

struct Route {
  std::vector<EdgeIdx> edges;
  double total_expected_time = 0.0;

  bool empty() const { return edges.empty(); }
};

/// Consecutive edges share a node.
bool is_connected(const RoadNetwork& net, std::span<const EdgeIdx> edges);
/// No edge appears twice.
bool is_simple(std::span<const EdgeIdx> edges);
std::vector<std::string> edge_ids(const RoadNetwork& net,
                                  std::span<const EdgeIdx> edges);

/// Dijkstra from `from` to `to` over `edge_times` (+inf = blocked).
/// Nodes settle in (distance, node id) order; on an exact distance tie the
/// predecessor with the smaller node id (then edge id) wins. Returns nullopt
/// when `to` is unreachable. from == to yields an empty route.
std::optional<Route> shortest_path(const RoadNetwork& net,
                                   std::span<const double> edge_times,
                                   NodeIdx from, NodeIdx to);

/// Single-source distances (+inf where unreachable).
std::vector<double> shortest_distances(const RoadNetwork& net,
                                       std::span<const double> edge_times,
                                       NodeIdx from);

/// Route that starts with `origin` and ends with `destination`, linking
/// them by a shortest path between origin.to and destination.from.
std::optional<Route> route_between_edges(const RoadNetwork& net,
                                         std::span<const double> edge_times,
                                         EdgeIdx origin, EdgeIdx destination);

struct CentralityScores {
  std::vector<double> node_bc;  // by NodeIdx
  std::vector<double> edge_bc;  // by EdgeIdx
};

inline constexpr double kPathTieTolerance = 1e-9;

/// Brandes betweenness over ordered (s, t) pairs, s != t. Shortest-path
/// multiplicity uses an absolute tolerance of kPathTieTolerance seconds.
/// Per-source contributions are summed in node-id order, so the result is
/// identical for any worker count.
CentralityScores betweenness_centrality(const RoadNetwork& net,
                                        std::span<const double> edge_times,
                                        unsigned workers = 1);

struct TargetCandidate {
  EdgeIdx edge = 0;
  double edge_bc = 0.0;
  double median_detour = 0.0;  // alternative time / original time
  std::size_t sampled_pairs = 0;
};

struct TargetSelectionOptions {
  double max_detour_factor = 3.0;
  std::size_t od_samples = 64;
};

/// Ranks edges by edge betweenness (ties by edge id) and keeps the first k
/// that have a viable alternative: for a deterministic sample of OD pairs
/// with the edge on a shortest path, the edge is removed and the pair
/// re-routed. An edge is dropped when any sampled pair becomes unreachable
/// or the median detour factor exceeds max_detour_factor.
std::vector<TargetCandidate> select_targets(
    const RoadNetwork& net, std::span<const double> edge_times,
    const CentralityScores& scores, std::size_t k,
    const TargetSelectionOptions& options = {});

}  // namespace sybilsim
