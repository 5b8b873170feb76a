#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sybilsim {

using NodeIdx = std::uint32_t;
using EdgeIdx = std::uint32_t;

/// Per-edge traversal times in seconds, indexed by EdgeIdx. +inf marks a
/// blocked edge.
using EdgeTimes = std::vector<double>;

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NetworkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Node {
  std::string id;
  double x = 0.0;
  double y = 0.0;
};

/// Input form of an edge, endpoints given by node id.
struct EdgeSpec {
  std::string id;
  std::string from;
  std::string to;
  double length = 0.0;
  int lanes = 1;
  double speed_limit = 0.0;
};

struct Edge {
  std::string id;
  NodeIdx from = 0;
  NodeIdx to = 0;
  double length = 0.0;       // meters
  int lanes = 1;
  double speed_limit = 0.0;  // m/s

  double free_flow_time() const { return length / speed_limit; }

  /// floor(length / (vehicle_length + min_gap)) vehicles per lane.
  int lane_capacity(double vehicle_length, double min_gap) const;
};

/// Immutable directed road graph. Nodes and edges keep their input order;
/// lexicographic id ranks are precomputed for deterministic tie-breaking.
class RoadNetwork {
 public:
  RoadNetwork() = default;
  RoadNetwork(std::vector<Node> nodes, const std::vector<EdgeSpec>& edges);

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }

  const Node& node(NodeIdx n) const { return nodes_.at(n); }
  const Edge& edge(EdgeIdx e) const { return edges_.at(e); }

  std::span<const EdgeIdx> out_edges(NodeIdx n) const { return out_.at(n); }
  std::span<const EdgeIdx> in_edges(NodeIdx n) const { return in_.at(n); }

  std::optional<NodeIdx> find_node(std::string_view id) const;
  std::optional<EdgeIdx> find_edge(std::string_view id) const;
  NodeIdx node_index(std::string_view id) const;
  EdgeIdx edge_index(std::string_view id) const;

  /// Node indices in lexicographic id order.
  std::span<const NodeIdx> nodes_by_id() const { return nodes_by_id_; }
  std::uint32_t node_rank(NodeIdx n) const { return node_rank_[n]; }
  /// Edge indices in lexicographic id order.
  std::span<const EdgeIdx> edges_by_id() const { return edges_by_id_; }
  std::uint32_t edge_rank(EdgeIdx e) const { return edge_rank_[e]; }

  EdgeTimes free_flow_times() const;
  /// Converts an id-keyed time map; every edge must be covered.
  EdgeTimes times_from_map(
      const std::unordered_map<std::string, double>& by_id) const;

  std::vector<EdgeSpec> edge_specs() const;

  /// Recomputes adjacency from the edge list and checks every structural
  /// invariant. Throws NetworkError.
  void validate() const;

  friend bool operator==(const RoadNetwork& a, const RoadNetwork& b);

 private:
  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::vector<std::vector<EdgeIdx>> out_;
  std::vector<std::vector<EdgeIdx>> in_;
  std::unordered_map<std::string, NodeIdx> node_lookup_;
  std::unordered_map<std::string, EdgeIdx> edge_lookup_;
  std::vector<NodeIdx> nodes_by_id_;
  std::vector<std::uint32_t> node_rank_;
  std::vector<EdgeIdx> edges_by_id_;
  std::vector<std::uint32_t> edge_rank_;
};

RoadNetwork parse_network(std::string_view json_text);
RoadNetwork load_network(const std::filesystem::path& path);
std::string network_to_json(const RoadNetwork& net);
void save_network(const RoadNetwork& net, const std::filesystem::path& path);

/// Bidirectional rows x cols grid. Node "n{r}_{c}" sits at
/// (c*edge_length, r*edge_length); edge ids are "{from}-{to}".
RoadNetwork generate_grid(int rows, int cols, double edge_length,
                          double speed_limit, int lanes);

}  // namespace sybilsim
