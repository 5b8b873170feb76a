#include "sybilsim/road_network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace sybilsim {

using nlohmann::json;

int Edge::lane_capacity(double vehicle_length, double min_gap) const {
  return static_cast<int>(std::floor(length / (vehicle_length + min_gap)));
}

namespace {

template <typename Index, typename T>
void rank_by_id(const std::vector<T>& items, std::vector<Index>& order,
                std::vector<std::uint32_t>& rank) {
  order.resize(items.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(),
            [&](Index a, Index b) { return items[a].id < items[b].id; });
  rank.resize(items.size());
  for (std::uint32_t r = 0; r < order.size(); ++r) rank[order[r]] = r;
}

}  // namespace

RoadNetwork::RoadNetwork(std::vector<Node> nodes,
                         const std::vector<EdgeSpec>& edges)
    : nodes_(std::move(nodes)) {
  for (NodeIdx n = 0; n < nodes_.size(); ++n) {
    if (!node_lookup_.emplace(nodes_[n].id, n).second) {
      throw NetworkError("duplicate node id '" + nodes_[n].id + "'");
    }
  }
  edges_.reserve(edges.size());
  for (const auto& spec : edges) {
    auto from = find_node(spec.from);
    auto to = find_node(spec.to);
    if (!from) {
      throw NetworkError("edge '" + spec.id + "' references unknown node '" +
                         spec.from + "'");
    }
    if (!to) {
      throw NetworkError("edge '" + spec.id + "' references unknown node '" +
                         spec.to + "'");
    }
    if (!(spec.length > 0.0) || !std::isfinite(spec.length)) {
      throw NetworkError("edge '" + spec.id + "' has non-positive length");
    }
    if (!(spec.speed_limit > 0.0) || !std::isfinite(spec.speed_limit)) {
      throw NetworkError("edge '" + spec.id + "' has non-positive speed_limit");
    }
    if (spec.lanes < 1) {
      throw NetworkError("edge '" + spec.id + "' must have at least one lane");
    }
    auto idx = static_cast<EdgeIdx>(edges_.size());
    if (!edge_lookup_.emplace(spec.id, idx).second) {
      throw NetworkError("duplicate edge id '" + spec.id + "'");
    }
    edges_.push_back(
        Edge{spec.id, *from, *to, spec.length, spec.lanes, spec.speed_limit});
  }

  out_.assign(nodes_.size(), {});
  in_.assign(nodes_.size(), {});
  for (EdgeIdx e = 0; e < edges_.size(); ++e) {
    out_[edges_[e].from].push_back(e);
    in_[edges_[e].to].push_back(e);
  }
  rank_by_id(nodes_, nodes_by_id_, node_rank_);
  rank_by_id(edges_, edges_by_id_, edge_rank_);
}

std::optional<NodeIdx> RoadNetwork::find_node(std::string_view id) const {
  auto it = node_lookup_.find(std::string(id));
  if (it == node_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<EdgeIdx> RoadNetwork::find_edge(std::string_view id) const {
  auto it = edge_lookup_.find(std::string(id));
  if (it == edge_lookup_.end()) return std::nullopt;
  return it->second;
}

NodeIdx RoadNetwork::node_index(std::string_view id) const {
  if (auto n = find_node(id)) return *n;
  throw NetworkError("unknown node '" + std::string(id) + "'");
}

EdgeIdx RoadNetwork::edge_index(std::string_view id) const {
  if (auto e = find_edge(id)) return *e;
  throw NetworkError("unknown edge '" + std::string(id) + "'");
}

EdgeTimes RoadNetwork::free_flow_times() const {
  EdgeTimes t(edges_.size());
  for (EdgeIdx e = 0; e < edges_.size(); ++e) t[e] = edges_[e].free_flow_time();
  return t;
}

EdgeTimes RoadNetwork::times_from_map(
    const std::unordered_map<std::string, double>& by_id) const {
  EdgeTimes t(edges_.size());
  for (EdgeIdx e = 0; e < edges_.size(); ++e) {
    auto it = by_id.find(edges_[e].id);
    if (it == by_id.end()) {
      throw NetworkError("edge time missing for '" + edges_[e].id + "'");
    }
    t[e] = it->second;
  }
  return t;
}

std::vector<EdgeSpec> RoadNetwork::edge_specs() const {
  std::vector<EdgeSpec> out;
  out.reserve(edges_.size());
  for (const auto& e : edges_) {
    out.push_back(EdgeSpec{e.id, nodes_[e.from].id, nodes_[e.to].id, e.length,
                           e.lanes, e.speed_limit});
  }
  return out;
}

void RoadNetwork::validate() const {
  std::vector<std::vector<EdgeIdx>> out(nodes_.size());
  std::vector<std::vector<EdgeIdx>> in(nodes_.size());
  for (EdgeIdx e = 0; e < edges_.size(); ++e) {
    const auto& edge = edges_[e];
    if (edge.from >= nodes_.size() || edge.to >= nodes_.size()) {
      throw NetworkError("edge '" + edge.id + "' has a dangling endpoint");
    }
    if (!(edge.free_flow_time() > 0.0) ||
        !std::isfinite(edge.free_flow_time())) {
      throw NetworkError("edge '" + edge.id + "' has invalid free-flow time");
    }
    out[edge.from].push_back(e);
    in[edge.to].push_back(e);
  }
  if (out != out_ || in != in_) {
    throw NetworkError("adjacency does not mirror the edge list");
  }
  if (node_lookup_.size() != nodes_.size() ||
      edge_lookup_.size() != edges_.size()) {
    throw NetworkError("ids are not unique");
  }
}

bool operator==(const RoadNetwork& a, const RoadNetwork& b) {
  if (a.nodes_.size() != b.nodes_.size() || a.edges_.size() != b.edges_.size())
    return false;
  for (std::size_t i = 0; i < a.nodes_.size(); ++i) {
    const auto& x = a.nodes_[i];
    const auto& y = b.nodes_[i];
    if (x.id != y.id || x.x != y.x || x.y != y.y) return false;
  }
  for (std::size_t i = 0; i < a.edges_.size(); ++i) {
    const auto& x = a.edges_[i];
    const auto& y = b.edges_[i];
    if (x.id != y.id || x.from != y.from || x.to != y.to ||
        x.length != y.length || x.lanes != y.lanes ||
        x.speed_limit != y.speed_limit)
      return false;
  }
  return a.out_ == b.out_ && a.in_ == b.in_;
}

// ---------------------------------------------------------------------------
// JSON format
// ---------------------------------------------------------------------------

namespace {

const json& require_field(const json& obj, const char* key,
                          const std::string& where) {
  if (!obj.is_object()) throw ParseError(where + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw ParseError(where + "." + key + ": missing required field");
  }
  return *it;
}

std::string read_string(const json& obj, const char* key,
                        const std::string& where) {
  const auto& v = require_field(obj, key, where);
  if (!v.is_string()) throw ParseError(where + "." + key + ": expected string");
  return v.get<std::string>();
}

double read_number(const json& obj, const char* key, const std::string& where) {
  const auto& v = require_field(obj, key, where);
  if (!v.is_number()) throw ParseError(where + "." + key + ": expected number");
  return v.get<double>();
}

int read_int(const json& obj, const char* key, const std::string& where) {
  const auto& v = require_field(obj, key, where);
  if (!v.is_number_integer()) {
    throw ParseError(where + "." + key + ": expected integer");
  }
  return v.get<int>();
}

}  // namespace

RoadNetwork parse_network(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("network: ") + e.what());
  }
  const auto& jnodes = require_field(doc, "nodes", "network");
  const auto& jedges = require_field(doc, "edges", "network");
  if (!jnodes.is_array()) throw ParseError("network.nodes: expected array");
  if (!jedges.is_array()) throw ParseError("network.edges: expected array");

  std::vector<Node> nodes;
  nodes.reserve(jnodes.size());
  for (std::size_t i = 0; i < jnodes.size(); ++i) {
    std::string where = "nodes[" + std::to_string(i) + "]";
    nodes.push_back(Node{read_string(jnodes[i], "id", where),
                         read_number(jnodes[i], "x", where),
                         read_number(jnodes[i], "y", where)});
  }
  std::vector<EdgeSpec> edges;
  edges.reserve(jedges.size());
  for (std::size_t i = 0; i < jedges.size(); ++i) {
    std::string where = "edges[" + std::to_string(i) + "]";
    const auto& je = jedges[i];
    edges.push_back(EdgeSpec{read_string(je, "id", where),
                             read_string(je, "from", where),
                             read_string(je, "to", where),
                             read_number(je, "length", where),
                             read_int(je, "lanes", where),
                             read_number(je, "speed_limit", where)});
  }
  return RoadNetwork(std::move(nodes), edges);
}

RoadNetwork load_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open network file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_network(buf.str());
}

std::string network_to_json(const RoadNetwork& net) {
  json doc;
  doc["nodes"] = json::array();
  for (const auto& n : net.nodes()) {
    doc["nodes"].push_back({{"id", n.id}, {"x", n.x}, {"y", n.y}});
  }
  doc["edges"] = json::array();
  for (const auto& e : net.edge_specs()) {
    doc["edges"].push_back({{"id", e.id},
                            {"from", e.from},
                            {"to", e.to},
                            {"length", e.length},
                            {"lanes", e.lanes},
                            {"speed_limit", e.speed_limit}});
  }
  return doc.dump(2);
}

void save_network(const RoadNetwork& net, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << network_to_json(net) << '\n';
}

RoadNetwork generate_grid(int rows, int cols, double edge_length,
                          double speed_limit, int lanes) {
  if (rows < 2 || cols < 2) {
    throw std::invalid_argument("grid needs at least 2 rows and 2 columns");
  }
  const int width = static_cast<int>(std::to_string(std::max(rows, cols) - 1).size());
  auto pad = [width](int v) {
    std::string s = std::to_string(v);
    return std::string(width - s.size(), '0') + s;
  };
  auto name = [&](int r, int c) { return "n" + pad(r) + "_" + pad(c); };

  std::vector<Node> nodes;
  nodes.reserve(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      nodes.push_back(Node{name(r, c), c * edge_length, r * edge_length});
    }
  }
  std::vector<EdgeSpec> edges;
  auto link = [&](int r0, int c0, int r1, int c1) {
    std::string a = name(r0, c0);
    std::string b = name(r1, c1);
    edges.push_back(EdgeSpec{a + "-" + b, a, b, edge_length, lanes, speed_limit});
    edges.push_back(EdgeSpec{b + "-" + a, b, a, edge_length, lanes, speed_limit});
  };
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (c + 1 < cols) link(r, c, r, c + 1);
      if (r + 1 < rows) link(r, c, r + 1, c);
    }
  }
  return RoadNetwork(std::move(nodes), edges);
}

}  // namespace sybilsim
