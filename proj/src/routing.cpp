#include "sybilsim/routing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <thread>
#include <unordered_set>

namespace sybilsim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr EdgeIdx kNoEdge = std::numeric_limits<EdgeIdx>::max();

struct QueueEntry {
  double dist;
  std::uint32_t rank;
  NodeIdx node;
  bool operator>(const QueueEntry& o) const {
    if (dist != o.dist) return dist > o.dist;
    return rank > o.rank;
  }
};

using MinQueue =
    std::priority_queue<QueueEntry, std::vector<QueueEntry>, std::greater<>>;

void check_times(const RoadNetwork& net, std::span<const double> times) {
  if (times.size() != net.edge_count()) {
    throw std::invalid_argument("edge_times must cover every edge");
  }
  for (double t : times) {
    if (!(t > 0.0)) throw std::invalid_argument("edge times must be positive");
  }
}

struct Tree {
  std::vector<double> dist;
  std::vector<EdgeIdx> pred;
};

Tree dijkstra(const RoadNetwork& net, std::span<const double> times,
              NodeIdx source, std::optional<NodeIdx> stop_at) {
  const auto n = net.node_count();
  Tree tree{std::vector<double>(n, kInf), std::vector<EdgeIdx>(n, kNoEdge)};
  std::vector<char> settled(n, 0);
  MinQueue queue;
  tree.dist[source] = 0.0;
  queue.push({0.0, net.node_rank(source), source});
  while (!queue.empty()) {
    auto [d, rank, u] = queue.top();
    queue.pop();
    if (settled[u] || d != tree.dist[u]) continue;
    settled[u] = 1;
    if (stop_at && *stop_at == u) break;
    for (EdgeIdx e : net.out_edges(u)) {
      const double w = times[e];
      if (!(w < kInf)) continue;
      const NodeIdx v = net.edge(e).to;
      if (settled[v]) continue;
      const double nd = d + w;
      bool take = nd < tree.dist[v];
      if (!take && nd == tree.dist[v]) {
        const Edge& cur = net.edge(tree.pred[v]);
        const auto cur_rank = net.node_rank(cur.from);
        const auto new_rank = net.node_rank(u);
        take = new_rank < cur_rank ||
               (new_rank == cur_rank && net.edge_rank(e) < net.edge_rank(tree.pred[v]));
      }
      if (take) {
        const bool improved = nd < tree.dist[v];
        tree.dist[v] = nd;
        tree.pred[v] = e;
        if (improved) queue.push({nd, net.node_rank(v), v});
      }
    }
  }
  return tree;
}

}  // namespace

bool is_connected(const RoadNetwork& net, std::span<const EdgeIdx> edges) {
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (net.edge(edges[i - 1]).to != net.edge(edges[i]).from) return false;
  }
  return true;
}

bool is_simple(std::span<const EdgeIdx> edges) {
  std::unordered_set<EdgeIdx> seen;
  for (EdgeIdx e : edges) {
    if (!seen.insert(e).second) return false;
  }
  return true;
}

std::vector<std::string> edge_ids(const RoadNetwork& net,
                                  std::span<const EdgeIdx> edges) {
  std::vector<std::string> out;
  out.reserve(edges.size());
  for (EdgeIdx e : edges) out.push_back(net.edge(e).id);
  return out;
}

std::optional<Route> shortest_path(const RoadNetwork& net,
                                   std::span<const double> edge_times,
                                   NodeIdx from, NodeIdx to) {
  check_times(net, edge_times);
  Tree tree = dijkstra(net, edge_times, from, to);
  if (!(tree.dist[to] < kInf)) return std::nullopt;
  Route route;
  route.total_expected_time = tree.dist[to];
  for (NodeIdx v = to; v != from;) {
    EdgeIdx e = tree.pred[v];
    route.edges.push_back(e);
    v = net.edge(e).from;
  }
  std::reverse(route.edges.begin(), route.edges.end());
  return route;
}

std::vector<double> shortest_distances(const RoadNetwork& net,
                                       std::span<const double> edge_times,
                                       NodeIdx from) {
  check_times(net, edge_times);
  return dijkstra(net, edge_times, from, std::nullopt).dist;
}

std::optional<Route> route_between_edges(const RoadNetwork& net,
                                         std::span<const double> edge_times,
                                         EdgeIdx origin, EdgeIdx destination) {
  check_times(net, edge_times);
  Route route;
  route.edges.push_back(origin);
  route.total_expected_time = edge_times[origin];
  if (origin == destination) return route;
  auto link = shortest_path(net, edge_times, net.edge(origin).to,
                            net.edge(destination).from);
  if (!link) return std::nullopt;
  route.edges.insert(route.edges.end(), link->edges.begin(), link->edges.end());
  route.edges.push_back(destination);
  route.total_expected_time += link->total_expected_time + edge_times[destination];
  return route;
}

// ---------------------------------------------------------------------------
// Betweenness
// ---------------------------------------------------------------------------

namespace {

struct SourceContribution {
  std::vector<double> node;
  std::vector<double> edge;
};

struct Pred {
  NodeIdx node;
  EdgeIdx edge;
};

void brandes_source(const RoadNetwork& net, std::span<const double> times,
                    NodeIdx s, SourceContribution& out) {
  const auto n = net.node_count();
  std::vector<double> dist(n, kInf);
  std::vector<double> sigma(n, 0.0);
  std::vector<double> delta(n, 0.0);
  std::vector<std::vector<Pred>> preds(n);
  std::vector<char> settled(n, 0);
  std::vector<NodeIdx> order;
  order.reserve(n);

  MinQueue queue;
  dist[s] = 0.0;
  sigma[s] = 1.0;
  queue.push({0.0, net.node_rank(s), s});
  while (!queue.empty()) {
    auto [d, rank, u] = queue.top();
    queue.pop();
    if (settled[u] || d != dist[u]) continue;
    settled[u] = 1;
    order.push_back(u);
    for (EdgeIdx e : net.out_edges(u)) {
      const double w = times[e];
      if (!(w < kInf)) continue;
      const NodeIdx v = net.edge(e).to;
      if (settled[v]) continue;
      const double nd = d + w;
      if (nd < dist[v] - kPathTieTolerance) {
        dist[v] = nd;
        sigma[v] = sigma[u];
        preds[v].assign(1, Pred{u, e});
        queue.push({nd, net.node_rank(v), v});
      } else if (std::abs(nd - dist[v]) <= kPathTieTolerance) {
        sigma[v] += sigma[u];
        preds[v].push_back(Pred{u, e});
      }
    }
  }

  out.node.assign(n, 0.0);
  out.edge.assign(net.edge_count(), 0.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const NodeIdx w = *it;
    for (const auto& p : preds[w]) {
      const double c = sigma[p.node] / sigma[w] * (1.0 + delta[w]);
      out.edge[p.edge] += c;
      delta[p.node] += c;
    }
    if (w != s) out.node[w] = delta[w];
  }
}

}  // namespace

CentralityScores betweenness_centrality(const RoadNetwork& net,
                                        std::span<const double> edge_times,
                                        unsigned workers) {
  check_times(net, edge_times);
  for (double t : edge_times) {
    if (!(t > 0.0)) throw std::invalid_argument("edge times must be positive");
  }
  CentralityScores scores{std::vector<double>(net.node_count(), 0.0),
                          std::vector<double>(net.edge_count(), 0.0)};
  const auto sources = net.nodes_by_id();
  workers = std::max(1u, workers);
  const std::size_t batch = workers == 1 ? 1 : std::size_t{workers} * 4;
  std::vector<SourceContribution> parts(batch);

  for (std::size_t begin = 0; begin < sources.size(); begin += batch) {
    const std::size_t end = std::min(sources.size(), begin + batch);
    if (workers == 1) {
      for (std::size_t i = begin; i < end; ++i) {
        brandes_source(net, edge_times, sources[i], parts[i - begin]);
      }
    } else {
      std::vector<std::jthread> pool;
      for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          for (std::size_t i = begin + w; i < end; i += workers) {
            brandes_source(net, edge_times, sources[i], parts[i - begin]);
          }
        });
      }
    }
    // Summation order is fixed by source rank regardless of worker layout.
    for (std::size_t i = begin; i < end; ++i) {
      const auto& part = parts[i - begin];
      for (std::size_t v = 0; v < part.node.size(); ++v) scores.node_bc[v] += part.node[v];
      for (std::size_t e = 0; e < part.edge.size(); ++e) scores.edge_bc[e] += part.edge[e];
    }
  }
  return scores;
}

// ---------------------------------------------------------------------------
// Target selection
// ---------------------------------------------------------------------------

namespace {

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

std::vector<TargetCandidate> select_targets(
    const RoadNetwork& net, std::span<const double> edge_times,
    const CentralityScores& scores, std::size_t k,
    const TargetSelectionOptions& options) {
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  if (!(options.max_detour_factor > 1.0)) {
    throw std::invalid_argument("max_detour_factor must exceed 1");
  }
  if (options.od_samples < 1) throw std::invalid_argument("od_samples must be >= 1");
  check_times(net, edge_times);
  if (scores.edge_bc.size() != net.edge_count()) {
    throw std::invalid_argument("scores do not match the network");
  }

  // Ranking: bc descending; values within tolerance count as tied and fall
  // back to edge id order.
  std::vector<EdgeIdx> ranked;
  for (EdgeIdx e = 0; e < net.edge_count(); ++e) {
    if (scores.edge_bc[e] > 0.0) ranked.push_back(e);
  }
  std::sort(ranked.begin(), ranked.end(), [&](EdgeIdx a, EdgeIdx b) {
    if (scores.edge_bc[a] != scores.edge_bc[b]) return scores.edge_bc[a] > scores.edge_bc[b];
    return net.edge_rank(a) < net.edge_rank(b);
  });
  for (std::size_t g = 0; g < ranked.size();) {
    const double head = scores.edge_bc[ranked[g]];
    const double tol = 1e-9 * std::max(1.0, std::abs(head));
    std::size_t h = g + 1;
    while (h < ranked.size() && head - scores.edge_bc[ranked[h]] <= tol) ++h;
    std::sort(ranked.begin() + g, ranked.begin() + h, [&](EdgeIdx a, EdgeIdx b) {
      return net.edge_rank(a) < net.edge_rank(b);
    });
    g = h;
  }

  const auto order = net.nodes_by_id();
  std::vector<std::vector<double>> dist_from(net.node_count());
  for (NodeIdx s : order) dist_from[s] = shortest_distances(net, edge_times, s);

  std::vector<TargetCandidate> result;
  EdgeTimes blocked(edge_times.begin(), edge_times.end());
  for (EdgeIdx e : ranked) {
    if (result.size() >= k) break;
    const Edge& edge = net.edge(e);
    std::vector<std::pair<NodeIdx, NodeIdx>> pairs;
    for (NodeIdx s : order) {
      const double to_tail = dist_from[s][edge.from];
      if (!(to_tail < kInf)) continue;
      for (NodeIdx t : order) {
        if (s == t) continue;
        const double direct = dist_from[s][t];
        const double via = to_tail + edge_times[e] + dist_from[edge.to][t];
        if (direct < kInf && std::abs(via - direct) <= kPathTieTolerance) {
          pairs.emplace_back(s, t);
        }
      }
    }
    if (pairs.empty()) continue;
    std::vector<std::pair<NodeIdx, NodeIdx>> sample;
    if (pairs.size() <= options.od_samples) {
      sample = pairs;
    } else {
      for (std::size_t i = 0; i < options.od_samples; ++i) {
        sample.push_back(pairs[i * pairs.size() / options.od_samples]);
      }
    }

    blocked[e] = kInf;
    bool viable = true;
    std::vector<double> factors;
    factors.reserve(sample.size());
    for (auto [s, t] : sample) {
      auto alt = shortest_path(net, blocked, s, t);
      if (!alt) {
        viable = false;
        break;
      }
      factors.push_back(alt->total_expected_time / dist_from[s][t]);
    }
    blocked[e] = edge_times[e];
    if (!viable) continue;
    const double med = median(factors);
    if (med > options.max_detour_factor) continue;
    result.push_back(TargetCandidate{e, scores.edge_bc[e], med, sample.size()});
  }
  return result;
}

}  // namespace sybilsim
