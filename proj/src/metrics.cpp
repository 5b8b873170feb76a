#include "sybilsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "csv_util.hpp"

namespace sybilsim {

using nlohmann::json;

namespace {

std::vector<EdgeIdx> target_indices(const AttackSpec& spec, const RoadNetwork& net) {
  std::vector<EdgeIdx> out;
  for (const auto& t : spec.targets) out.push_back(net.edge_index(t));
  return out;
}

bool contains(std::span<const EdgeIdx> edges, EdgeIdx e) {
  return std::find(edges.begin(), edges.end(), e) != edges.end();
}

bool enters_target_during(const std::vector<const TraceEvent*>& events,
                          std::span<const EdgeIdx> targets, const AttackSpec& spec) {
  return std::any_of(events.begin(), events.end(), [&](const TraceEvent* ev) {
    return contains(targets, ev->edge) && ev->entry_time >= spec.start &&
           ev->entry_time <= spec.end();
  });
}

/// [first, last] event indices covering the segment, or the whole trip.
std::optional<std::pair<std::size_t, std::size_t>> span_of(
    const std::vector<const TraceEvent*>& events, const std::optional<Segment>& segment) {
  if (events.empty()) return std::nullopt;
  if (!segment) return std::pair<std::size_t, std::size_t>{0, events.size() - 1};
  std::size_t i = 0;
  while (i < events.size() && events[i]->edge != segment->start_edge) ++i;
  if (i == events.size()) return std::nullopt;
  std::size_t j = i;
  while (j < events.size() && events[j]->edge != segment->end_edge) ++j;
  if (j == events.size()) return std::nullopt;
  return std::pair<std::size_t, std::size_t>{i, j};
}

std::optional<double> pct_change(std::optional<double> base, std::optional<double> attack) {
  if (!base || !attack || *base == 0.0) return std::nullopt;
  return (*attack - *base) / *base * 100.0;
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

VehicleSet affected_users(const RunArtifacts& baseline, const AttackSpec& spec,
                          const RoadNetwork& net) {
  const auto targets = target_indices(spec, net);
  VehicleSet out;
  for (const auto& v : baseline.vehicles) {
    if (v.role != Role::kUser) continue;
    if (enters_target_during(baseline.events_of(v.id), targets, spec)) out.insert(v.id);
  }
  return out;
}

Classification classify(const VehicleSet& affected, const RunArtifacts& attack_run,
                        const AttackSpec& spec, const RoadNetwork& net) {
  const auto targets = target_indices(spec, net);
  Classification c;
  for (const auto& id : affected) {
    const VehicleRecord* rec = attack_run.vehicle(id);
    if (rec == nullptr || !rec->inserted) {
      c.missing.insert(id);
      continue;
    }
    if (enters_target_during(attack_run.events_of(id), targets, spec)) {
      c.did_enter.insert(id);
    } else {
      c.did_not_enter.insert(id);
    }
  }
  return c;
}

std::optional<Segment> divergence_segment(std::span<const EdgeIdx> route_base,
                                          std::span<const EdgeIdx> route_attack,
                                          std::span<const EdgeIdx> targets) {
  std::optional<std::size_t> first;
  std::size_t last = 0;
  for (std::size_t i = 0; i < route_base.size(); ++i) {
    if (contains(targets, route_base[i])) {
      if (!first) first = i;
      last = i;
    }
  }
  if (!first) return std::nullopt;

  Segment seg;
  seg.start_edge = route_base.front();
  seg.start_fallback = true;
  for (std::size_t i = *first; i-- > 0;) {
    if (contains(route_attack, route_base[i])) {
      seg.start_edge = route_base[i];
      seg.start_fallback = false;
      break;
    }
  }
  seg.end_edge = route_base.back();
  seg.end_fallback = true;
  for (std::size_t i = last + 1; i < route_base.size(); ++i) {
    if (contains(route_attack, route_base[i])) {
      seg.end_edge = route_base[i];
      seg.end_fallback = false;
      break;
    }
  }
  return seg;
}

std::optional<double> travel_time(const RunArtifacts& run, std::string_view vehicle,
                                  const std::optional<Segment>& segment) {
  const auto events = run.events_of(vehicle);
  const auto range = span_of(events, segment);
  if (!range) return std::nullopt;
  const TraceEvent* last = events[range->second];
  if (!last->exit_time) return std::nullopt;
  return static_cast<double>(*last->exit_time - events[range->first]->entry_time);
}

std::optional<double> time_loss(const RunArtifacts& run, const RoadNetwork& net,
                                std::string_view vehicle,
                                const std::optional<Segment>& segment) {
  const auto events = run.events_of(vehicle);
  const auto range = span_of(events, segment);
  if (!range) return std::nullopt;
  const TraceEvent* last = events[range->second];
  if (!last->exit_time) return std::nullopt;
  double optimum = 0.0;
  for (std::size_t i = range->first; i <= range->second; ++i) {
    optimum += net.edge(events[i]->edge).free_flow_time();
  }
  const double actual = static_cast<double>(*last->exit_time - events[range->first]->entry_time);
  return actual - optimum;
}

std::optional<double> sample_ratio(std::size_t did_not_enter, std::size_t did_enter) {
  const std::size_t total = did_not_enter + did_enter;
  if (total == 0) return std::nullopt;
  return static_cast<double>(did_not_enter) / static_cast<double>(total);
}

std::map<std::string, long long> flow_delta(const RunArtifacts& baseline,
                                            const RunArtifacts& attack_run,
                                            const VehicleSet& users, const RoadNetwork& net,
                                            TimeRange range) {
  std::vector<long long> delta(net.edge_count(), 0);
  auto count = [&](const RunArtifacts& run, long long sign) {
    for (const auto& id : users) {
      for (const TraceEvent* ev : run.events_of(id)) {
        if (ev->entry_time >= range.from && ev->entry_time <= range.to) delta[ev->edge] += sign;
      }
    }
  };
  count(attack_run, +1);
  count(baseline, -1);
  std::map<std::string, long long> out;
  for (EdgeIdx e = 0; e < net.edge_count(); ++e) out[net.edge(e).id] = delta[e];
  return out;
}

std::optional<double> VehicleImpact::travel_time_pct() const {
  return pct_change(travel_time_base, travel_time_attack);
}

std::optional<double> VehicleImpact::time_loss_pct() const {
  return pct_change(time_loss_base, time_loss_attack);
}

ImpactReport compute_impact(const RoadNetwork& net, const RunArtifacts& baseline,
                            const RunArtifacts& attack_run, const AttackSpec& spec,
                            std::string group) {
  ImpactReport r;
  r.group = std::move(group);
  r.attack = spec;
  r.affected = affected_users(baseline, spec, net);
  r.sets = classify(r.affected, attack_run, spec, net);
  r.sample_ratio = sample_ratio(r.sets.did_not_enter.size(), r.sets.did_enter.size());
  const auto targets = target_indices(spec, net);

  auto add = [&](const std::string& id, bool did_enter) {
    VehicleImpact vi;
    vi.id = id;
    vi.did_enter = did_enter;
    std::optional<Segment> seg;
    if (!did_enter) {
      const VehicleRecord* b = baseline.vehicle(id);
      const VehicleRecord* a = attack_run.vehicle(id);
      seg = divergence_segment(b->route_taken, a->route_taken, targets);
      if (seg) vi.segment_fallback = seg->start_fallback || seg->end_fallback;
    }
    vi.travel_time_base = travel_time(baseline, id, seg);
    vi.travel_time_attack = travel_time(attack_run, id, seg);
    vi.time_loss_base = time_loss(baseline, net, id, seg);
    vi.time_loss_attack = time_loss(attack_run, net, id, seg);
    if (!vi.travel_time_base || !vi.travel_time_attack) ++r.unfinished_excluded;
    r.vehicles.push_back(std::move(vi));
  };
  for (const auto& id : r.sets.did_not_enter) add(id, false);
  for (const auto& id : r.sets.did_enter) add(id, true);
  std::sort(r.vehicles.begin(), r.vehicles.end(),
            [](const VehicleImpact& a, const VehicleImpact& b) { return a.id < b.id; });

  r.flow_delta = flow_delta(baseline, attack_run, r.affected, net, TimeRange{spec.start});
  if (attack_run.sybils) {
    r.sybils_spawned = attack_run.sybils->total_spawned;
    r.sybils_max_concurrent = attack_run.sybils->max_concurrent;
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (Tick t = spec.start; t < spec.end(); ++t) {
    if (t < 0 || static_cast<std::size_t>(t) >= attack_run.active_users.size()) break;
    sum += static_cast<double>(attack_run.active_users[static_cast<std::size_t>(t)]);
    ++n;
  }
  r.mean_active_users = n > 0 ? sum / static_cast<double>(n) : 0.0;
  return r;
}

std::optional<double> median(std::vector<double> values) {
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

AggregateSummary aggregate(const std::vector<ImpactReport>& reports) {
  AggregateSummary s;
  std::map<std::string, std::vector<const ImpactReport*>> groups;
  std::vector<std::string> order;
  for (const auto& r : reports) {
    auto [it, fresh] = groups.try_emplace(r.group);
    if (fresh) order.push_back(r.group);
    it->second.push_back(&r);
  }

  double weighted_sum = 0.0;
  for (const auto& g : order) {
    AggregateRow row;
    row.group = g;
    std::vector<double> tt, tl;
    double ratio_sum = 0.0;
    std::size_t ratio_n = 0;
    for (const ImpactReport* r : groups[g]) {
      ++row.reports;
      if (r->sample_ratio) {
        ratio_sum += *r->sample_ratio;
        ++ratio_n;
      }
      if (r->sets.did_not_enter.empty()) {
        ++s.reports_without_did_not_enter;
        continue;
      }
      std::vector<double> report_tt;
      for (const auto& v : r->vehicles) {
        if (v.did_enter) continue;
        ++row.did_not_enter;
        if (auto p = v.travel_time_pct()) {
          report_tt.push_back(*p);
        } else if (v.travel_time_base && *v.travel_time_base == 0.0) {
          ++s.zero_baseline_skipped;
        }
        if (auto p = v.time_loss_pct()) {
          tl.push_back(*p);
        } else if (v.time_loss_base && *v.time_loss_base == 0.0) {
          ++s.zero_baseline_skipped;
        }
      }
      if (!report_tt.empty()) {
        const double mean =
            std::accumulate(report_tt.begin(), report_tt.end(), 0.0) / report_tt.size();
        weighted_sum += mean * static_cast<double>(report_tt.size());
        s.weighted_population += report_tt.size();
      }
      tt.insert(tt.end(), report_tt.begin(), report_tt.end());
    }
    row.median_travel_time_pct = median(tt);
    row.median_time_loss_pct = median(tl);
    if (ratio_n > 0) row.mean_sample_ratio = ratio_sum / static_cast<double>(ratio_n);
    s.rows.push_back(std::move(row));
  }
  if (s.weighted_population > 0) {
    s.weighted_mean_travel_time_pct = weighted_sum / static_cast<double>(s.weighted_population);
  }
  return s;
}

std::string impact_to_json(const ImpactReport& r) {
  json doc{{"group", r.group},
           {"attack", json::parse(attack_spec_to_json(r.attack))},
           {"affected", r.affected.size()},
           {"did_enter", r.sets.did_enter},
           {"did_not_enter", r.sets.did_not_enter},
           {"missing", r.sets.missing},
           {"sample_ratio", opt_json(r.sample_ratio)},
           {"unfinished_excluded", r.unfinished_excluded},
           {"sybils_spawned", r.sybils_spawned},
           {"sybils_max_concurrent", r.sybils_max_concurrent},
           {"mean_active_users", r.mean_active_users}};
  std::vector<double> tt, tl;
  for (const auto& v : r.vehicles) {
    if (v.did_enter) continue;
    if (auto p = v.travel_time_pct()) tt.push_back(*p);
    if (auto p = v.time_loss_pct()) tl.push_back(*p);
  }
  doc["median_travel_time_pct"] = opt_json(median(tt));
  doc["median_time_loss_pct"] = opt_json(median(tl));
  return doc.dump(2);
}

void write_impact(const ImpactReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto out = detail::open_out(dir / "impact.json");
    out << impact_to_json(r) << '\n';
  }
  {
    auto out = detail::open_out(dir / "vehicles_impact.csv");
    out << "vehicle_id,set,travel_time_base,travel_time_attack,time_loss_base,time_loss_attack\n";
    auto cell = [](const std::optional<double>& v) {
      return v ? detail::format_double(*v) : std::string();
    };
    for (const auto& v : r.vehicles) {
      out << v.id << ',' << (v.did_enter ? "did_enter" : "did_not_enter") << ','
          << cell(v.travel_time_base) << ',' << cell(v.travel_time_attack) << ','
          << cell(v.time_loss_base) << ',' << cell(v.time_loss_attack) << '\n';
    }
  }
  auto out = detail::open_out(dir / "flow_delta.csv");
  out << "edge_id,delta\n";
  for (const auto& [edge, d] : r.flow_delta) out << edge << ',' << d << '\n';
}

std::string aggregate_to_json(const AggregateSummary& s) {
  json rows = json::array();
  for (const auto& row : s.rows) {
    rows.push_back({{"group", row.group},
                    {"reports", row.reports},
                    {"did_not_enter", row.did_not_enter},
                    {"median_travel_time_pct", opt_json(row.median_travel_time_pct)},
                    {"median_time_loss_pct", opt_json(row.median_time_loss_pct)},
                    {"mean_sample_ratio", opt_json(row.mean_sample_ratio)}});
  }
  json doc{{"groups", rows},
           {"weighted_mean_travel_time_pct", opt_json(s.weighted_mean_travel_time_pct)},
           {"weighted_population", s.weighted_population},
           {"reports_without_did_not_enter", s.reports_without_did_not_enter},
           {"zero_baseline_skipped", s.zero_baseline_skipped}};
  return doc.dump(2);
}

}  // namespace sybilsim
