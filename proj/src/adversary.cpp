#include "sybilsim/adversary.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "csv_util.hpp"
#include "sybilsim/server.hpp"

namespace sybilsim {

using nlohmann::json;

void AttackSpec::validate(const RoadNetwork& net) const {
  if (targets.empty()) throw std::invalid_argument("attack needs at least one target");
  for (const auto& t : targets) {
    if (!net.find_edge(t)) throw std::invalid_argument("unknown target edge '" + t + "'");
  }
  std::vector<std::string> sorted = targets;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw std::invalid_argument("duplicate target edge");
  }
  if (duration <= 0) throw std::invalid_argument("attack duration must be positive");
  if (!(sybil_speed > 0.0)) throw std::invalid_argument("sybil_speed must be positive");
  if (start < 0) throw std::invalid_argument("attack start must be non-negative");
}

SybilTrace::SybilTrace(std::vector<Report> reports, std::size_t total_spawned,
                       std::size_t max_concurrent, std::vector<TargetStrength> per_target)
    : reports_(std::move(reports)),
      total_spawned_(total_spawned),
      max_concurrent_(max_concurrent),
      per_target_(std::move(per_target)) {
  std::stable_sort(reports_.begin(), reports_.end(), [](const Report& a, const Report& b) {
    if (a.t != b.t) return a.t < b.t;
    return a.vehicle_id < b.vehicle_id;
  });
}

std::span<const Report> SybilTrace::at(Tick t) const {
  auto lo = std::lower_bound(reports_.begin(), reports_.end(), t,
                             [](const Report& r, Tick v) { return r.t < v; });
  auto hi = std::upper_bound(lo, reports_.end(), t,
                             [](Tick v, const Report& r) { return v < r.t; });
  return {lo, hi};
}

std::optional<Tick> SybilTrace::first_time() const {
  if (reports_.empty()) return std::nullopt;
  return reports_.front().t;
}

std::optional<Tick> SybilTrace::last_time() const {
  if (reports_.empty()) return std::nullopt;
  return reports_.back().t;
}

SybilTrace presimulate(const RoadNetwork& net, const AttackSpec& spec,
                       const SimConfig& sim_config) {
  spec.validate(net);
  std::vector<EdgeIdx> targets;
  for (const auto& id : spec.targets) {
    const EdgeIdx e = net.edge_index(id);
    if (net.edge(e).lane_capacity(sim_config.vehicle_length, sim_config.min_gap) < 1) {
      throw std::invalid_argument("target edge '" + id + "' is shorter than one vehicle slot");
    }
    targets.push_back(e);
  }

  SimState state(std::make_shared<RoadNetwork>(net), sim_config, spec.start);
  std::vector<Report> reports;
  std::vector<TargetStrength> per_target;
  for (const auto& id : spec.targets) per_target.push_back(TargetStrength{id, 0, 0});
  std::size_t spawned = 0;
  std::size_t max_concurrent = 0;

  auto on_target = [&](EdgeIdx e) {
    std::size_t n = 0;
    for (int l = 0; l < net.edge(e).lanes; ++l) n += state.lane(e, l).size();
    return n;
  };

  while (state.now() < spec.end() || state.active_count() > 0) {
    const Tick t = state.now();
    if (t < spec.end()) {
      for (std::size_t k = 0; k < targets.size(); ++k) {
        const EdgeIdx e = targets[k];
        const Edge& edge = net.edge(e);
        for (int l = 0; l < edge.lanes; ++l) {
          if (spec.max_sybils && spawned >= *spec.max_sybils) break;
          if (spec.max_active_per_target && on_target(e) >= *spec.max_active_per_target) break;
          std::ostringstream name;
          name << "sybil:" << edge.id << ':' << std::setw(6) << std::setfill('0')
               << per_target[k].spawned;
          Vehicle v;
          v.id = name.str();
          v.depart = t;
          v.origin = e;
          v.destination = e;
          v.role = Role::kSybil;
          v.route = {e};
          v.max_speed_cap = spec.sybil_speed;
          v.speed = std::min(spec.sybil_speed, edge.speed_limit);
          if (state.insert_vehicle_on_lane(std::move(v), l)) {
            ++spawned;
            ++per_target[k].spawned;
          }
        }
      }
    }
    for (std::size_t k = 0; k < targets.size(); ++k) {
      per_target[k].max_concurrent = std::max(per_target[k].max_concurrent, on_target(targets[k]));
    }
    max_concurrent = std::max(max_concurrent, state.active_count());
    for (const Vehicle* v : state.active_vehicles()) {
      reports.push_back(Report{v->id, net.edge(v->current_edge()).id, v->speed, t});
    }
    if (state.now() >= spec.end() && state.active_count() == 0) break;
    state.step();
  }
  return SybilTrace(std::move(reports), spawned, max_concurrent, std::move(per_target));
}

std::size_t inject(const SybilTrace& trace, NmcsServer& server, Tick t) {
  const auto batch = trace.at(t);
  for (const auto& r : batch) server.ingest(r);
  return batch.size();
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

AttackSpec parse_attack_spec(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("attack spec: ") + e.what());
  }
  AttackSpec spec;
  try {
    spec.targets = doc.at("targets").get<std::vector<std::string>>();
    spec.start = doc.at("start").get<Tick>();
    spec.duration = doc.at("duration").get<Tick>();
    spec.sybil_speed = doc.value("sybil_speed", spec.sybil_speed);
    if (doc.contains("max_sybils") && !doc["max_sybils"].is_null()) {
      spec.max_sybils = doc["max_sybils"].get<std::size_t>();
    }
    if (doc.contains("max_active_per_target") && !doc["max_active_per_target"].is_null()) {
      spec.max_active_per_target = doc["max_active_per_target"].get<std::size_t>();
    }
  } catch (const json::exception& e) {
    // Drop the "[json.exception.type.id] " prefix.
    std::string_view what = e.what();
    if (const auto close = what.find("] "); close != std::string_view::npos) {
      what.remove_prefix(close + 2);
    }
    throw ParseError("attack spec: " + std::string(what));
  }
  return spec;
}

AttackSpec load_attack_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open attack spec " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_attack_spec(buf.str());
}

std::string attack_spec_to_json(const AttackSpec& spec) {
  json doc{{"targets", spec.targets},
           {"start", spec.start},
           {"duration", spec.duration},
           {"sybil_speed", spec.sybil_speed}};
  if (spec.max_sybils) doc["max_sybils"] = *spec.max_sybils;
  if (spec.max_active_per_target) doc["max_active_per_target"] = *spec.max_active_per_target;
  return doc.dump(2);
}

namespace {
constexpr std::string_view kReportHeader = "vehicle_id,edge_id,speed,t";
}

void write_sybil_trace(const SybilTrace& trace, const std::filesystem::path& reports_csv,
                       const std::filesystem::path& summary_json) {
  auto out = detail::open_out(reports_csv);
  out << kReportHeader << '\n';
  for (const auto& r : trace.reports()) {
    out << r.vehicle_id << ',' << r.edge_id << ',' << detail::format_double(r.speed) << ','
        << r.t << '\n';
  }
  json summary{{"total_spawned", trace.total_spawned()},
               {"max_concurrent", trace.max_concurrent()}};
  summary["per_target"] = json::array();
  for (const auto& p : trace.per_target()) {
    summary["per_target"].push_back(
        {{"edge_id", p.edge_id}, {"spawned", p.spawned}, {"max_concurrent", p.max_concurrent}});
  }
  auto js = detail::open_out(summary_json);
  js << summary.dump(2) << '\n';
}

SybilTrace read_sybil_trace(const std::filesystem::path& reports_csv,
                            const std::filesystem::path& summary_json) {
  std::vector<Report> reports;
  std::size_t row_no = 0;
  for (auto& row : detail::read_csv(reports_csv, kReportHeader)) {
    const std::string where = reports_csv.string() + " row " + std::to_string(++row_no);
    reports.push_back(Report{row[0], row[1], detail::parse_double(row[2], where),
                             static_cast<Tick>(detail::parse_int(row[3], where))});
  }
  std::ifstream in(summary_json);
  if (!in) throw ParseError("cannot open " + summary_json.string());
  json summary = json::parse(in);
  std::vector<TargetStrength> per_target;
  for (const auto& p : summary.value("per_target", json::array())) {
    per_target.push_back(TargetStrength{p.at("edge_id").get<std::string>(),
                                        p.at("spawned").get<std::size_t>(),
                                        p.at("max_concurrent").get<std::size_t>()});
  }
  return SybilTrace(std::move(reports), summary.at("total_spawned").get<std::size_t>(),
                    summary.at("max_concurrent").get<std::size_t>(), std::move(per_target));
}

}  // namespace sybilsim
