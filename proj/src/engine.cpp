#include "sybilsim/engine.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "csv_util.hpp"

namespace sybilsim {

using nlohmann::json;

const VehicleRecord* RunArtifacts::vehicle(std::string_view id) const {
  auto it = std::lower_bound(vehicles.begin(), vehicles.end(), id,
                             [](const VehicleRecord& v, std::string_view key) { return v.id < key; });
  if (it == vehicles.end() || it->id != id) return nullptr;
  return &*it;
}

std::vector<const TraceEvent*> RunArtifacts::events_of(std::string_view id) const {
  auto lo = std::lower_bound(traces.begin(), traces.end(), id,
                             [](const TraceEvent& e, std::string_view key) { return e.vehicle_id < key; });
  std::vector<const TraceEvent*> out;
  for (auto it = lo; it != traces.end() && it->vehicle_id == id; ++it) out.push_back(&*it);
  return out;
}

RunArtifacts run_simulation(std::shared_ptr<const RoadNetwork> network,
                            const std::vector<Trip>& demand, const RunOptions& options,
                            const AttackSpec* attack, const SybilTrace* trace) {
  const RoadNetwork& net = *network;
  options.window.validate();
  options.sim.validate();

  const bool attacking = attack != nullptr && attack->duration > 0;
  std::optional<SybilTrace> own_trace;
  if (attacking && trace == nullptr) {
    own_trace = presimulate(net, *attack, options.sim);
    trace = &*own_trace;
  }
  if (!attacking) trace = nullptr;

  SimState state(network, options.sim);
  NmcsServer server(network, options.window, options.speed_floor);
  state.add_demand(demand);

  const auto free_flow = net.free_flow_times();
  const std::set<std::string>* routed =
      options.routed_users ? &*options.routed_users : nullptr;
  state.set_route_provider([&](const Trip& trip) {
    const bool follows_server =
        trip.role == Role::kUser && (routed == nullptr || routed->contains(trip.id));
    const auto& times = follows_server ? server.table().travel_time : free_flow;
    return route_between_edges(net, times, trip.origin, trip.destination);
  });

  RunArtifacts run;
  run.run_id = options.run_id;
  run.seed = options.sim.seed;
  if (attack != nullptr) run.attack = *attack;
  if (trace != nullptr) {
    run.sybils = SybilSummary{trace->total_spawned(), trace->max_concurrent(), 0};
  }

  auto tick = [&](Tick t) {
    server.advance_to(t);
    for (const auto& r : state.emit_reports()) server.ingest(r);
    if (trace != nullptr) run.sybils->injected_reports += inject(*trace, server, t);
    if (server.is_slide(t)) {
      server.refresh(t);
      if (options.record_estimates) {
        auto rows = server.dump();
        run.estimates.insert(run.estimates.end(), rows.begin(), rows.end());
      }
      reroute_users(state, server.table(), routed);
    }
    std::size_t users = 0;
    for (const Vehicle* v : state.active_vehicles()) users += v->role == Role::kUser;
    run.active_users.push_back(users);
  };

  state.insert_departures();
  tick(state.now());
  while (state.now() < options.horizon &&
         (state.pending_count() > 0 || state.active_count() > 0)) {
    state.step();
    tick(state.now());
  }

  run.end_time = state.now();
  run.stats = state.stats();
  run.conserved = state.conserved();
  run.traces = state.trace();
  std::stable_sort(run.traces.begin(), run.traces.end(),
                   [](const TraceEvent& a, const TraceEvent& b) {
                     if (a.vehicle_id != b.vehicle_id) return a.vehicle_id < b.vehicle_id;
                     return a.entry_time < b.entry_time;
                   });
  std::unordered_map<std::string, std::vector<EdgeIdx>> taken;
  for (const auto& ev : run.traces) taken[ev.vehicle_id].push_back(ev.edge);

  for (const auto& trip : demand) {
    VehicleRecord rec{trip.id, trip.role, trip.depart, trip.origin, trip.destination,
                      std::nullopt, std::nullopt, {}};
    if (auto it = state.insertions().find(trip.id); it != state.insertions().end()) {
      rec.inserted = it->second;
    }
    if (auto it = state.arrivals().find(trip.id); it != state.arrivals().end()) {
      rec.arrived = it->second;
    } else {
      ++run.unfinished;
    }
    if (auto it = taken.find(trip.id); it != taken.end()) rec.route_taken = it->second;
    run.vehicles.push_back(std::move(rec));
  }
  std::sort(run.vehicles.begin(), run.vehicles.end(),
            [](const VehicleRecord& a, const VehicleRecord& b) { return a.id < b.id; });
  return run;
}

// ---------------------------------------------------------------------------
// Demand
// ---------------------------------------------------------------------------

std::vector<Trip> parse_demand(std::string_view json_text, const RoadNetwork& net) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("demand: ") + e.what());
  }
  if (!doc.is_array()) throw ParseError("demand: expected a JSON list");
  std::vector<Trip> trips;
  trips.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string where = "demand[" + std::to_string(i) + "]";
    try {
      const auto& d = doc[i];
      Trip trip;
      trip.id = d.at("id").get<std::string>();
      trip.depart = d.at("depart").get<Tick>();
      trip.origin = net.edge_index(d.at("origin").get<std::string>());
      trip.destination = net.edge_index(d.at("destination").get<std::string>());
      trip.role = parse_role(d.at("role").get<std::string>());
      if (trip.role == Role::kSybil) throw ParseError("sybil role is not valid in demand");
      trips.push_back(std::move(trip));
    } catch (const ParseError& e) {
      throw ParseError(where + ": " + e.what());
    } catch (const std::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
  }
  return trips;
}

std::vector<Trip> load_demand(const std::filesystem::path& path, const RoadNetwork& net) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open demand file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_demand(buf.str(), net);
}

std::string demand_to_json(const std::vector<Trip>& demand, const RoadNetwork& net) {
  json doc = json::array();
  for (const auto& t : demand) {
    doc.push_back({{"id", t.id},
                   {"depart", t.depart},
                   {"origin", net.edge(t.origin).id},
                   {"destination", net.edge(t.destination).id},
                   {"role", std::string(to_string(t.role))}});
  }
  return doc.dump(2);
}

// ---------------------------------------------------------------------------
// Run artifacts on disk
// ---------------------------------------------------------------------------

namespace {
constexpr std::string_view kTraceHeader = "vehicle_id,edge_id,entry_time,exit_time";
constexpr std::string_view kVehicleHeader =
    "vehicle_id,role,depart,origin,destination,inserted,arrived";
constexpr std::string_view kEstimateHeader = "slide_time,edge_id,estimate_mps,sample_count";

std::string opt_tick(const std::optional<Tick>& t) { return t ? std::to_string(*t) : ""; }

std::optional<Tick> parse_opt_tick(const std::string& s, const std::string& where) {
  if (s.empty()) return std::nullopt;
  return static_cast<Tick>(detail::parse_int(s, where));
}
}  // namespace

void write_traces_csv(const RunArtifacts& run, const RoadNetwork& net,
                      const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << kTraceHeader << '\n';
  for (const auto& ev : run.traces) {
    out << ev.vehicle_id << ',' << net.edge(ev.edge).id << ',' << ev.entry_time << ','
        << opt_tick(ev.exit_time) << '\n';
  }
}

void write_estimates_csv(const RunArtifacts& run, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << kEstimateHeader << '\n';
  for (const auto& row : run.estimates) {
    out << row.slide_time << ',' << row.edge_id << ',' << detail::format_double(row.estimate_mps)
        << ',' << row.sample_count << '\n';
  }
}

void write_run(const RunArtifacts& run, const RoadNetwork& net,
               const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_traces_csv(run, net, dir / "traces.csv");
  {
    auto out = detail::open_out(dir / "vehicles.csv");
    out << kVehicleHeader << '\n';
    for (const auto& v : run.vehicles) {
      out << v.id << ',' << to_string(v.role) << ',' << v.depart << ','
          << net.edge(v.origin).id << ',' << net.edge(v.destination).id << ','
          << opt_tick(v.inserted) << ',' << opt_tick(v.arrived) << '\n';
    }
  }
  if (!run.estimates.empty()) write_estimates_csv(run, dir / "estimates.csv");

  json meta{{"run_id", run.run_id},
            {"seed", run.seed},
            {"end_time", run.end_time},
            {"unfinished", run.unfinished},
            {"conserved", run.conserved},
            {"stats",
             {{"inserted", run.stats.inserted},
              {"arrived", run.stats.arrived},
              {"gap_violations", run.stats.gap_violations},
              {"speed_violations", run.stats.speed_violations},
              {"blocked_insertions", run.stats.blocked_insertions},
              {"unroutable", run.stats.unroutable}}},
            {"active_users", run.active_users}};
  meta["attack"] = run.attack ? json::parse(attack_spec_to_json(*run.attack)) : json(nullptr);
  if (run.sybils) {
    meta["sybils"] = {{"total_spawned", run.sybils->total_spawned},
                      {"max_concurrent", run.sybils->max_concurrent},
                      {"injected_reports", run.sybils->injected_reports}};
  }
  auto out = detail::open_out(dir / "run.json");
  out << meta.dump(2) << '\n';
}

RunArtifacts read_run(const std::filesystem::path& dir, const RoadNetwork& net) {
  RunArtifacts run;
  std::ifstream in(dir / "run.json");
  if (!in) throw ParseError("cannot open " + (dir / "run.json").string());
  json meta = json::parse(in);
  run.run_id = meta.at("run_id").get<std::string>();
  run.seed = meta.at("seed").get<std::uint64_t>();
  run.end_time = meta.at("end_time").get<Tick>();
  run.unfinished = meta.at("unfinished").get<std::size_t>();
  run.conserved = meta.at("conserved").get<bool>();
  const auto& st = meta.at("stats");
  run.stats.inserted = st.at("inserted").get<std::size_t>();
  run.stats.arrived = st.at("arrived").get<std::size_t>();
  run.stats.gap_violations = st.at("gap_violations").get<std::size_t>();
  run.stats.speed_violations = st.at("speed_violations").get<std::size_t>();
  run.stats.blocked_insertions = st.at("blocked_insertions").get<std::size_t>();
  run.stats.unroutable = st.at("unroutable").get<std::size_t>();
  run.active_users = meta.at("active_users").get<std::vector<std::size_t>>();
  if (!meta.at("attack").is_null()) run.attack = parse_attack_spec(meta["attack"].dump());
  if (meta.contains("sybils")) {
    const auto& s = meta["sybils"];
    run.sybils = SybilSummary{s.at("total_spawned").get<std::size_t>(),
                              s.at("max_concurrent").get<std::size_t>(),
                              s.at("injected_reports").get<std::size_t>()};
  }

  const auto trace_path = dir / "traces.csv";
  std::size_t n = 0;
  for (auto& row : detail::read_csv(trace_path, kTraceHeader)) {
    const std::string where = trace_path.string() + " row " + std::to_string(++n);
    run.traces.push_back(TraceEvent{row[0], net.edge_index(row[1]),
                                    static_cast<Tick>(detail::parse_int(row[2], where)),
                                    parse_opt_tick(row[3], where)});
  }
  std::unordered_map<std::string, std::vector<EdgeIdx>> taken;
  for (const auto& ev : run.traces) taken[ev.vehicle_id].push_back(ev.edge);

  const auto veh_path = dir / "vehicles.csv";
  n = 0;
  for (auto& row : detail::read_csv(veh_path, kVehicleHeader)) {
    const std::string where = veh_path.string() + " row " + std::to_string(++n);
    VehicleRecord rec;
    rec.id = row[0];
    rec.role = parse_role(row[1]);
    rec.depart = static_cast<Tick>(detail::parse_int(row[2], where));
    rec.origin = net.edge_index(row[3]);
    rec.destination = net.edge_index(row[4]);
    rec.inserted = parse_opt_tick(row[5], where);
    rec.arrived = parse_opt_tick(row[6], where);
    rec.route_taken = taken[rec.id];
    run.vehicles.push_back(std::move(rec));
  }
  return run;
}

}  // namespace sybilsim
