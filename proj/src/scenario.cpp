#include "sybilsim/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "csv_util.hpp"

namespace sybilsim {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Networks
// ---------------------------------------------------------------------------

RoadNetwork generate_grid_network(const GridSpec& spec) {
  RoadNetwork base = generate_grid(spec.rows, spec.cols, spec.edge_length, spec.speed_limit,
                                   spec.lanes);
  if (spec.arterial_every <= 0) return base;
  auto line_of = [&](double coord) {
    return static_cast<int>(std::lround(coord / spec.edge_length));
  };
  auto arterial = [&](int line) { return line % spec.arterial_every == 0; };
  std::vector<EdgeSpec> specs = base.edge_specs();
  for (auto& e : specs) {
    const Node& a = base.node(base.node_index(e.from));
    const Node& b = base.node(base.node_index(e.to));
    const bool same_row = a.y == b.y;
    const int line = same_row ? line_of(a.y) : line_of(a.x);
    if (arterial(line)) {
      e.speed_limit = spec.arterial_speed_limit;
      e.lanes = spec.arterial_lanes;
    }
  }
  return RoadNetwork(base.nodes(), specs);
}

// ---------------------------------------------------------------------------
// Demand
// ---------------------------------------------------------------------------

std::string_view to_string(DemandProfile profile) {
  switch (profile) {
    case DemandProfile::kMorning: return "morning";
    case DemandProfile::kAfternoon: return "afternoon";
    case DemandProfile::kEvening: return "evening";
  }
  return "evening";
}

DemandProfile parse_profile(std::string_view text) {
  if (text == "morning") return DemandProfile::kMorning;
  if (text == "afternoon") return DemandProfile::kAfternoon;
  if (text == "evening") return DemandProfile::kEvening;
  throw ConfigError("unknown demand profile '" + std::string(text) +
                    "' (expected morning, afternoon or evening)");
}

namespace {

// Distribution helpers with a fixed algorithm, so draws do not depend on the
// standard library implementation.
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  const std::uint64_t range = n;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % range;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % range);
}

double uniform_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

constexpr std::uint64_t kRoleStream = 0x9e3779b97f4a7c15ULL;

}  // namespace

std::vector<Trip> generate_demand(const RoadNetwork& net, const SyntheticDemand& spec,
                                  std::uint64_t seed) {
  if (spec.depart_window <= 0) throw ConfigError("depart_window must be positive");
  std::mt19937_64 rng(seed);

  double ymin = std::numeric_limits<double>::infinity();
  double ymax = -ymin;
  for (const auto& n : net.nodes()) {
    ymin = std::min(ymin, n.y);
    ymax = std::max(ymax, n.y);
  }
  const double band = (ymax - ymin) / 3.0;
  std::vector<EdgeIdx> all, south, north;
  for (EdgeIdx e : net.edges_by_id()) {
    all.push_back(e);
    const Edge& edge = net.edge(e);
    const double y0 = net.node(edge.from).y;
    const double y1 = net.node(edge.to).y;
    if (std::max(y0, y1) <= ymin + band) south.push_back(e);
    if (std::min(y0, y1) >= ymax - band) north.push_back(e);
  }
  if (all.size() < 2) throw ConfigError("network too small for synthetic demand");

  const auto free_flow = net.free_flow_times();
  const bool light = spec.profile == DemandProfile::kEvening;
  const Tick window = light ? 2 * spec.depart_window : spec.depart_window;

  struct Draft {
    Tick depart;
    std::size_t order;
    EdgeIdx origin;
    EdgeIdx destination;
  };
  std::vector<Draft> drafts;
  drafts.reserve(spec.n_vehicles);
  for (std::size_t i = 0; i < spec.n_vehicles; ++i) {
    const Tick depart = static_cast<Tick>(uniform_index(rng, static_cast<std::size_t>(window)));
    const std::vector<EdgeIdx>* from = &all;
    const std::vector<EdgeIdx>* to = &all;
    if (!light && !south.empty() && !north.empty() &&
        uniform_unit(rng) < spec.directional_share) {
      from = spec.profile == DemandProfile::kMorning ? &south : &north;
      to = spec.profile == DemandProfile::kMorning ? &north : &south;
    }
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      const EdgeIdx o = (*from)[uniform_index(rng, from->size())];
      const EdgeIdx d = (*to)[uniform_index(rng, to->size())];
      if (o == d) continue;
      if (!route_between_edges(net, free_flow, o, d)) continue;
      drafts.push_back(Draft{depart, i, o, d});
      placed = true;
    }
    if (!placed) throw ConfigError("could not sample a connected OD pair");
  }
  std::sort(drafts.begin(), drafts.end(), [](const Draft& a, const Draft& b) {
    if (a.depart != b.depart) return a.depart < b.depart;
    return a.order < b.order;
  });

  std::vector<Trip> trips;
  trips.reserve(drafts.size());
  char name[32];
  for (std::size_t i = 0; i < drafts.size(); ++i) {
    std::snprintf(name, sizeof(name), "veh%05zu", i);
    trips.push_back(Trip{name, drafts[i].depart, drafts[i].origin, drafts[i].destination,
                         Role::kNonUser});
  }
  return trips;
}

void assign_roles(std::vector<Trip>& trips, double penetration_rate, std::uint64_t seed) {
  if (!(penetration_rate > 0.0 && penetration_rate <= 1.0)) {
    throw ConfigError("penetration_rate must be in (0, 1]");
  }
  const std::size_t n = trips.size();
  const auto users = static_cast<std::size_t>(
      std::floor(static_cast<double>(n) * penetration_rate + 0.5));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed ^ kRoleStream);
  for (std::size_t i = 0; i < users && i < n; ++i) {
    std::swap(idx[i], idx[i + uniform_index(rng, n - i)]);
  }
  for (auto& t : trips) t.role = Role::kNonUser;
  for (std::size_t i = 0; i < users && i < n; ++i) trips[idx[i]].role = Role::kUser;
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

void ScenarioConfig::validate() const {
  if (!(penetration_rate > 0.0 && penetration_rate <= 1.0)) {
    throw ConfigError("penetration_rate must be in (0, 1]");
  }
  if (network_path && !std::filesystem::exists(*network_path)) {
    throw ConfigError("network file not found: " + network_path->string());
  }
  if (demand_path && !std::filesystem::exists(*demand_path)) {
    throw ConfigError("demand file not found: " + demand_path->string());
  }
  if (horizon <= 0) throw ConfigError("horizon must be positive");
  if (!(speed_floor > 0.0)) throw ConfigError("speed_floor must be positive");
  if (grid.arterial_every < 0) throw ConfigError("grid.arterial_every must be >= 0");
  if (synthetic.directional_share < 0.0 || synthetic.directional_share > 1.0) {
    throw ConfigError("directional_share must be in [0, 1]");
  }
  for (Tick d : sweep.durations) {
    if (d <= 0) throw ConfigError("sweep durations must be positive");
  }
  for (double s : sweep.speeds) {
    if (!(s > 0.0)) throw ConfigError("sweep speeds must be positive");
  }
  if (sweep.attack_start < 0) throw ConfigError("sweep.attack_start must be >= 0");
  try {
    window.validate();
    sim.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

namespace {

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

template <typename T>
void read_opt(const json& obj, const char* key, std::optional<T>& out, const std::string& where) {
  if (!obj.contains(key) || obj.at(key).is_null()) return;
  T v{};
  read(obj, key, v, where);
  out = v;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

json opt(const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

ScenarioConfig parse_scenario(std::string_view json_text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  check_keys(doc,
             {"seed", "network", "demand", "penetration_rate", "window", "sim", "speed_floor",
              "horizon", "attack", "targets", "sweep"},
             "config");
  ScenarioConfig c;
  read(doc, "seed", c.seed, "config");
  read(doc, "penetration_rate", c.penetration_rate, "config");
  read(doc, "speed_floor", c.speed_floor, "config");
  read(doc, "horizon", c.horizon, "config");

  if (doc.contains("network")) {
    const auto& n = doc["network"];
    check_keys(n, {"path", "grid"}, "network");
    if (n.contains("path")) {
      std::string p;
      read(n, "path", p, "network");
      c.network_path = resolve(base_dir, p);
    }
    if (n.contains("grid")) {
      const auto& g = n["grid"];
      check_keys(g,
                 {"rows", "cols", "edge_length", "speed_limit", "lanes", "arterial_every",
                  "arterial_speed_limit", "arterial_lanes"},
                 "network.grid");
      read(g, "rows", c.grid.rows, "network.grid");
      read(g, "cols", c.grid.cols, "network.grid");
      read(g, "edge_length", c.grid.edge_length, "network.grid");
      read(g, "speed_limit", c.grid.speed_limit, "network.grid");
      read(g, "lanes", c.grid.lanes, "network.grid");
      read(g, "arterial_every", c.grid.arterial_every, "network.grid");
      read(g, "arterial_speed_limit", c.grid.arterial_speed_limit, "network.grid");
      read(g, "arterial_lanes", c.grid.arterial_lanes, "network.grid");
    }
  }
  if (doc.contains("demand")) {
    const auto& d = doc["demand"];
    check_keys(d, {"path", "synthetic"}, "demand");
    if (d.contains("path")) {
      std::string p;
      read(d, "path", p, "demand");
      c.demand_path = resolve(base_dir, p);
    }
    if (d.contains("synthetic")) {
      const auto& s = d["synthetic"];
      check_keys(s, {"n_vehicles", "depart_window", "profile", "directional_share"},
                 "demand.synthetic");
      read(s, "n_vehicles", c.synthetic.n_vehicles, "demand.synthetic");
      read(s, "depart_window", c.synthetic.depart_window, "demand.synthetic");
      read(s, "directional_share", c.synthetic.directional_share, "demand.synthetic");
      if (s.contains("profile")) {
        std::string p;
        read(s, "profile", p, "demand.synthetic");
        c.synthetic.profile = parse_profile(p);
      }
    }
  }
  if (doc.contains("window")) {
    check_keys(doc["window"], {"w_size", "w_slide"}, "window");
    read(doc["window"], "w_size", c.window.w_size, "window");
    read(doc["window"], "w_slide", c.window.w_slide, "window");
  }
  if (doc.contains("sim")) {
    const auto& s = doc["sim"];
    check_keys(s, {"dt", "vehicle_length", "min_gap", "accel"}, "sim");
    read(s, "dt", c.sim.dt, "sim");
    read(s, "vehicle_length", c.sim.vehicle_length, "sim");
    read(s, "min_gap", c.sim.min_gap, "sim");
    read(s, "accel", c.sim.accel, "sim");
  }
  if (doc.contains("attack") && !doc["attack"].is_null()) {
    try {
      c.attack = parse_attack_spec(doc["attack"].dump());
    } catch (const ParseError& e) {
      throw ConfigError(e.what());
    }
  }
  if (doc.contains("targets")) {
    const auto& t = doc["targets"];
    check_keys(t, {"k", "max_detour_factor", "od_samples"}, "targets");
    read(t, "k", c.target_count, "targets");
    read(t, "max_detour_factor", c.target_selection.max_detour_factor, "targets");
    read(t, "od_samples", c.target_selection.od_samples, "targets");
  }
  if (doc.contains("sweep")) {
    const auto& s = doc["sweep"];
    check_keys(s,
               {"targets", "auto_targets", "durations", "profiles", "speeds", "attack_start",
                "max_sybils", "max_active_per_target", "jobs"},
               "sweep");
    read(s, "targets", c.sweep.targets, "sweep");
    read(s, "auto_targets", c.sweep.auto_targets, "sweep");
    read(s, "durations", c.sweep.durations, "sweep");
    read(s, "speeds", c.sweep.speeds, "sweep");
    read(s, "attack_start", c.sweep.attack_start, "sweep");
    read_opt(s, "max_sybils", c.sweep.max_sybils, "sweep");
    read_opt(s, "max_active_per_target", c.sweep.max_active_per_target, "sweep");
    read(s, "jobs", c.sweep.jobs, "sweep");
    if (s.contains("profiles")) {
      std::vector<std::string> names;
      read(s, "profiles", names, "sweep");
      c.sweep.profiles.clear();
      for (const auto& n : names) c.sweep.profiles.push_back(parse_profile(n));
    }
  }
  c.sim.seed = c.seed;
  return c;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path.parent_path());
}

std::string scenario_to_json(const ScenarioConfig& c) {
  json network;
  if (c.network_path) {
    network["path"] = c.network_path->string();
  } else {
    network["grid"] = {{"rows", c.grid.rows},
                       {"cols", c.grid.cols},
                       {"edge_length", c.grid.edge_length},
                       {"speed_limit", c.grid.speed_limit},
                       {"lanes", c.grid.lanes},
                       {"arterial_every", c.grid.arterial_every},
                       {"arterial_speed_limit", c.grid.arterial_speed_limit},
                       {"arterial_lanes", c.grid.arterial_lanes}};
  }
  json demand;
  if (c.demand_path) {
    demand["path"] = c.demand_path->string();
  } else {
    demand["synthetic"] = {{"n_vehicles", c.synthetic.n_vehicles},
                           {"depart_window", c.synthetic.depart_window},
                           {"profile", std::string(to_string(c.synthetic.profile))},
                           {"directional_share", c.synthetic.directional_share}};
  }
  std::vector<std::string> profiles;
  for (auto p : c.sweep.profiles) profiles.emplace_back(to_string(p));
  json doc{{"seed", c.seed},
           {"network", network},
           {"demand", demand},
           {"penetration_rate", c.penetration_rate},
           {"window", {{"w_size", c.window.w_size}, {"w_slide", c.window.w_slide}}},
           {"sim",
            {{"dt", c.sim.dt},
             {"vehicle_length", c.sim.vehicle_length},
             {"min_gap", c.sim.min_gap},
             {"accel", c.sim.accel}}},
           {"speed_floor", c.speed_floor},
           {"horizon", c.horizon},
           {"attack", c.attack ? json::parse(attack_spec_to_json(*c.attack)) : json(nullptr)},
           {"targets",
            {{"k", c.target_count},
             {"max_detour_factor", c.target_selection.max_detour_factor},
             {"od_samples", c.target_selection.od_samples}}},
           {"sweep",
            {{"targets", c.sweep.targets},
             {"auto_targets", c.sweep.auto_targets},
             {"durations", c.sweep.durations},
             {"profiles", profiles},
             {"speeds", c.sweep.speeds},
             {"attack_start", c.sweep.attack_start},
             {"max_sybils", opt(c.sweep.max_sybils)},
             {"max_active_per_target", opt(c.sweep.max_active_per_target)},
             {"jobs", c.sweep.jobs}}}};
  return doc.dump(2);
}

RoadNetwork build_network(const ScenarioConfig& config) {
  if (config.network_path) return load_network(*config.network_path);
  return generate_grid_network(config.grid);
}

std::vector<Trip> build_demand(const ScenarioConfig& config, const RoadNetwork& net,
                               std::optional<DemandProfile> profile) {
  if (config.demand_path) return load_demand(*config.demand_path, net);
  SyntheticDemand spec = config.synthetic;
  if (profile) spec.profile = *profile;
  auto trips = generate_demand(net, spec, config.seed);
  assign_roles(trips, config.penetration_rate, config.seed);
  return trips;
}

RunOptions run_options(const ScenarioConfig& config, std::string run_id) {
  RunOptions o;
  o.run_id = std::move(run_id);
  o.sim = config.sim;
  o.sim.seed = config.seed;
  o.window = config.window;
  o.speed_floor = config.speed_floor;
  o.horizon = config.horizon;
  return o;
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

std::string SweepCell::group() const {
  std::string t;
  for (const auto& id : targets) t += (t.empty() ? "" : "+") + id;
  return t + "/" + std::to_string(duration) + "s/" + std::string(to_string(profile));
}

std::string SweepCell::label() const {
  return group() + "/" + detail::format_double(speed) + "mps";
}

std::vector<SweepCell> sweep_cells(const ScenarioConfig& config, const RoadNetwork& net) {
  std::vector<std::vector<std::string>> targets = config.sweep.targets;
  if (targets.empty()) {
    const auto times = net.free_flow_times();
    const auto scores = betweenness_centrality(net, times);
    for (const auto& cand :
         select_targets(net, times, scores, config.sweep.auto_targets, config.target_selection)) {
      targets.push_back({net.edge(cand.edge).id});
    }
    if (targets.empty()) throw ConfigError("target selection found no viable target");
  }
  std::vector<SweepCell> cells;
  for (const auto& t : targets) {
    for (Tick d : config.sweep.durations) {
      for (DemandProfile p : config.sweep.profiles) {
        for (double s : config.sweep.speeds) cells.push_back(SweepCell{t, d, p, s});
      }
    }
  }
  return cells;
}

namespace {

template <typename Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn&& fn) {
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = static_cast<unsigned>(std::min<std::size_t>(jobs, n));
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < jobs; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

SweepResult run_sweep(const ScenarioConfig& config, std::shared_ptr<const RoadNetwork> network) {
  config.validate();
  const RoadNetwork& net = *network;
  const auto cells = sweep_cells(config, net);

  std::vector<DemandProfile> profiles;
  for (const auto& c : cells) {
    if (std::find(profiles.begin(), profiles.end(), c.profile) == profiles.end()) {
      profiles.push_back(c.profile);
    }
  }
  struct Baseline {
    std::vector<Trip> demand;
    std::optional<RunArtifacts> run;
    std::string error;
  };
  std::vector<Baseline> baselines(profiles.size());
  parallel_for(profiles.size(), config.sweep.jobs, [&](std::size_t i) {
    try {
      baselines[i].demand = build_demand(config, net, profiles[i]);
      baselines[i].run = run_simulation(
          network, baselines[i].demand,
          run_options(config, "baseline/" + std::string(to_string(profiles[i]))));
    } catch (const std::exception& e) {
      baselines[i].error = e.what();
    }
  });

  SweepResult result;
  result.cells.resize(cells.size());
  parallel_for(cells.size(), config.sweep.jobs, [&](std::size_t i) {
    const SweepCell& cell = cells[i];
    SweepCellResult& out = result.cells[i];
    out.cell = cell;
    const auto p = static_cast<std::size_t>(
        std::find(profiles.begin(), profiles.end(), cell.profile) - profiles.begin());
    const Baseline& base = baselines[p];
    if (!base.run) {
      out.error = "baseline failed: " + base.error;
      return;
    }
    try {
      AttackSpec spec;
      spec.targets = cell.targets;
      spec.start = config.sweep.attack_start;
      spec.duration = cell.duration;
      spec.sybil_speed = cell.speed;
      spec.max_sybils = config.sweep.max_sybils;
      spec.max_active_per_target = config.sweep.max_active_per_target;
      const auto attack = run_simulation(network, base.demand,
                                         run_options(config, "attack/" + cell.label()), &spec);
      out.report = compute_impact(net, *base.run, attack, spec, cell.group());
      out.gap_violations = base.run->stats.gap_violations + attack.stats.gap_violations;
      out.conserved = base.run->conserved && attack.conserved;
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  });

  std::vector<ImpactReport> reports;
  for (const auto& c : result.cells) {
    if (c.report) reports.push_back(*c.report);
  }
  result.summary = aggregate(reports);
  return result;
}

void write_sweep(const SweepResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto csv = detail::open_out(dir / "cells.csv");
  csv << "cell,targets,duration,profile,speed,affected,did_enter,did_not_enter,sample_ratio,"
         "median_travel_time_pct,median_time_loss_pct,sybils_spawned,sybils_max_concurrent,"
         "mean_active_users,gap_violations,conserved,error\n";
  auto num = [](const std::optional<double>& v) {
    return v ? detail::format_double(*v) : std::string();
  };
  for (std::size_t i = 0; i < result.cells.size(); ++i) {
    const auto& c = result.cells[i];
    std::string targets;
    for (const auto& t : c.cell.targets) targets += (targets.empty() ? "" : "+") + t;
    csv << i << ',' << targets << ',' << c.cell.duration << ',' << to_string(c.cell.profile)
        << ',' << detail::format_double(c.cell.speed) << ',';
    if (c.report) {
      const auto& r = *c.report;
      std::vector<double> tt, tl;
      for (const auto& v : r.vehicles) {
        if (v.did_enter) continue;
        if (auto p = v.travel_time_pct()) tt.push_back(*p);
        if (auto p = v.time_loss_pct()) tl.push_back(*p);
      }
      csv << r.affected.size() << ',' << r.sets.did_enter.size() << ','
          << r.sets.did_not_enter.size() << ',' << num(r.sample_ratio) << ','
          << num(median(tt)) << ',' << num(median(tl)) << ',' << r.sybils_spawned << ','
          << r.sybils_max_concurrent << ',' << detail::format_double(r.mean_active_users)
          << ',' << c.gap_violations << ',' << (c.conserved ? "true" : "false") << ",\n";
      write_impact(r, dir / "cells" / std::to_string(i));
    } else {
      std::string err = c.error;
      std::replace(err.begin(), err.end(), ',', ';');
      std::replace(err.begin(), err.end(), '\n', ' ');
      csv << ",,,,,,,,,,," << err << '\n';
    }
  }
  auto js = detail::open_out(dir / "summary.json");
  js << aggregate_to_json(result.summary) << '\n';
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : data) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace sybilsim
