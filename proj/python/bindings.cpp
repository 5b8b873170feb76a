#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstdio>
#include <map>
#include <set>

#include "sybilsim/engine.hpp"
#include "sybilsim/metrics.hpp"
#include "sybilsim/routing.hpp"
#include "sybilsim/scenario.hpp"
#include "sybilsim/server.hpp"
#include "sybilsim/strength.hpp"

namespace py = pybind11;
using namespace sybilsim;

namespace {

using NetPtr = std::shared_ptr<RoadNetwork>;

py::object json_loads(const std::string& text) {
  return py::module_::import("json").attr("loads")(text);
}

EdgeTimes times_or_free_flow(const RoadNetwork& net, const std::optional<std::vector<double>>& t) {
  if (!t) return net.free_flow_times();
  if (t->size() != net.edge_count()) throw std::invalid_argument("times must have one entry per edge");
  return *t;
}

// Demand crosses the boundary as dicts keyed like the demand file.
std::vector<Trip> to_trips(const RoadNetwork& net, const py::list& demand) {
  std::vector<Trip> out;
  for (const auto& item : demand) {
    const auto d = item.cast<py::dict>();
    Trip t;
    t.id = d["id"].cast<std::string>();
    t.depart = d["depart"].cast<Tick>();
    t.origin = net.edge_index(d["origin"].cast<std::string>());
    t.destination = net.edge_index(d["destination"].cast<std::string>());
    t.role = d.contains("role") ? parse_role(d["role"].cast<std::string>()) : Role::kNonUser;
    if (t.role == Role::kSybil) throw std::invalid_argument("demand cannot contain sybils");
    out.push_back(std::move(t));
  }
  return out;
}

py::list from_trips(const RoadNetwork& net, const std::vector<Trip>& trips) {
  py::list out;
  for (const auto& t : trips) {
    py::dict d;
    d["id"] = t.id;
    d["depart"] = t.depart;
    d["origin"] = net.edge(t.origin).id;
    d["destination"] = net.edge(t.destination).id;
    d["role"] = std::string(to_string(t.role));
    out.append(d);
  }
  return out;
}

struct PyRun {
  NetPtr net;
  RunArtifacts run;
};

py::dict stats_dict(const SimStats& s) {
  py::dict d;
  d["inserted"] = s.inserted;
  d["arrived"] = s.arrived;
  d["gap_violations"] = s.gap_violations;
  d["speed_violations"] = s.speed_violations;
  d["blocked_insertions"] = s.blocked_insertions;
  d["unroutable"] = s.unroutable;
  return d;
}

}  // namespace

PYBIND11_MODULE(_sybilsim, m) {
  m.doc() = "Sybil attack simulation against a crowd-sensed navigation service";

  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<NetworkError>(m, "NetworkError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  // -- network ---------------------------------------------------------------
  py::class_<RoadNetwork, NetPtr>(m, "RoadNetwork")
      .def_property_readonly("node_count", &RoadNetwork::node_count)
      .def_property_readonly("edge_count", &RoadNetwork::edge_count)
      .def("node_ids", [](const RoadNetwork& n) {
        std::vector<std::string> out;
        for (const auto& node : n.nodes()) out.push_back(node.id);
        return out;
      })
      .def("edge_ids", [](const RoadNetwork& n) {
        std::vector<std::string> out;
        for (const auto& e : n.edges()) out.push_back(e.id);
        return out;
      })
      .def("edge", [](const RoadNetwork& n, const std::string& id) {
        const Edge& e = n.edge(n.edge_index(id));
        py::dict d;
        d["id"] = e.id;
        d["from"] = n.node(e.from).id;
        d["to"] = n.node(e.to).id;
        d["length"] = e.length;
        d["lanes"] = e.lanes;
        d["speed_limit"] = e.speed_limit;
        return d;
      })
      .def("free_flow_times", &RoadNetwork::free_flow_times)
      .def("to_json", [](const RoadNetwork& n) { return network_to_json(n); })
      .def("save", [](const RoadNetwork& n, const std::filesystem::path& p) { save_network(n, p); })
      .def("__repr__", [](const RoadNetwork& n) {
        return "<RoadNetwork " + std::to_string(n.node_count()) + " nodes, " +
               std::to_string(n.edge_count()) + " edges>";
      });

  m.def("load_network", [](const std::filesystem::path& p) {
    return std::make_shared<RoadNetwork>(load_network(p));
  });
  m.def("parse_network", [](const std::string& text) {
    return std::make_shared<RoadNetwork>(parse_network(text));
  });
  m.def("generate_grid",
        [](int rows, int cols, double edge_length, double speed_limit, int lanes,
           int arterial_every) {
          GridSpec g;
          g.rows = rows;
          g.cols = cols;
          g.edge_length = edge_length;
          g.speed_limit = speed_limit;
          g.lanes = lanes;
          g.arterial_every = arterial_every;
          return std::make_shared<RoadNetwork>(generate_grid_network(g));
        },
        py::arg("rows"), py::arg("cols"), py::arg("edge_length") = 200.0,
        py::arg("speed_limit") = 13.89, py::arg("lanes") = 1, py::arg("arterial_every") = 0);

  // -- routing ---------------------------------------------------------------
  m.def("shortest_path",
        [](const RoadNetwork& net, const std::string& from, const std::string& to,
           const std::optional<std::vector<double>>& times) -> py::object {
          const auto t = times_or_free_flow(net, times);
          const auto r = shortest_path(net, t, net.node_index(from), net.node_index(to));
          if (!r) return py::none();
          return py::make_tuple(edge_ids(net, r->edges), r->total_expected_time);
        },
        py::arg("network"), py::arg("source"), py::arg("target"), py::arg("times") = py::none(),
        "Edge ids and total time of the shortest path, or None when unreachable.");

  m.def("betweenness_centrality",
        [](const RoadNetwork& net, const std::optional<std::vector<double>>& times,
           unsigned workers) {
          const auto t = times_or_free_flow(net, times);
          CentralityScores s;
          {
            py::gil_scoped_release release;
            s = betweenness_centrality(net, t, workers);
          }
          std::map<std::string, double> nodes, edges;
          for (NodeIdx v = 0; v < net.node_count(); ++v) nodes[net.node(v).id] = s.node_bc[v];
          for (EdgeIdx e = 0; e < net.edge_count(); ++e) edges[net.edge(e).id] = s.edge_bc[e];
          return py::make_tuple(nodes, edges);
        },
        py::arg("network"), py::arg("times") = py::none(), py::arg("workers") = 1);

  m.def("select_targets",
        [](const RoadNetwork& net, std::size_t k, double max_detour_factor,
           std::size_t od_samples) {
          const auto t = net.free_flow_times();
          TargetSelectionOptions opts{max_detour_factor, od_samples};
          const auto picks = select_targets(net, t, betweenness_centrality(net, t), k, opts);
          py::list out;
          for (const auto& c : picks) {
            py::dict d;
            d["edge_id"] = net.edge(c.edge).id;
            d["edge_bc"] = c.edge_bc;
            d["median_detour"] = c.median_detour;
            d["sampled_pairs"] = c.sampled_pairs;
            out.append(d);
          }
          return out;
        },
        py::arg("network"), py::arg("k"), py::arg("max_detour_factor") = 3.0,
        py::arg("od_samples") = 64);

  // -- server ----------------------------------------------------------------
  py::class_<EdgeSpeedWindow>(m, "EdgeSpeedWindow")
      .def(py::init<std::size_t, Tick>(), py::arg("edge_count"), py::arg("w_size") = 300)
      .def_property_readonly("now", &EdgeSpeedWindow::now)
      .def("advance_to", &EdgeSpeedWindow::advance_to)
      .def("ingest",
           [](EdgeSpeedWindow& w, EdgeIdx edge, const std::string& reporter, double speed,
              Tick t) {
             switch (w.ingest(edge, reporter, speed, t)) {
               case IngestOutcome::kAccepted: return "accepted";
               case IngestOutcome::kResampled: return "resampled";
               case IngestOutcome::kStale: return "stale";
             }
             return "accepted";
           })
      .def("mean_of_cell_means", &EdgeSpeedWindow::mean_of_cell_means)
      .def("sample_count", &EdgeSpeedWindow::sample_count)
      .def_property_readonly("dropped_stale", &EdgeSpeedWindow::dropped_stale);

  // -- attack ----------------------------------------------------------------
  py::class_<AttackSpec>(m, "AttackSpec")
      .def(py::init([](std::vector<std::string> targets, Tick start, Tick duration, double speed,
                       std::optional<std::size_t> max_sybils,
                       std::optional<std::size_t> max_active_per_target) {
             AttackSpec s;
             s.targets = std::move(targets);
             s.start = start;
             s.duration = duration;
             s.sybil_speed = speed;
             s.max_sybils = max_sybils;
             s.max_active_per_target = max_active_per_target;
             return s;
           }),
           py::arg("targets"), py::arg("start") = 0, py::arg("duration") = 0,
           py::arg("sybil_speed") = 0.5, py::arg("max_sybils") = py::none(),
           py::arg("max_active_per_target") = py::none())
      .def_readwrite("targets", &AttackSpec::targets)
      .def_readwrite("start", &AttackSpec::start)
      .def_readwrite("duration", &AttackSpec::duration)
      .def_readwrite("sybil_speed", &AttackSpec::sybil_speed)
      .def_readwrite("max_sybils", &AttackSpec::max_sybils)
      .def_readwrite("max_active_per_target", &AttackSpec::max_active_per_target)
      .def("to_json", [](const AttackSpec& s) { return attack_spec_to_json(s); });

  // -- runs ------------------------------------------------------------------
  py::class_<PyRun>(m, "RunArtifacts")
      .def_property_readonly("run_id", [](const PyRun& r) { return r.run.run_id; })
      .def_property_readonly("end_time", [](const PyRun& r) { return r.run.end_time; })
      .def_property_readonly("unfinished", [](const PyRun& r) { return r.run.unfinished; })
      .def_property_readonly("conserved", [](const PyRun& r) { return r.run.conserved; })
      .def_property_readonly("stats", [](const PyRun& r) { return stats_dict(r.run.stats); })
      .def_property_readonly("active_users", [](const PyRun& r) { return r.run.active_users; })
      .def_property_readonly("sybils",
                             [](const PyRun& r) -> py::object {
                               if (!r.run.sybils) return py::none();
                               py::dict d;
                               d["total_spawned"] = r.run.sybils->total_spawned;
                               d["max_concurrent"] = r.run.sybils->max_concurrent;
                               d["injected_reports"] = r.run.sybils->injected_reports;
                               return d;
                             })
      .def("traces",
           [](const PyRun& r) {
             py::list out;
             for (const auto& ev : r.run.traces) {
               out.append(py::make_tuple(ev.vehicle_id, r.net->edge(ev.edge).id, ev.entry_time,
                                         ev.exit_time ? py::cast(*ev.exit_time) : py::none()));
             }
             return out;
           },
           "(vehicle_id, edge_id, entry_time, exit_time or None), sorted by vehicle and time.")
      .def("vehicles",
           [](const PyRun& r) {
             py::list out;
             for (const auto& v : r.run.vehicles) {
               py::dict d;
               d["id"] = v.id;
               d["role"] = std::string(to_string(v.role));
               d["depart"] = v.depart;
               d["inserted"] = v.inserted ? py::cast(*v.inserted) : py::none();
               d["arrived"] = v.arrived ? py::cast(*v.arrived) : py::none();
               d["route"] = edge_ids(*r.net, v.route_taken);
               out.append(d);
             }
             return out;
           })
      .def("write", [](const PyRun& r, const std::filesystem::path& dir) {
        write_run(r.run, *r.net, dir);
      });

  m.def("run_simulation",
        [](NetPtr net, const py::list& demand, const AttackSpec* attack, Tick w_size,
           Tick w_slide, Tick horizon, std::uint64_t seed, bool record_estimates,
           std::optional<std::set<std::string>> routed_users) {
          const auto trips = to_trips(*net, demand);
          RunOptions o;
          o.run_id = attack && attack->duration > 0 ? "attack" : "baseline";
          o.window = WindowConfig{w_size, w_slide};
          o.horizon = horizon;
          o.sim.seed = seed;
          o.record_estimates = record_estimates;
          o.routed_users = std::move(routed_users);
          PyRun out{net, {}};
          py::gil_scoped_release release;
          out.run = run_simulation(net, trips, o, attack);
          return out;
        },
        py::arg("network"), py::arg("demand"), py::arg("attack") = nullptr,
        py::arg("w_size") = 300, py::arg("w_slide") = 30, py::arg("horizon") = 6 * 3600,
        py::arg("seed") = 0, py::arg("record_estimates") = false,
        py::arg("routed_users") = py::none());

  m.def("compute_impact",
        [](const PyRun& baseline, const PyRun& attack_run, const AttackSpec& spec) {
          return json_loads(impact_to_json(compute_impact(*baseline.net, baseline.run,
                                                          attack_run.run, spec)));
        },
        py::arg("baseline"), py::arg("attack_run"), py::arg("attack"));

  m.def("minimal_strength_search",
        [](NetPtr net, const py::dict& victim, std::vector<std::string> targets,
           const py::list& background, std::vector<std::size_t> counts,
           std::vector<double> speeds, Tick attack_start, Tick attack_duration) {
          VictimExperiment x;
          x.network = net;
          py::list one;
          one.append(victim);
          x.victim = to_trips(*net, one).front();
          x.background = to_trips(*net, background);
          x.targets = std::move(targets);
          x.attack_start = attack_start;
          x.attack_duration = attack_duration;
          StrengthSearchResult r;
          {
            py::gil_scoped_release release;
            r = minimal_strength_search(x, counts, speeds);
          }
          py::dict d;
          d["counts"] = r.counts;
          d["speeds"] = r.speeds;
          d["success"] = r.success;
          d["min_count"] = r.min_count ? py::cast(*r.min_count) : py::none();
          d["max_speed"] = r.max_speed ? py::cast(*r.max_speed) : py::none();
          return d;
        },
        py::arg("network"), py::arg("victim"), py::arg("targets"),
        py::arg("background") = py::list(), py::arg("counts") = kDefaultStrengthCounts,
        py::arg("speeds") = kDefaultStrengthSpeeds, py::arg("attack_start") = 0,
        py::arg("attack_duration") = 600);

  // -- scenarios -------------------------------------------------------------
  py::class_<ScenarioConfig>(m, "ScenarioConfig")
      .def_readwrite("seed", &ScenarioConfig::seed)
      .def_readwrite("penetration_rate", &ScenarioConfig::penetration_rate)
      .def_readwrite("horizon", &ScenarioConfig::horizon)
      .def("validate", &ScenarioConfig::validate)
      .def("to_json", [](const ScenarioConfig& c) { return scenario_to_json(c); })
      .def("config_hash", [](const ScenarioConfig& c) {
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx",
                      static_cast<unsigned long long>(fnv1a64(scenario_to_json(c))));
        return std::string(buf);
      });

  m.def("load_scenario", [](const std::filesystem::path& p) { return load_scenario(p); });
  m.def("parse_scenario", [](const std::string& text) { return parse_scenario(text); });
  m.def("build_network",
        [](const ScenarioConfig& c) { return std::make_shared<RoadNetwork>(build_network(c)); });
  m.def("build_demand", [](const ScenarioConfig& c, const RoadNetwork& net) {
    return from_trips(net, build_demand(c, net));
  });
  m.def("run_sweep", [](const ScenarioConfig& c, NetPtr net) {
    SweepResult r;
    {
      py::gil_scoped_release release;
      r = run_sweep(c, net);
    }
    py::list cells;
    for (const auto& cell : r.cells) {
      py::dict d;
      d["label"] = cell.cell.label();
      d["group"] = cell.cell.group();
      d["report"] = cell.report ? json_loads(impact_to_json(*cell.report)) : py::none();
      d["error"] = cell.error;
      cells.append(d);
    }
    py::dict out;
    out["cells"] = cells;
    out["summary"] = json_loads(aggregate_to_json(r.summary));
    return out;
  });
}
