// Command-line front end: generate, targets, run, sweep, report.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sybilsim/adversary.hpp"
#include "sybilsim/engine.hpp"
#include "sybilsim/metrics.hpp"
#include "sybilsim/routing.hpp"
#include "sybilsim/scenario.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sybilsim;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool config_required = true) {
  auto* opt = cmd->add_option("--config", c.config, "scenario JSON");
  if (config_required) opt->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "override the config seed");
  cmd->add_option("--out", c.out, "output directory")->required();
}

ScenarioConfig load(const Common& c) {
  ScenarioConfig cfg = load_scenario(c.config);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.sim.seed = *c.seed;
  }
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text << '\n';
}

class Manifest {
 public:
  Manifest(std::string command, const ScenarioConfig* cfg) : command_(std::move(command)) {
    if (cfg != nullptr) {
      config_ = json::parse(scenario_to_json(*cfg));
      seed_ = cfg->seed;
    }
  }
  void add(const std::string& name, const fs::path& rel) { artifacts_[name] = rel.generic_string(); }
  void set_config(json cfg) { config_ = std::move(cfg); }

  void write(const fs::path& out) const {
    const std::string canonical = config_.dump();
    char hash[17];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(canonical)));
    json doc{{"command", command_},
             {"config_hash", hash},
             {"seed", seed_ ? json(*seed_) : json(nullptr)},
             {"artifacts", artifacts_},
             {"config", config_}};
    write_text(out / "manifest.json", doc.dump(2));
  }

 private:
  std::string command_;
  json config_ = json::object();
  std::optional<std::uint64_t> seed_;
  std::map<std::string, std::string> artifacts_;
};

int cmd_generate(const Common& c) {
  const ScenarioConfig cfg = load(c);
  const fs::path out(c.out);
  const RoadNetwork net = build_network(cfg);
  const auto demand = build_demand(cfg, net);
  Manifest m("generate", &cfg);
  save_network(net, out / "network.json");
  m.add("network", "network.json");
  write_text(out / "demand.json", demand_to_json(demand, net));
  m.add("demand", "demand.json");
  m.write(out);
  std::size_t users = 0;
  for (const auto& t : demand) users += t.role == Role::kUser;
  std::cout << "network: " << net.node_count() << " nodes, " << net.edge_count() << " edges\n"
            << "demand: " << demand.size() << " trips, " << users << " nmcs-users\n";
  return 0;
}

int cmd_targets(const Common& c, std::optional<std::size_t> k) {
  ScenarioConfig cfg = load(c);
  if (k) cfg.target_count = *k;
  const fs::path out(c.out);
  const RoadNetwork net = build_network(cfg);
  const auto times = net.free_flow_times();
  const auto scores = betweenness_centrality(net, times);
  const auto targets = select_targets(net, times, scores, cfg.target_count, cfg.target_selection);

  fs::create_directories(out);
  {
    std::ofstream csv(out / "targets.csv", std::ios::binary);
    csv << "rank,edge_id,edge_bc,median_detour\n";
    for (std::size_t i = 0; i < targets.size(); ++i) {
      csv << i + 1 << ',' << net.edge(targets[i].edge).id << ',' << targets[i].edge_bc << ','
          << targets[i].median_detour << '\n';
    }
  }
  {
    std::ofstream csv(out / "centrality.csv", std::ios::binary);
    csv << "edge_id,edge_bc\n";
    for (EdgeIdx e : net.edges_by_id()) csv << net.edge(e).id << ',' << scores.edge_bc[e] << '\n';
  }
  Manifest m("targets", &cfg);
  m.add("targets", "targets.csv");
  m.add("centrality", "centrality.csv");
  m.write(out);
  if (targets.empty()) {
    std::cout << "no viable target: every candidate edge lacks an acceptable detour\n";
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    std::cout << i + 1 << ' ' << net.edge(targets[i].edge).id << " bc=" << targets[i].edge_bc
              << " detour=" << targets[i].median_detour << '\n';
  }
  return 0;
}

int cmd_run(const Common& c, bool baseline, bool estimates) {
  ScenarioConfig cfg = load(c);
  if (baseline) cfg.attack.reset();
  const fs::path out(c.out);
  auto net = std::make_shared<const RoadNetwork>(build_network(cfg));
  const auto demand = build_demand(cfg, *net);
  RunOptions options = run_options(cfg, cfg.attack ? "attack" : "baseline");
  options.record_estimates = estimates;

  Manifest m("run", &cfg);
  save_network(*net, out / "network.json");
  m.add("network", "network.json");
  write_text(out / "demand.json", demand_to_json(demand, *net));
  m.add("demand", "demand.json");

  std::optional<SybilTrace> trace;
  const AttackSpec* attack = nullptr;
  if (cfg.attack && cfg.attack->duration > 0) {
    attack = &*cfg.attack;
    trace = presimulate(*net, *attack, options.sim);
    write_sybil_trace(*trace, out / "sybil" / "reports.csv", out / "sybil" / "summary.json");
    m.add("sybil_reports", "sybil/reports.csv");
    m.add("sybil_summary", "sybil/summary.json");
  }
  const RunArtifacts run =
      run_simulation(net, demand, options, attack, trace ? &*trace : nullptr);
  write_run(run, *net, out / "run");
  m.add("traces", "run/traces.csv");
  m.add("vehicles", "run/vehicles.csv");
  m.add("run", "run/run.json");
  if (!run.estimates.empty()) m.add("estimates", "run/estimates.csv");
  m.write(out);

  std::cout << "run " << run.run_id << ": " << run.stats.inserted << " inserted, "
            << run.stats.arrived << " arrived, " << run.unfinished << " unfinished, end t="
            << run.end_time << '\n';
  if (run.sybils) {
    std::cout << "sybils: " << run.sybils->total_spawned << " spawned, max "
              << run.sybils->max_concurrent << " concurrent\n";
  }
  if (!run.conserved || run.stats.gap_violations > 0) {
    std::cerr << "warning: invariant violations recorded in run.json\n";
  }
  return 0;
}

int cmd_sweep(const Common& c, std::optional<unsigned> jobs) {
  ScenarioConfig cfg = load(c);
  if (jobs) cfg.sweep.jobs = *jobs;
  const fs::path out(c.out);
  auto net = std::make_shared<const RoadNetwork>(build_network(cfg));
  const SweepResult result = run_sweep(cfg, net);
  write_sweep(result, out / "sweep");

  Manifest m("sweep", &cfg);
  save_network(*net, out / "network.json");
  m.add("network", "network.json");
  m.add("cells", "sweep/cells.csv");
  m.add("summary", "sweep/summary.json");
  std::size_t failed = 0;
  for (std::size_t i = 0; i < result.cells.size(); ++i) {
    if (result.cells[i].report) {
      m.add("cell_" + std::to_string(i), fs::path("sweep") / "cells" / std::to_string(i));
    } else {
      ++failed;
      std::cerr << "cell " << i << " (" << result.cells[i].cell.label()
                << ") failed: " << result.cells[i].error << '\n';
    }
  }
  m.write(out);
  std::cout << result.cells.size() << " cells, " << failed << " failed\n";
  for (const auto& row : result.summary.rows) {
    std::cout << row.group << ": did_not_enter=" << row.did_not_enter;
    if (row.median_travel_time_pct) std::cout << " median_tt=" << *row.median_travel_time_pct << '%';
    if (row.mean_sample_ratio) std::cout << " sample_ratio=" << *row.mean_sample_ratio;
    std::cout << '\n';
  }
  return failed == result.cells.size() && failed > 0 ? 1 : 0;
}

int cmd_report(const Common& c, const std::string& baseline_dir, const std::string& attack_dir) {
  std::optional<ScenarioConfig> cfg;
  if (!c.config.empty()) cfg = load(c);
  const fs::path base(baseline_dir);
  const fs::path att(attack_dir);
  const fs::path out(c.out);
  const RoadNetwork net = load_network(base / "network.json");
  const RunArtifacts b = read_run(base / "run", net);
  const RunArtifacts a = read_run(att / "run", net);
  if (b.attack) throw std::runtime_error("baseline run carries an attack");
  if (!a.attack) throw std::runtime_error("attack run carries no attack spec");
  if (a.seed != b.seed) throw std::runtime_error("baseline and attack runs use different seeds");

  const ImpactReport report = compute_impact(net, b, a, *a.attack, "report");
  write_impact(report, out);
  Manifest m("report", cfg ? &*cfg : nullptr);
  if (!cfg) {
    m.set_config({{"baseline", fs::absolute(base).lexically_normal().generic_string()},
                  {"attack", fs::absolute(att).lexically_normal().generic_string()}});
  }
  m.add("impact", "impact.json");
  m.add("vehicles", "vehicles_impact.csv");
  m.add("flow_delta", "flow_delta.csv");
  m.write(out);
  std::cout << "affected " << report.affected.size() << ", did_enter "
            << report.sets.did_enter.size() << ", did_not_enter "
            << report.sets.did_not_enter.size();
  if (report.sample_ratio) {
    std::cout << ", sample_ratio " << *report.sample_ratio;
  } else {
    std::cout << ", sample_ratio n/a (no affected users)";
  }
  std::cout << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sybil attack simulator for crowd-sensed navigation"};
  app.require_subcommand(1);

  Common gen, tgt, run, swp, rep;
  auto* g = app.add_subcommand("generate", "write network and demand files");
  add_common(g, gen);

  auto* t = app.add_subcommand("targets", "rank attack targets by edge betweenness");
  add_common(t, tgt);
  std::optional<std::size_t> k;
  t->add_option("--k", k, "number of targets");

  auto* r = app.add_subcommand("run", "one co-simulation (baseline or attack)");
  add_common(r, run);
  bool baseline = false;
  bool estimates = false;
  r->add_flag("--baseline", baseline, "ignore the attack in the config");
  r->add_flag("--estimates", estimates, "dump the estimate table at every slide");

  auto* s = app.add_subcommand("sweep", "paired baseline/attack runs over a grid");
  add_common(s, swp);
  std::optional<unsigned> jobs;
  s->add_option("--jobs", jobs, "parallel workers (0 = all cores)");

  auto* p = app.add_subcommand("report", "impact metrics for a baseline/attack pair");
  add_common(p, rep, false);
  std::string base_dir, attack_dir;
  p->add_option("--baseline", base_dir, "output dir of a baseline run")
      ->required()
      ->check(CLI::ExistingDirectory);
  p->add_option("--attack", attack_dir, "output dir of an attack run")
      ->required()
      ->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);
  try {
    if (g->parsed()) return cmd_generate(gen);
    if (t->parsed()) return cmd_targets(tgt, k);
    if (r->parsed()) return cmd_run(run, baseline, estimates);
    if (s->parsed()) return cmd_sweep(swp, jobs);
    if (p->parsed()) return cmd_report(rep, base_dir, attack_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
