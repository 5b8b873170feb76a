#include <algorithm>
#include <set>

#include <gtest/gtest.h>

#include "sybilsim/scenario.hpp"

using namespace sybilsim;

namespace {

std::size_t count_users(const std::vector<Trip>& trips) {
  return static_cast<std::size_t>(std::count_if(
      trips.begin(), trips.end(), [](const Trip& t) { return t.role == Role::kUser; }));
}

std::vector<Trip> blank_trips(std::size_t n) {
  std::vector<Trip> trips(n);
  for (std::size_t i = 0; i < n; ++i) trips[i].id = "t" + std::to_string(i);
  return trips;
}

}  // namespace

TEST(Roles, ExactCountAtRate) {
  auto trips = blank_trips(100);
  assign_roles(trips, 0.5, 1);
  EXPECT_EQ(count_users(trips), 50u);
  assign_roles(trips, 1.0, 1);
  EXPECT_EQ(count_users(trips), 100u);
  auto odd = blank_trips(7);
  assign_roles(odd, 0.5, 3);
  EXPECT_EQ(count_users(odd), 4u);  // floor(3.5 + 0.5)
  EXPECT_THROW(assign_roles(trips, 0.0, 1), ConfigError);
  EXPECT_THROW(assign_roles(trips, 1.5, 1), ConfigError);
}

TEST(Roles, DeterministicPerSeed) {
  auto a = blank_trips(200);
  auto b = blank_trips(200);
  auto c = blank_trips(200);
  assign_roles(a, 0.3, 42);
  assign_roles(b, 0.3, 42);
  assign_roles(c, 0.3, 43);
  bool same_ab = true, same_ac = true;
  for (std::size_t i = 0; i < a.size(); ++i) {
    same_ab &= a[i].role == b[i].role;
    same_ac &= a[i].role == c[i].role;
  }
  EXPECT_TRUE(same_ab);
  EXPECT_FALSE(same_ac);
}

TEST(Grid, ArterialsGetTheirLimit) {
  GridSpec g;
  g.rows = 5;
  g.cols = 5;
  g.arterial_every = 2;
  const RoadNetwork net = generate_grid_network(g);
  std::size_t arterial = 0;
  for (const auto& e : net.edges()) {
    if (e.speed_limit == g.arterial_speed_limit) {
      ++arterial;
      EXPECT_EQ(e.lanes, g.arterial_lanes);
    } else {
      EXPECT_EQ(e.speed_limit, g.speed_limit);
    }
  }
  // Rows and columns 0, 2, 4: 3 lines x 4 segments x 2 directions, twice.
  EXPECT_EQ(arterial, 48u);
}

TEST(Demand, SyntheticIsDeterministicAndOrdered) {
  const RoadNetwork net = generate_grid_network(GridSpec{});
  SyntheticDemand spec;
  spec.n_vehicles = 200;
  const auto a = generate_demand(net, spec, 9);
  const auto b = generate_demand(net, spec, 9);
  ASSERT_EQ(a.size(), 200u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].id, b[i].id);
    EXPECT_EQ(a[i].origin, b[i].origin);
    EXPECT_EQ(a[i].depart, b[i].depart);
    EXPECT_NE(a[i].origin, a[i].destination);
    if (i > 0) EXPECT_LE(a[i - 1].depart, a[i].depart);
  }
  EXPECT_EQ(a.front().id, "veh00000");
  // The light profile spreads departures over twice the window.
  EXPECT_GE(a.back().depart, spec.depart_window);
  EXPECT_LT(a.back().depart, 2 * spec.depart_window);
}

TEST(Demand, MorningFlowsNorth) {
  const RoadNetwork net = generate_grid_network(GridSpec{});
  SyntheticDemand spec;
  spec.n_vehicles = 400;
  spec.profile = DemandProfile::kMorning;
  std::size_t north = 0;
  for (const auto& t : generate_demand(net, spec, 5)) {
    if (net.node(net.edge(t.destination).to).y > net.node(net.edge(t.origin).from).y) ++north;
  }
  EXPECT_GT(north, 400u * 6 / 10);
}

TEST(Config, ParsesAndDefaults) {
  const auto c = parse_scenario(R"({
    "seed": 7,
    "network": {"grid": {"rows": 4, "cols": 5}},
    "demand": {"synthetic": {"n_vehicles": 50, "profile": "afternoon"}},
    "penetration_rate": 0.25,
    "attack": {"targets": ["n1_1-n1_2"], "start": 60, "duration": 300, "sybil_speed": 0.5},
    "sweep": {"durations": [300], "profiles": ["morning", "evening"], "max_active_per_target": 4}
  })");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.sim.seed, 7u);
  EXPECT_EQ(c.grid.rows, 4);
  EXPECT_EQ(c.grid.cols, 5);
  EXPECT_EQ(c.synthetic.n_vehicles, 50u);
  EXPECT_EQ(c.synthetic.profile, DemandProfile::kAfternoon);
  EXPECT_DOUBLE_EQ(c.penetration_rate, 0.25);
  ASSERT_TRUE(c.attack);
  EXPECT_EQ(c.attack->duration, 300);
  EXPECT_EQ(c.window.w_size, 300);
  EXPECT_EQ(c.sweep.profiles.size(), 2u);
  EXPECT_EQ(c.sweep.max_active_per_target, 4u);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, StrictKeysAndTypes) {
  EXPECT_THROW(parse_scenario(R"({"sed": 1})"), ConfigError);
  EXPECT_THROW(parse_scenario(R"({"network": {"grid": {"row": 3}}})"), ConfigError);
  EXPECT_THROW(parse_scenario(R"({"seed": "one"})"), ConfigError);
  EXPECT_THROW(parse_scenario(R"({"demand": {"synthetic": {"profile": "noon"}}})"),
               ConfigError);
  EXPECT_THROW(parse_scenario("{"), ConfigError);
  EXPECT_THROW(parse_scenario(R"({"penetration_rate": 0})").validate(), ConfigError);
  EXPECT_THROW(parse_scenario(R"({"window": {"w_size": 10, "w_slide": 30}})").validate(),
               ConfigError);
}

TEST(Config, CanonicalFormRoundTripsAndHashes) {
  const auto c = parse_scenario(R"({"seed": 3, "horizon": 1000})");
  const std::string canon = scenario_to_json(c);
  EXPECT_EQ(scenario_to_json(parse_scenario(canon)), canon);
  // Key order in the input does not matter.
  const auto d = parse_scenario(R"({"horizon": 1000, "seed": 3})");
  EXPECT_EQ(fnv1a64(scenario_to_json(d)), fnv1a64(canon));
  EXPECT_NE(fnv1a64(scenario_to_json(parse_scenario(R"({"seed": 4, "horizon": 1000})"))),
            fnv1a64(canon));
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Sweep, CellsAreCartesianProduct) {
  auto c = parse_scenario(R"({
    "network": {"grid": {"rows": 4, "cols": 4}},
    "sweep": {"targets": [["n1_1-n1_2"], ["n2_1-n2_2"]], "durations": [300, 600, 900],
              "profiles": ["morning", "evening"], "speeds": [0.5, 1.0]}
  })");
  const RoadNetwork net = build_network(c);
  const auto cells = sweep_cells(c, net);
  EXPECT_EQ(cells.size(), 2u * 3u * 2u * 2u);
  std::set<std::string> labels;
  for (const auto& cell : cells) labels.insert(cell.label());
  EXPECT_EQ(labels.size(), cells.size());
  EXPECT_EQ(cells[0].group(), "n1_1-n1_2/300s/morning");
}

TEST(Sweep, AutoTargetsFromSelection) {
  auto c = parse_scenario(R"({
    "network": {"grid": {"rows": 4, "cols": 4}},
    "sweep": {"auto_targets": 2, "durations": [300], "profiles": ["evening"]}
  })");
  const RoadNetwork net = build_network(c);
  const auto cells = sweep_cells(c, net);
  ASSERT_EQ(cells.size(), 2u);
  EXPECT_NE(cells[0].targets, cells[1].targets);
}

TEST(Sweep, SmallRunProducesReports) {
  auto c = parse_scenario(R"({
    "network": {"grid": {"rows": 4, "cols": 4, "edge_length": 150}},
    "demand": {"synthetic": {"n_vehicles": 120, "depart_window": 300}},
    "sweep": {"auto_targets": 1, "durations": [300, 600], "profiles": ["evening"],
              "attack_start": 60, "max_active_per_target": 4, "jobs": 2}
  })");
  auto net = std::make_shared<const RoadNetwork>(build_network(c));
  const auto result = run_sweep(c, net);
  ASSERT_EQ(result.cells.size(), 2u);
  for (const auto& cell : result.cells) {
    ASSERT_TRUE(cell.report) << cell.error;
    EXPECT_LE(cell.report->sybils_max_concurrent, 4u);
  }
  ASSERT_EQ(result.summary.rows.size(), 2u);
}
