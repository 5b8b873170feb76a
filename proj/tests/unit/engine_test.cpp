#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "sybilsim/engine.hpp"
#include "test_util.hpp"

using namespace sybilsim;
using sybilsim::testing::diamond;
using sybilsim::testing::share;

namespace {

std::vector<Trip> grid_demand(const RoadNetwork& net, int n) {
  std::vector<Trip> trips;
  const auto m = static_cast<int>(net.edge_count());
  for (int i = 0; i < n; ++i) {
    const auto o = static_cast<EdgeIdx>((i * 7) % m);
    const auto d = static_cast<EdgeIdx>((i * 11 + 3) % m);
    if (o == d) continue;
    char id[16];
    std::snprintf(id, sizeof(id), "v%03d", i);
    trips.push_back(Trip{id, i * 2, o, d, i % 2 == 0 ? Role::kUser : Role::kNonUser});
  }
  return trips;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(Engine, BaselineIsDeterministic) {
  auto net = share(generate_grid(4, 4, 120, 12, 1));
  const auto demand = grid_demand(*net, 120);
  const auto a = run_simulation(net, demand, {});
  const auto b = run_simulation(net, demand, {});
  ASSERT_EQ(a.traces.size(), b.traces.size());
  for (std::size_t i = 0; i < a.traces.size(); ++i) {
    EXPECT_EQ(a.traces[i].vehicle_id, b.traces[i].vehicle_id);
    EXPECT_EQ(a.traces[i].entry_time, b.traces[i].entry_time);
    EXPECT_EQ(a.traces[i].exit_time, b.traces[i].exit_time);
  }
  EXPECT_TRUE(a.conserved);
  EXPECT_EQ(a.unfinished, 0u);
  EXPECT_EQ(a.stats.gap_violations, 0u);
  EXPECT_EQ(a.vehicles.size(), demand.size());
}

TEST(Engine, ZeroDurationAttackEqualsBaseline) {
  auto net = share(generate_grid(4, 4, 120, 12, 1));
  const auto demand = grid_demand(*net, 100);
  AttackSpec noop;
  noop.targets = {net->edge(0).id};
  noop.start = 0;
  noop.duration = 0;
  const auto base = run_simulation(net, demand, {});
  const auto attacked = run_simulation(net, demand, {}, &noop);
  const auto dir = std::filesystem::temp_directory_path() / "sybilsim_engine_noop";
  write_traces_csv(base, *net, dir / "a.csv");
  write_traces_csv(attacked, *net, dir / "b.csv");
  EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
  EXPECT_FALSE(attacked.sybils);
  std::filesystem::remove_all(dir);
}

TEST(Engine, VictimDetoursAroundPoisonedEdge) {
  auto net = share(diamond());
  const std::vector<Trip> demand{
      Trip{"victim", 0, net->edge_index("SA"), net->edge_index("DT"), Role::kUser}};
  const auto base = run_simulation(net, demand, {});
  EXPECT_EQ(edge_ids(*net, base.vehicle("victim")->route_taken),
            (std::vector<std::string>{"SA", "AB", "BD", "DT"}));

  AttackSpec attack;
  attack.targets = {"AB"};
  attack.start = 0;
  attack.duration = 120;
  attack.sybil_speed = 0.5;
  const auto run = run_simulation(net, demand, {}, &attack);
  EXPECT_EQ(edge_ids(*net, run.vehicle("victim")->route_taken),
            (std::vector<std::string>{"SA", "AC", "CD", "DT"}));
  ASSERT_TRUE(run.sybils);
  EXPECT_GT(run.sybils->total_spawned, 0u);
  EXPECT_GT(run.sybils->injected_reports, 0u);
  EXPECT_TRUE(run.conserved);
}

TEST(Engine, NonUsersIgnoreTheServer) {
  auto net = share(diamond());
  const std::vector<Trip> demand{
      Trip{"n", 0, net->edge_index("SA"), net->edge_index("DT"), Role::kNonUser}};
  AttackSpec attack;
  attack.targets = {"AB"};
  attack.duration = 120;
  const auto run = run_simulation(net, demand, {}, &attack);
  EXPECT_EQ(edge_ids(*net, run.vehicle("n")->route_taken),
            (std::vector<std::string>{"SA", "AB", "BD", "DT"}));
}

TEST(Engine, RoutedUsersRestriction) {
  auto net = share(diamond());
  const std::vector<Trip> demand{
      Trip{"u", 0, net->edge_index("SA"), net->edge_index("DT"), Role::kUser}};
  AttackSpec attack;
  attack.targets = {"AB"};
  attack.duration = 120;
  RunOptions opts;
  opts.routed_users = std::set<std::string>{"someone-else"};
  const auto run = run_simulation(net, demand, opts, &attack);
  EXPECT_EQ(edge_ids(*net, run.vehicle("u")->route_taken),
            (std::vector<std::string>{"SA", "AB", "BD", "DT"}));
}

TEST(Engine, HorizonLeavesTripsUnfinished) {
  auto net = share(diamond());
  const std::vector<Trip> demand{
      Trip{"late", 50, net->edge_index("SA"), net->edge_index("DT"), Role::kUser},
      Trip{"early", 0, net->edge_index("SA"), net->edge_index("DT"), Role::kUser}};
  RunOptions opts;
  opts.horizon = 60;
  const auto run = run_simulation(net, demand, opts);
  EXPECT_EQ(run.unfinished, 1u);
  EXPECT_TRUE(run.vehicle("early")->arrived);
  EXPECT_FALSE(run.vehicle("late")->arrived);
  EXPECT_EQ(run.active_users.size(), static_cast<std::size_t>(run.end_time + 1));
}

TEST(Engine, EstimatesRecordedAtSlides) {
  auto net = share(diamond());
  const std::vector<Trip> demand{
      Trip{"u", 0, net->edge_index("SA"), net->edge_index("DT"), Role::kUser}};
  RunOptions opts;
  opts.record_estimates = true;
  const auto run = run_simulation(net, demand, opts);
  ASSERT_FALSE(run.estimates.empty());
  EXPECT_EQ(run.estimates.size() % net->edge_count(), 0u);
  for (const auto& r : run.estimates) EXPECT_EQ(r.slide_time % 30, 0);
}

TEST(Demand, JsonRoundTripAndErrors) {
  auto net = share(diamond());
  const std::vector<Trip> demand{
      Trip{"a", 0, net->edge_index("SA"), net->edge_index("DT"), Role::kUser},
      Trip{"b", 4, net->edge_index("AB"), net->edge_index("CD"), Role::kNonUser}};
  const auto back = parse_demand(demand_to_json(demand, *net), *net);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].id, "b");
  EXPECT_EQ(back[1].depart, 4);
  EXPECT_EQ(back[1].origin, net->edge_index("AB"));
  EXPECT_EQ(back[0].role, Role::kUser);
  EXPECT_ANY_THROW(parse_demand(
      R"([{"id":"x","depart":0,"origin":"SA","destination":"DT","role":"sybil"}])", *net));
  EXPECT_ANY_THROW(parse_demand(
      R"([{"id":"x","depart":0,"origin":"ZZ","destination":"DT","role":"nmcs-user"}])", *net));
}

TEST(RunFiles, RoundTrip) {
  auto net = share(generate_grid(3, 3, 100, 10, 1));
  const auto demand = grid_demand(*net, 30);
  AttackSpec attack;
  attack.targets = {net->edge(3).id};
  attack.start = 10;
  attack.duration = 60;
  RunOptions opts;
  opts.record_estimates = true;
  const auto run = run_simulation(net, demand, opts, &attack);
  const auto dir = std::filesystem::temp_directory_path() / "sybilsim_run_rt";
  write_run(run, *net, dir);
  const auto back = read_run(dir, *net);
  EXPECT_EQ(back.traces.size(), run.traces.size());
  EXPECT_EQ(back.vehicles.size(), run.vehicles.size());
  for (std::size_t i = 0; i < run.vehicles.size(); ++i) {
    EXPECT_EQ(back.vehicles[i].id, run.vehicles[i].id);
    EXPECT_EQ(back.vehicles[i].arrived, run.vehicles[i].arrived);
    EXPECT_EQ(back.vehicles[i].route_taken, run.vehicles[i].route_taken);
  }
  ASSERT_TRUE(back.attack);
  EXPECT_EQ(back.attack->targets, attack.targets);
  ASSERT_TRUE(back.sybils);
  EXPECT_EQ(back.sybils->total_spawned, run.sybils->total_spawned);
  EXPECT_EQ(back.active_users, run.active_users);
  EXPECT_EQ(back.end_time, run.end_time);
  std::filesystem::remove_all(dir);
}
