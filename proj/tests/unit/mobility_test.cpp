#include <cmath>
#include <map>
#include <memory>

#include <gtest/gtest.h>

#include "sybilsim/mobility.hpp"
#include "test_util.hpp"

using namespace sybilsim;
using sybilsim::testing::E;
using sybilsim::testing::make_net;
using sybilsim::testing::share;

namespace {

Vehicle make_vehicle(const RoadNetwork& net, std::string id, std::vector<std::string> route,
                     Role role = Role::kNonUser) {
  Vehicle v;
  v.id = std::move(id);
  for (const auto& e : route) v.route.push_back(net.edge_index(e));
  v.origin = v.route.front();
  v.destination = v.route.back();
  v.role = role;
  return v;
}

}  // namespace

TEST(SimConfig, Validation) {
  SimConfig c;
  EXPECT_NO_THROW(c.validate());
  c.dt = 0.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = SimConfig{};
  c.min_gap = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Roles, RoundTrip) {
  for (Role r : {Role::kNonUser, Role::kUser, Role::kSybil}) EXPECT_EQ(parse_role(to_string(r)), r);
  EXPECT_THROW(parse_role("pedestrian"), std::invalid_argument);
}

TEST(Insert, EmptyEdgeLaneZeroAtRest) {
  auto net = share(make_net({{"A", "B", 100, 10, 2}}));
  SimState s(net, {});
  ASSERT_TRUE(s.insert_vehicle(make_vehicle(*net, "v", {"AB"})));
  const Vehicle* v = s.find("v");
  ASSERT_NE(v, nullptr);
  EXPECT_EQ(v->lane, 0);
  EXPECT_DOUBLE_EQ(v->position, 0.0);
  EXPECT_DOUBLE_EQ(v->speed, 0.0);
}

TEST(Insert, StoppedVehicleAtFiveBlocksEntry) {
  // Leader front 5 m ahead of the entry point: 5 < 7.5 headway.
  auto net = share(make_net({{"A", "B", 100, 10, 1}}));
  SimState s(net, {});
  Vehicle leader = make_vehicle(*net, "leader", {"AB"});
  leader.max_speed_cap = 5.0;
  leader.speed = 5.0;
  ASSERT_TRUE(s.insert_vehicle(leader));
  s.step();
  ASSERT_DOUBLE_EQ(s.find("leader")->position, 5.0);
  EXPECT_FALSE(s.insert_vehicle(make_vehicle(*net, "f", {"AB"})));
  s.step();  // leader front at 10 >= 7.5
  EXPECT_DOUBLE_EQ(s.find("leader")->position, 10.0);
  EXPECT_TRUE(s.insert_vehicle(make_vehicle(*net, "f", {"AB"})));
}

TEST(Insert, LeastOccupiedAdmissibleLane) {
  auto net = share(make_net({{"A", "B", 100, 10, 2}}));
  SimState s(net, {});
  ASSERT_TRUE(s.insert_vehicle_on_lane(make_vehicle(*net, "block", {"AB"}), 0));
  ASSERT_TRUE(s.insert_vehicle(make_vehicle(*net, "v", {"AB"})));
  EXPECT_EQ(s.find("v")->lane, 1);
  EXPECT_FALSE(s.insert_vehicle(make_vehicle(*net, "w", {"AB"})));
}

TEST(Insert, Errors) {
  auto net = share(make_net({{"A", "B"}, {"B", "C"}, {"C", "D"}}));
  SimState s(net, {});
  ASSERT_TRUE(s.insert_vehicle(make_vehicle(*net, "v", {"AB", "BC"})));
  EXPECT_THROW(s.insert_vehicle(make_vehicle(*net, "v", {"CD"})), std::invalid_argument);
  EXPECT_THROW(s.insert_vehicle(make_vehicle(*net, "gap", {"AB", "CD"})), std::invalid_argument);
  Vehicle bad = make_vehicle(*net, "bad", {"AB"});
  bad.origin = 99;
  bad.route = {99};
  bad.destination = 99;
  EXPECT_THROW(s.insert_vehicle(bad), std::invalid_argument);
}

TEST(Step, LoneVehicleAcceleration) {
  auto net = share(make_net({{"A", "B", 1000, 10, 1}}));
  SimState s(net, {});
  ASSERT_TRUE(s.insert_vehicle(make_vehicle(*net, "v", {"AB"})));
  const double expected[] = {2.6, 5.2, 7.8, 10.0, 10.0};
  for (double want : expected) {
    s.step();
    EXPECT_NEAR(s.find("v")->speed, want, 1e-12);
  }
  EXPECT_NEAR(s.find("v")->position, 2.6 + 5.2 + 7.8 + 10 + 10, 1e-9);
}

namespace {

// AB (length ab_len) -> BC (one 7.5 m slot, occupied) -> CD (entry held by a
// crawling vehicle). A vehicle driving AB halts at its end.
std::shared_ptr<const RoadNetwork> blocked_corridor(SimState*& out, double ab_len,
                                                    std::unique_ptr<SimState>& holder) {
  auto net = share(make_net({{"A", "B", ab_len, 10, 1}, {"B", "C", 7.5, 10, 1},
                             {"C", "D", 1000, 10, 1}}));
  holder = std::make_unique<SimState>(net, SimConfig{});
  Vehicle parked = make_vehicle(*net, "p0", {"CD"});
  parked.max_speed_cap = 1e-9;
  EXPECT_TRUE(holder->insert_vehicle(parked));
  EXPECT_TRUE(holder->insert_vehicle(make_vehicle(*net, "p1", {"BC", "CD"})));
  out = holder.get();
  return net;
}

}  // namespace

TEST(Step, FollowerClosesOnStoppedLeader) {
  std::unique_ptr<SimState> holder;
  SimState* s = nullptr;
  auto net = blocked_corridor(s, 15.0, holder);
  ASSERT_TRUE(s->insert_vehicle(make_vehicle(*net, "lead", {"AB", "BC"})));
  for (int i = 0; i < 10; ++i) s->step();
  ASSERT_DOUBLE_EQ(s->find("lead")->position, 15.0);
  ASSERT_DOUBLE_EQ(s->find("lead")->speed, 0.0);
  // Leader rear at 10: gap 10 - x, v_safe = gap - 2.5.
  ASSERT_TRUE(s->insert_vehicle(make_vehicle(*net, "f", {"AB", "BC"})));
  s->step();
  EXPECT_NEAR(s->find("f")->speed, 2.6, 1e-12);
  s->step();
  EXPECT_NEAR(s->find("f")->speed, 4.9, 1e-12);
  EXPECT_NEAR(s->find("f")->position, 7.5, 1e-12);
  s->step();
  EXPECT_DOUBLE_EQ(s->find("f")->speed, 0.0);
  EXPECT_NEAR(s->find("lead")->position - 5.0 - s->find("f")->position, 2.5, 1e-12);
  EXPECT_EQ(s->stats().gap_violations, 0u);
}

TEST(Step, BlockedByFullDownstreamEdge) {
  std::unique_ptr<SimState> holder;
  SimState* ps = nullptr;
  auto net = blocked_corridor(ps, 50.0, holder);
  SimState& s = *ps;
  ASSERT_TRUE(s.insert_vehicle(make_vehicle(*net, "v", {"AB", "BC"})));
  for (int i = 0; i < 40; ++i) s.step();
  const Vehicle* v = s.find("v");
  ASSERT_NE(v, nullptr);
  EXPECT_EQ(v->current_edge(), net->edge_index("AB"));
  EXPECT_DOUBLE_EQ(v->position, 50.0);
  // The AB trace event stays open.
  bool open = false;
  for (const auto& ev : s.trace()) {
    if (ev.vehicle_id == "v") open = !ev.exit_time.has_value();
  }
  EXPECT_TRUE(open);
}

TEST(Step, ArrivalRemovesVehicle) {
  auto net = share(make_net({{"A", "B", 100, 10, 1}}));
  SimState s(net, {});
  ASSERT_TRUE(s.insert_vehicle(make_vehicle(*net, "v", {"AB"})));
  // 25.6 m after 4 steps, then 10 m/s: the front passes 100 m at step 12.
  int steps = 0;
  while (s.active_count() > 0) {
    s.step();
    ++steps;
  }
  EXPECT_EQ(steps, 12);
  EXPECT_EQ(s.arrivals().at("v"), 12);
  ASSERT_EQ(s.trace().size(), 1u);
  EXPECT_EQ(s.trace()[0].entry_time, 0);
  EXPECT_EQ(*s.trace()[0].exit_time, 12);
  EXPECT_TRUE(s.conserved());
}

TEST(Step, TravelTimeClosedForm) {
  // 100 m at 10 m/s: 10 m/s is reached after ceil(10/2.6) = 4 steps covering
  // 25.6 m; the remaining 74.4 m take ceil(7.44) = 8 steps.
  auto net = share(make_net({{"A", "B", 100, 10, 1}}));
  SimState s(net, {});
  ASSERT_TRUE(s.insert_vehicle(make_vehicle(*net, "v", {"AB"})));
  double pos = 0.0, speed = 0.0;
  Tick t = 0;
  while (pos < 100.0) {
    speed = std::min(speed + 2.6, 10.0);
    pos += speed;
    ++t;
  }
  while (s.active_count() > 0) s.step();
  EXPECT_EQ(s.arrivals().at("v"), t);
  EXPECT_EQ(t, 12);
  EXPECT_GE(static_cast<double>(t), 10.0);
  EXPECT_LE(static_cast<double>(t), 10.0 + 1.0 + 2.0);
}

TEST(Step, EdgeTransitionCarriesOverflow) {
  auto net = share(make_net({{"A", "B", 10, 10, 1}, {"B", "C", 100, 10, 1}}));
  SimState s(net, {});
  ASSERT_TRUE(s.insert_vehicle(make_vehicle(*net, "v", {"AB", "BC"})));
  s.step();  // 2.6
  s.step();  // 7.8
  s.step();  // 15.6 -> 5.6 on BC
  const Vehicle* v = s.find("v");
  EXPECT_EQ(v->current_edge(), net->edge_index("BC"));
  EXPECT_NEAR(v->position, 5.6, 1e-9);
  ASSERT_EQ(s.trace().size(), 2u);
  EXPECT_EQ(*s.trace()[0].exit_time, 3);
  EXPECT_EQ(s.trace()[1].entry_time, 3);
}

TEST(Reports, OnlyUsers) {
  auto net = share(make_net({{"A", "B", 1000, 10, 3}}));
  SimState s(net, {});
  for (int i = 0; i < 3; ++i) {
    ASSERT_TRUE(s.insert_vehicle_on_lane(make_vehicle(*net, "u" + std::to_string(i), {"AB"}, Role::kUser), i));
  }
  s.step();
  s.step();
  s.step();
  s.step();
  ASSERT_TRUE(s.insert_vehicle(make_vehicle(*net, "n0", {"AB"})));
  s.step();
  s.step();
  s.step();
  s.step();
  ASSERT_TRUE(s.insert_vehicle(make_vehicle(*net, "n1", {"AB"})));
  const auto reports = s.emit_reports();
  ASSERT_EQ(reports.size(), 3u);
  EXPECT_EQ(reports[0].vehicle_id, "u0");
  EXPECT_EQ(reports[0].edge_id, "AB");
  EXPECT_EQ(reports[0].t, 8);
  EXPECT_DOUBLE_EQ(reports[0].speed, 10.0);
}

TEST(Reports, FieldCopyAndArrivalBoundary) {
  auto net = share(make_net({{"E0", "E1", 100, 10, 1, "E"}}));
  SimState s(net, {}, 39);
  ASSERT_TRUE(s.insert_vehicle(make_vehicle(*net, "u", {"E"}, Role::kUser)));
  s.step();
  s.step();
  s.step();  // t=42, speed 7.8
  const auto r = s.emit_reports();
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0], (Report{"u", "E", r[0].speed, 42}));
  EXPECT_NEAR(r[0].speed, 7.8, 1e-12);
  while (s.active_count() > 0) s.step();
  EXPECT_TRUE(s.emit_reports().empty());
}

TEST(Demand, DeparturesInsertedWhenDueAndRetried) {
  auto net = share(make_net({{"A", "B", 100, 10, 1}}));
  SimState s(net, {});
  const EdgeIdx ab = net->edge_index("AB");
  s.add_demand({Trip{"b", 0, ab, ab, Role::kNonUser}, Trip{"a", 0, ab, ab, Role::kNonUser},
                Trip{"c", 5, ab, ab, Role::kNonUser}});
  s.insert_departures();
  EXPECT_EQ(s.active_count(), 1u);
  EXPECT_NE(s.find("a"), nullptr);  // (depart, id) order
  EXPECT_EQ(s.pending_count(), 2u);
  EXPECT_EQ(s.stats().blocked_insertions, 1u);
  while (s.pending_count() > 0) s.step();
  EXPECT_GE(s.insertions().at("c"), 5);
  while (s.active_count() > 0) s.step();
  EXPECT_EQ(s.stats().arrived, 3u);
  EXPECT_EQ(s.stats().gap_violations, 0u);
  EXPECT_TRUE(s.conserved());
}

TEST(Demand, UnroutableTripsCounted) {
  auto net = share(make_net({{"A", "B"}, {"C", "D"}}));
  SimState s(net, {});
  s.add_demand({Trip{"x", 0, net->edge_index("AB"), net->edge_index("CD"), Role::kNonUser}});
  s.insert_departures();
  EXPECT_EQ(s.stats().unroutable, 1u);
  EXPECT_EQ(s.active_count(), 0u);
}

TEST(Route, SuffixReplacement) {
  auto net = share(sybilsim::testing::diamond());
  SimState s(net, {});
  ASSERT_TRUE(s.insert_vehicle(make_vehicle(*net, "v", {"SA", "AB", "BD", "DT"}, Role::kUser)));
  s.replace_route_suffix("v", {net->edge_index("AC"), net->edge_index("CD"), net->edge_index("DT")});
  EXPECT_EQ(edge_ids(*net, s.find("v")->route),
            (std::vector<std::string>{"SA", "AC", "CD", "DT"}));
  EXPECT_THROW(s.replace_route_suffix("v", {net->edge_index("BD")}), std::invalid_argument);
  EXPECT_THROW(s.replace_route_suffix("v", {net->edge_index("AB")}), std::invalid_argument);
  EXPECT_THROW(s.replace_route_suffix("ghost", {}), std::invalid_argument);
}

TEST(Invariants, CongestedGridKeepsHeadwayAndConservation) {
  auto net = share(generate_grid(4, 4, 60, 12, 1));
  SimState s(net, {});
  std::vector<Trip> trips;
  for (int i = 0; i < 300; ++i) {
    const EdgeIdx o = static_cast<EdgeIdx>((i * 7) % net->edge_count());
    const EdgeIdx d = static_cast<EdgeIdx>((i * 13 + 5) % net->edge_count());
    if (o == d) continue;
    char id[16];
    std::snprintf(id, sizeof(id), "v%03d", i);
    trips.push_back(Trip{id, i / 3, o, d, Role::kNonUser});
  }
  s.add_demand(trips);
  s.insert_departures();
  for (int i = 0; i < 5000 && (s.active_count() > 0 || s.pending_count() > 0); ++i) {
    s.step();
    ASSERT_TRUE(s.conserved());
  }
  EXPECT_EQ(s.stats().gap_violations, 0u);
  EXPECT_EQ(s.stats().speed_violations, 0u);
  EXPECT_EQ(s.active_count(), 0u);
  // Per-vehicle trace events are contiguous along the route and ordered.
  std::map<std::string, Tick> last_exit;
  for (const auto& ev : s.trace()) {
    ASSERT_TRUE(ev.exit_time);
    EXPECT_LT(ev.entry_time, *ev.exit_time);
    if (auto it = last_exit.find(ev.vehicle_id); it != last_exit.end()) {
      EXPECT_EQ(it->second, ev.entry_time);
    }
    last_exit[ev.vehicle_id] = *ev.exit_time;
  }
}

TEST(Invariants, DeterministicTraces) {
  auto run = [] {
    auto net = share(generate_grid(3, 3, 80, 10, 1));
    SimState s(net, {});
    std::vector<Trip> trips;
    for (int i = 0; i < 60; ++i) {
      trips.push_back(Trip{"v" + std::to_string(100 + i), i % 20,
                           static_cast<EdgeIdx>(i % 24), static_cast<EdgeIdx>((i * 5 + 3) % 24),
                           Role::kNonUser});
    }
    s.add_demand(trips);
    s.insert_departures();
    while (s.active_count() > 0 || s.pending_count() > 0) s.step();
    return s.trace();
  };
  const auto a = run();
  const auto b = run();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].vehicle_id, b[i].vehicle_id);
    EXPECT_EQ(a[i].edge, b[i].edge);
    EXPECT_EQ(a[i].entry_time, b[i].entry_time);
    EXPECT_EQ(a[i].exit_time, b[i].exit_time);
  }
}
