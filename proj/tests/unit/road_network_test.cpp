#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "sybilsim/road_network.hpp"

using namespace sybilsim;

namespace {

RoadNetwork two_nodes() {
  return parse_network(R"({
    "nodes": [{"id": "A", "x": 0, "y": 0}, {"id": "B", "x": 100, "y": 0}],
    "edges": [{"id": "AB", "from": "A", "to": "B", "length": 100, "lanes": 1, "speed_limit": 10}]
  })");
}

}  // namespace

TEST(RoadNetwork, SingleEdgeFreeFlowTime) {
  const RoadNetwork net = two_nodes();
  ASSERT_EQ(net.node_count(), 2u);
  ASSERT_EQ(net.edge_count(), 1u);
  EXPECT_DOUBLE_EQ(net.edge(net.edge_index("AB")).free_flow_time(), 10.0);
  EXPECT_EQ(net.out_edges(net.node_index("A")).size(), 1u);
  EXPECT_EQ(net.in_edges(net.node_index("B")).size(), 1u);
  EXPECT_NO_THROW(net.validate());
}

TEST(RoadNetwork, DanglingReferenceRejected) {
  try {
    parse_network(R"({"nodes": [{"id": "A", "x": 0, "y": 0}],
      "edges": [{"id": "AZ", "from": "A", "to": "Z", "length": 1, "lanes": 1, "speed_limit": 1}]})");
    FAIL() << "expected NetworkError";
  } catch (const NetworkError& e) {
    EXPECT_NE(std::string(e.what()).find("'Z'"), std::string::npos);
  }
}

TEST(RoadNetwork, NonPositiveFieldsRejected) {
  const char* bad_length = R"({"nodes": [{"id": "A", "x": 0, "y": 0}, {"id": "B", "x": 0, "y": 0}],
    "edges": [{"id": "AB", "from": "A", "to": "B", "length": 0, "lanes": 1, "speed_limit": 1}]})";
  const char* bad_speed = R"({"nodes": [{"id": "A", "x": 0, "y": 0}, {"id": "B", "x": 0, "y": 0}],
    "edges": [{"id": "AB", "from": "A", "to": "B", "length": 5, "lanes": 1, "speed_limit": -2}]})";
  const char* no_lanes = R"({"nodes": [{"id": "A", "x": 0, "y": 0}, {"id": "B", "x": 0, "y": 0}],
    "edges": [{"id": "AB", "from": "A", "to": "B", "length": 5, "lanes": 0, "speed_limit": 2}]})";
  EXPECT_THROW(parse_network(bad_length), NetworkError);
  EXPECT_THROW(parse_network(bad_speed), NetworkError);
  EXPECT_THROW(parse_network(no_lanes), NetworkError);
}

TEST(RoadNetwork, DuplicateIdsRejected) {
  EXPECT_THROW(parse_network(R"({"nodes": [{"id": "A", "x": 0, "y": 0}, {"id": "A", "x": 1, "y": 0}],
    "edges": []})"),
               NetworkError);
  EXPECT_THROW(parse_network(R"({"nodes": [{"id": "A", "x": 0, "y": 0}, {"id": "B", "x": 1, "y": 0}],
    "edges": [{"id": "e", "from": "A", "to": "B", "length": 1, "lanes": 1, "speed_limit": 1},
              {"id": "e", "from": "B", "to": "A", "length": 1, "lanes": 1, "speed_limit": 1}]})"),
               NetworkError);
}

TEST(RoadNetwork, ParseErrorsCarryContext) {
  try {
    parse_network(R"({"nodes": [], "edges": [{"id": "e", "from": "A"}]})");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("edges[0]"), std::string::npos) << e.what();
  }
  try {
    parse_network("{\"nodes\": [\n  {\"id\": }\n]}");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  try {
    parse_network(R"({"nodes": [{"id": "A", "x": "far", "y": 0}], "edges": []})");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("nodes[0].x"), std::string::npos) << e.what();
  }
}

TEST(RoadNetwork, MissingFileIsAnError) {
  EXPECT_THROW(load_network("/nonexistent/net.json"), ParseError);
}

TEST(GenerateGrid, CountsFollowFormula) {
  for (auto [rows, cols] : {std::pair{2, 2}, std::pair{3, 3}, std::pair{4, 6}}) {
    const RoadNetwork g = generate_grid(rows, cols, 100, 10, 1);
    EXPECT_EQ(g.node_count(), static_cast<std::size_t>(rows * cols));
    EXPECT_EQ(g.edge_count(), static_cast<std::size_t>(2 * (rows * (cols - 1) + cols * (rows - 1))));
  }
  EXPECT_EQ(generate_grid(2, 2, 100, 10, 1).edge_count(), 8u);
  EXPECT_EQ(generate_grid(3, 3, 100, 10, 1).edge_count(), 24u);
}

TEST(GenerateGrid, InteriorDegreeIsEight) {
  const RoadNetwork g = generate_grid(4, 4, 200, 13.9, 1);
  for (int r = 1; r <= 2; ++r) {
    for (int c = 1; c <= 2; ++c) {
      const NodeIdx n = g.node_index("n" + std::to_string(r) + "_" + std::to_string(c));
      EXPECT_EQ(g.out_edges(n).size(), 4u);
      EXPECT_EQ(g.in_edges(n).size(), 4u);
    }
  }
}

TEST(GenerateGrid, RejectsDegenerateShape) {
  EXPECT_THROW(generate_grid(1, 5, 100, 10, 1), std::invalid_argument);
}

TEST(RoadNetwork, GridRoundTripsThroughFile) {
  const RoadNetwork g = generate_grid(4, 4, 200, 13.9, 2);
  const auto path = std::filesystem::temp_directory_path() / "sybilsim_grid_roundtrip.json";
  save_network(g, path);
  const RoadNetwork back = load_network(path);
  EXPECT_TRUE(back == g);
  EXPECT_EQ(network_to_json(back), network_to_json(g));
  std::filesystem::remove(path);
}

TEST(RoadNetwork, LaneCapacity) {
  const RoadNetwork net = two_nodes();
  EXPECT_EQ(net.edge(0).lane_capacity(5.0, 2.5), 13);
  EXPECT_EQ(net.edge(0).lane_capacity(60.0, 50.0), 0);
}

TEST(RoadNetwork, IdRanksAreLexicographic) {
  const RoadNetwork net = parse_network(R"({
    "nodes": [{"id": "b", "x": 0, "y": 0}, {"id": "a", "x": 1, "y": 0}, {"id": "c", "x": 2, "y": 0}],
    "edges": []})");
  ASSERT_EQ(net.nodes_by_id().size(), 3u);
  EXPECT_EQ(net.node(net.nodes_by_id()[0]).id, "a");
  EXPECT_EQ(net.node(net.nodes_by_id()[2]).id, "c");
  EXPECT_EQ(net.node_rank(net.node_index("b")), 1u);
}
