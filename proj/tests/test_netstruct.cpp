#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>
#include <thread>

#include "oracles.hpp"
#include "sweepforge/netstruct.hpp"

using namespace sweepforge;
using namespace sweepforge::net;

using oracle::random_system;

TEST(NetworkSet, BasicTopology) {
  NetworkSet s;
  auto n = s.add_network();
  std::vector<NodeId> v;
  for (int i = 0; i < 5; ++i) v.push_back(s.add_node(n));
  for (int i = 0; i < 5; ++i)
    for (int j = i + 1; j < 5; ++j) s.add_link(n, v[i], v[j], false);
  EXPECT_EQ(s.net(n).links.size(), 10u);
  for (auto x : v) EXPECT_EQ(s.degree(n, x), 4u);
  EXPECT_THROW(s.add_link(n, v[0], v[0], false), NetworkError);
  s.check_integrity();
}

TEST(NetworkSet, DirectedLinks) {
  NetworkSet s;
  auto n = s.add_network();
  auto a = s.add_node(n), b = s.add_node(n);
  s.add_link(n, a, b, true);
  EXPECT_EQ(s.out_neighbors(n, a), std::vector<NodeId>{b});
  EXPECT_TRUE(s.out_neighbors(n, b).empty());
  EXPECT_EQ(s.in_neighbors(n, b), std::vector<NodeId>{a});
  EXPECT_EQ(s.neighbors(n, b), std::vector<NodeId>{a});
  EXPECT_EQ(s.degree(n, a), 1u);
  EXPECT_EQ(s.degree(n, b), 0u);
}

TEST(NetworkSet, SharedNodesAndRemoval) {
  NetworkSet s;
  auto n1 = s.add_network(), n2 = s.add_network();
  auto a = s.add_node(n1), b = s.add_node(n1);
  s.enroll_node(n2, a);
  s.enroll_node(n2, b);
  auto l1 = s.add_link(n1, a, b, false);
  s.add_link(n2, a, b, false);
  s.remove_node(n1, a);
  EXPECT_TRUE(s.has_node(a));
  EXPECT_FALSE(s.has_link(l1));
  EXPECT_EQ(s.neighbors(n2, a), std::vector<NodeId>{b});
  EXPECT_THROW(s.neighbors(n1, a), NetworkError);
  s.remove_node(n2, a);
  EXPECT_FALSE(s.has_node(a));
  EXPECT_THROW(s.remove_node(n2, a), NetworkError);
  s.check_integrity();
}

TEST(NetworkSet, MergeUnitesMembersAndLinks) {
  NetworkSet s;
  auto n1 = s.add_network(), n2 = s.add_network();
  auto a = s.add_node(n1), b = s.add_node(n1), c = s.add_node(n2);
  s.enroll_node(n2, b);
  s.add_link(n1, a, b, false);
  s.add_link(n2, b, c, true, {{"w", Value{2.5}}});
  auto m = s.merge({n1, n2});
  EXPECT_EQ(s.net(m).members, (std::set<NodeId>{a, b, c}));
  EXPECT_EQ(s.net(m).links.size(), 2u);
  EXPECT_EQ(s.neighbors(m, b), (std::vector<NodeId>{a, c}));
  EXPECT_EQ(s.net(n1).links.size(), 1u);
  EXPECT_EQ(s.node(b).membership.size(), 3u);
  EXPECT_THROW(s.merge({n1, n1}), NetworkError);
  s.check_integrity();
}

TEST(NetworkSet, StateAccess) {
  NetworkSet s;
  auto n = s.add_network({{"name", Value{std::string("g")}}});
  auto a = s.add_node(n, {{"sir", Value{std::int64_t{0}}}});
  s.set_node_state(a, "sir", std::int64_t{2});
  EXPECT_EQ(*s.node_state(a, "sir"), Value{std::int64_t{2}});
  EXPECT_EQ(s.node_state(a, "missing"), nullptr);
  EXPECT_EQ(*s.net_state(n, "name"), Value{std::string("g")});
}

TEST(NetworkSet, ShadowModelFuzz) {
  auto violations = oracle::shadow_fuzz(2024, 10000);
  EXPECT_EQ(violations, std::vector<std::string>{});
}

TEST(NetworkSet, DegreeSumIsTwiceUndirectedLinks) {
  std::mt19937_64 gen(3);
  for (int t = 0; t < 50; ++t) {
    NetworkSet s;
    auto n = s.add_network();
    std::vector<NodeId> v;
    for (int i = 0; i < 20; ++i) v.push_back(s.add_node(n));
    std::size_t links = 0;
    for (int e = 0; e < 60; ++e) {
      auto a = v[gen() % v.size()], b = v[gen() % v.size()];
      if (a == b) continue;
      s.add_link(n, a, b, false);
      ++links;
    }
    std::size_t sum = 0;
    for (auto x : v) sum += s.degree(n, x);
    EXPECT_EQ(sum, 2 * links);
  }
}

TEST(NetworkSet, CloneIndependence) {
  std::mt19937_64 gen(77);
  for (int t = 0; t < 100; ++t) EXPECT_EQ(oracle::clone_independence_case(gen), "") << "system " << t;
}

TEST(NetworkSet, TextRoundTrip) {
  std::mt19937_64 gen(5);
  for (int t = 0; t < 50; ++t) {
    NetworkSet s = random_system(gen);
    auto back = NetworkSet::from_text(s.to_text(), s.allow_self_loops());
    EXPECT_EQ(back.to_text(), s.to_text());
    back.check_integrity();
  }
}

TEST(NetworkSet, ClonesEvolveIndependentlyOnThreads) {
  std::mt19937_64 gen(9);
  NetworkSet base = random_system(gen);
  const std::string before = base.to_text();
  std::vector<NetworkSet> clones(4, base.clone_system());
  std::vector<std::thread> workers;
  for (std::size_t i = 0; i < clones.size(); ++i)
    workers.emplace_back([&clones, i] {
      auto& c = clones[i];
      auto net = c.networks().begin()->first;
      for (int k = 0; k < 200; ++k) {
        auto v = c.add_node(net);
        c.set_node_state(v, "owner", static_cast<std::int64_t>(i));
      }
      c.check_integrity();
    });
  for (auto& w : workers) w.join();
  EXPECT_EQ(base.to_text(), before);
  for (std::size_t i = 0; i < clones.size(); ++i) EXPECT_EQ(clones[i].nodes().size(), base.nodes().size() + 200);
}
