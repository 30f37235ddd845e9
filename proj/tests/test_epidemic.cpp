#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <thread>

#include "oracles.hpp"
#include "sweepforge/demo/epidemic.hpp"
#include "sweepforge/runner.hpp"

using namespace sweepforge;
using namespace sweepforge::demo;

namespace {

using oracle::CompleteGraphOracle;

Config sir_config(int n, double beta, double gamma, int repeats, std::uint64_t seed = 1) {
  return parse_config("[task]\nname = sir\nrepeats = " + std::to_string(repeats) + "\nseed = " +
                      std::to_string(seed) + "\n[params]\nn = " + std::to_string(n) + "\nbeta = " +
                      format_double(beta) + "\ngamma = " + format_double(gamma) +
                      "\ni0 = 1\n[aggregate]\nfinal : mean, stderr @ after_run\n");
}

TaskFactory sir_factory() {
  return [] { return std::make_unique<SirTask>(); };
}

}  // namespace

TEST(SirOracle, FrozenExactValues) {
  EXPECT_NEAR(CompleteGraphOracle(3, 0.3, 1).expected_final_size(), 1.726, 1e-12);
  EXPECT_NEAR(CompleteGraphOracle(3, 0.5, 1).expected_final_size(), 2.25, 1e-12);
  EXPECT_NEAR(CompleteGraphOracle(4, 0.3, 1).expected_final_size(), 2.316556, 1e-12);
  EXPECT_NEAR(CompleteGraphOracle(4, 0.5, 1).expected_final_size(), 3.25, 1e-12);
  // Degenerate checks of the oracle itself.
  EXPECT_NEAR(CompleteGraphOracle(4, 0.0, 0.5).expected_final_size(), 1, 1e-12);
  EXPECT_NEAR(CompleteGraphOracle(4, 1.0, 1.0).expected_final_size(), 4, 1e-12);
}

TEST(SirOracle, SimulationAgreesWithinThreeStandardErrors) {
  const unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  for (int n : {3, 4})
    for (double beta : {0.3, 0.5}) {
      auto cfg = sir_config(n, beta, 1.0, 10000, 100 + n);
      RunOptions opts;
      opts.workers = workers;
      auto report = run_experiment(cfg, sir_factory(), opts);
      ASSERT_TRUE(report.ledger.failed.empty());
      auto table = report.tables().front();
      const double mean = table.rows[0][table.column("mean")];
      const double se = table.rows[0][table.column("stderr")];
      const double exact = CompleteGraphOracle(n, beta, 1).expected_final_size();
      EXPECT_LT(std::abs(mean - exact), 3 * se) << "K" << n << " beta=" << beta << " mean=" << mean;
    }
}

TEST(Sir, Topologies) {
  Rng rng(1);
  SirSystem complete({5, Topology::complete, 0, 0.5, 0.5, 1}, rng);
  EXPECT_EQ(complete.network().links().size(), 10u);
  SirSystem ring({5, Topology::ring, 0, 0.5, 0.5, 1}, rng);
  EXPECT_EQ(ring.network().links().size(), 5u);
  for (auto v : ring.nodes()) EXPECT_EQ(ring.network().degree(ring.net_id(), v), 2u);
  SirSystem all({6, Topology::complete, 0, 0.5, 0.5, 6}, rng);
  EXPECT_EQ(all.counts().s, 0u);
  EXPECT_EQ(all.counts().i, 6u);
  SirSystem er_empty({30, Topology::erdos_renyi, 0.0, 0.5, 0.5, 1}, rng);
  EXPECT_TRUE(er_empty.network().links().empty());
  SirSystem er_full({8, Topology::erdos_renyi, 1.0, 0.5, 0.5, 1}, rng);
  EXPECT_EQ(er_full.network().links().size(), 28u);
  EXPECT_THROW(SirSystem({3, Topology::complete, 0, 0.5, 0.5, 4}, rng), std::invalid_argument);
  EXPECT_THROW(SirSystem({3, Topology::complete, 0, 1.5, 0.5, 1}, rng), std::invalid_argument);
}

TEST(Sir, ForcedTransitionsOnAPath) {
  Rng rng(4);
  SirSystem s({2, Topology::ring, 0, 1.0, 1.0, 1}, rng);
  EXPECT_EQ(s.counts(), (SirCounts{1, 1, 0}));
  EXPECT_EQ(s.step(rng), 1u);
  EXPECT_EQ(s.counts(), (SirCounts{0, 1, 1}));
  s.step(rng);
  EXPECT_EQ(s.counts(), (SirCounts{0, 0, 2}));
  EXPECT_FALSE(s.active());
}

TEST(Sir, BetaZeroNeverInfects) {
  Rng rng(8);
  SirSystem s({10, Topology::complete, 0, 0.0, 0.3, 3}, rng);
  std::uint64_t steps = run_to_halt(s, rng);
  EXPECT_GT(steps, 0u);
  EXPECT_EQ(s.counts(), (SirCounts{7, 0, 3}));
}

TEST(Sir, ConservationAndMonotonicity) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    SirSystem s({25, seed % 2 ? Topology::ring : Topology::erdos_renyi, 0.2, 0.4, 0.3, 2}, rng);
    auto prev = s.counts();
    while (s.active()) {
      s.step(rng);
      auto c = s.counts();
      EXPECT_EQ(c.s + c.i + c.r, 25u);
      EXPECT_LE(c.s, prev.s);
      EXPECT_GE(c.r, prev.r);
      prev = c;
    }
  }
}

TEST(Sir, TaskRecordsAndCaps) {
  ParameterSpace space({{"n", {Value{std::int64_t{6}}}},
                        {"beta", {Value{0.5}}},
                        {"gamma", {Value{0.0}}}});
  auto rules = std::vector<AggregationRule>{parse_rule("final : mean @ after_run"),
                                            parse_rule("new_infections : sum @ after_step")};
  // gamma = 0 needs an explicit cap.
  EXPECT_THROW(run_unit(unit_at(0, 1, 0), space.point(0), sir_factory(), std::nullopt, rules), std::invalid_argument);
  auto out = run_unit(unit_at(0, 1, 0), space.point(0), sir_factory(), 5, rules);
  EXPECT_EQ(out.steps, 5u);

  ParameterSpace ok({{"n", {Value{std::int64_t{6}}}}, {"beta", {Value{0.5}}}, {"gamma", {Value{0.5}}}});
  auto run = run_unit(unit_at(3, 1, 9), ok.point(0), sir_factory(), std::nullopt, rules);
  const double final_size = run.contribution.per_rule[0]->second.mean;
  const double infections = run.contribution.per_rule[1]->second.mean * run.contribution.per_rule[1]->second.count;
  EXPECT_EQ(final_size, infections + 1);
}

TEST(Intervention, IdenticalStrategiesGiveIdenticalResults) {
  Rng rng(12);
  SirSystem s({40, Topology::erdos_renyi, 0.15, 0.3, 0.4, 2}, rng);
  s.step(rng);
  s.step(rng);
  InterventionPlan plan;
  plan.strategies = std::vector<Strategy>(5, Strategy::none);
  auto sizes = sir_intervention_demo(s, plan, 999);
  ASSERT_EQ(sizes.size(), 5u);
  for (auto v : sizes) EXPECT_EQ(v, sizes[0]);
}

TEST(Intervention, VaccinateAllFreezesTheEpidemicAndOriginalIsUntouched) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    SirSystem s({30, Topology::complete, 0, 0.1, 0.5, 2}, rng);
    s.step(rng);
    const std::string before = s.network().to_text();
    const auto current = s.epidemic_size();
    auto sizes = sir_intervention_demo(s, InterventionPlan{}, derive_seed(5, seed));
    ASSERT_EQ(sizes.size(), 5u);
    EXPECT_EQ(sizes[4], current);
    for (auto v : sizes) EXPECT_GE(v, current);
    EXPECT_EQ(s.network().to_text(), before);
  }
}

TEST(Intervention, TopDegreeVaccinationPicksHubs) {
  Rng rng(2);
  SirSystem s({12, Topology::ring, 0, 0.5, 0.5, 1}, rng);
  for (auto v : s.nodes()) s.set_code(v, susceptible);
  s.set_code(s.nodes()[0], infected);
  const auto hub = s.nodes()[6];
  const auto nbrs = s.network().neighbors(s.net_id(), hub);
  for (auto v : s.nodes())
    if (v != hub && std::find(nbrs.begin(), nbrs.end(), v) == nbrs.end())
      s.network().add_link(s.net_id(), hub, v, false);
  InterventionPlan plan;
  plan.vaccinate = 1;
  Rng r(0);
  apply_strategy(s, Strategy::vaccinate_top, plan, r);
  EXPECT_TRUE(s.vaccinated(hub));
  EXPECT_EQ(s.code(hub), recovered);
  EXPECT_EQ(s.epidemic_size(), 1u);
}

TEST(Intervention, ParallelClonesMatchSequential) {
  Rng rng(31);
  SirSystem s({60, Topology::erdos_renyi, 0.1, 0.3, 0.3, 3}, rng);
  for (int k = 0; k < 3; ++k) s.step(rng);
  InterventionPlan plan;
  plan.vaccinate = 6;
  const auto sequential = sir_intervention_demo(s, plan, 4242);

  std::vector<std::uint64_t> parallel(plan.strategies.size());
  std::vector<std::thread> workers;
  for (std::size_t j = 0; j < plan.strategies.size(); ++j)
    workers.emplace_back([&, j] {
      SirSystem clone = s;
      Rng r(derive_seed(4242, static_cast<std::uint64_t>(plan.strategies[j])));
      apply_strategy(clone, plan.strategies[j], plan, r);
      run_to_halt(clone, r);
      parallel[j] = clone.epidemic_size();
    });
  for (auto& w : workers) w.join();
  EXPECT_EQ(parallel, sequential);
}

TEST(Intervention, TaskRecordsEveryStrategy) {
  auto cfg = parse_config(
      "[task]\nname = sir_intervene\nrepeats = 4\n[params]\nn = 30\ntopology = erdos_renyi\np = 0.2\n"
      "beta = 0.2\ngamma = 0.5\ni0 = 2\n[aggregate]\nfinal_none : count, mean @ user:strategy_done\n"
      "final_vaccinate_all : count @ user:strategy_done\nsize_at_intervention : mean @ user:strategy_done\n");
  RunOptions opts;
  auto report = run_experiment(cfg, [] { return std::make_unique<InterveneTask>(); }, opts);
  ASSERT_TRUE(report.ledger.failed.empty());
  auto tables = report.tables();
  EXPECT_EQ(tables[0].rows[0][0], 4);
  EXPECT_EQ(tables[1].rows[0][0], 4);
}
