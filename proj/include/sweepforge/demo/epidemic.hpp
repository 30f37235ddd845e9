#pragma once

// Discrete-time SIR epidemic on a network, used as the reference task.
// Each step is a synchronous update from the pre-step state: a susceptible
// node with k infected neighbours becomes infected with probability
// 1 - (1 - beta)^k, an infected node recovers with probability gamma.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sweepforge/engine.hpp"
#include "sweepforge/netstruct.hpp"
#include "sweepforge/rng.hpp"

namespace sweepforge::demo {

enum class Topology { complete, ring, erdos_renyi };

enum SirCode : std::int64_t { susceptible = 0, infected = 1, recovered = 2 };

struct SirParams {
  std::uint64_t n = 10;
  Topology topology = Topology::complete;
  double p = 0;  // edge probability for erdos_renyi
  double beta = 0.5;
  double gamma = 0.5;
  std::uint64_t i0 = 1;

  void validate() const {
    if (n < 1) throw std::invalid_argument("n must be at least 1");
    if (i0 < 1 || i0 > n) throw std::invalid_argument("i0 must lie in [1, n]");
    for (double q : {beta, gamma, p})
      if (!(q >= 0 && q <= 1)) throw std::invalid_argument("probabilities must lie in [0, 1]");
  }

  /// Reads n, topology, p, beta, gamma, i0 from the unit's parameter point.
  static SirParams from(const RunContext& ctx) {
    SirParams s;
    auto n = ctx.integer("n", 10);
    auto i0 = ctx.integer("i0", 1);
    if (n < 1 || i0 < 1) throw std::invalid_argument("n and i0 must be positive");
    s.n = static_cast<std::uint64_t>(n);
    s.i0 = static_cast<std::uint64_t>(i0);
    s.beta = ctx.real("beta");
    s.gamma = ctx.real("gamma");
    s.p = ctx.real("p", 0);
    std::string topo = ctx.text("topology", "complete");
    if (topo == "complete")
      s.topology = Topology::complete;
    else if (topo == "ring")
      s.topology = Topology::ring;
    else if (topo == "erdos_renyi")
      s.topology = Topology::erdos_renyi;
    else
      throw std::invalid_argument("unknown topology '" + topo + "'");
    s.validate();
    return s;
  }

  /// Step budget after which a run counts as not halting: 10 n / gamma.
  double step_cap() const { return gamma > 0 ? 10.0 * static_cast<double>(n) / gamma : INFINITY; }
};

struct SirCounts {
  std::uint64_t s = 0, i = 0, r = 0;
  bool operator==(const SirCounts&) const = default;
};

/// A network system in some epidemic state. Copying it copies everything.
class SirSystem {
 public:
  /// Builds the topology and infects i0 distinct nodes chosen with `rng`.
  SirSystem(const SirParams& params, Rng& rng) : params_(params) {
    params_.validate();
    net_ = network_.add_network();
    for (std::uint64_t k = 0; k < params_.n; ++k)
      nodes_.push_back(network_.add_node(net_, {{"sir", Value{std::int64_t{susceptible}}}}));
    const auto n = nodes_.size();
    switch (params_.topology) {
      case Topology::complete:
        for (std::size_t a = 0; a < n; ++a)
          for (std::size_t b = a + 1; b < n; ++b) network_.add_link(net_, nodes_[a], nodes_[b], false);
        break;
      case Topology::ring:
        if (n == 2) network_.add_link(net_, nodes_[0], nodes_[1], false);
        if (n >= 3)
          for (std::size_t a = 0; a < n; ++a) network_.add_link(net_, nodes_[a], nodes_[(a + 1) % n], false);
        break;
      case Topology::erdos_renyi:
        for (std::size_t a = 0; a < n; ++a)
          for (std::size_t b = a + 1; b < n; ++b)
            if (rng.bernoulli(params_.p)) network_.add_link(net_, nodes_[a], nodes_[b], false);
        break;
    }
    std::vector<net::NodeId> pool = nodes_;
    for (std::uint64_t k = 0; k < params_.i0; ++k) {
      auto j = k + rng.below(pool.size() - k);
      std::swap(pool[k], pool[j]);
      network_.set_node_state(pool[k], "sir", std::int64_t{infected});
    }
  }

  const SirParams& params() const noexcept { return params_; }
  const net::NetworkSet& network() const noexcept { return network_; }
  net::NetworkSet& network() noexcept { return network_; }
  net::NetId net_id() const noexcept { return net_; }
  const std::vector<net::NodeId>& nodes() const noexcept { return nodes_; }

  SirCode code(net::NodeId v) const {
    return static_cast<SirCode>(std::get<std::int64_t>(*network_.node_state(v, "sir")));
  }
  void set_code(net::NodeId v, SirCode c) { network_.set_node_state(v, "sir", std::int64_t{c}); }

  bool vaccinated(net::NodeId v) const { return network_.node_state(v, "vaccinated") != nullptr; }

  SirCounts counts() const {
    SirCounts c;
    for (auto v : nodes_) {
      switch (code(v)) {
        case susceptible: ++c.s; break;
        case infected: ++c.i; break;
        case recovered: ++c.r; break;
      }
    }
    return c;
  }

  /// Nodes ever infected (infected or recovered, excluding vaccinated ones).
  std::uint64_t epidemic_size() const {
    std::uint64_t k = 0;
    for (auto v : nodes_)
      if (code(v) != susceptible && !vaccinated(v)) ++k;
    return k;
  }

  bool active() const {
    return std::any_of(nodes_.begin(), nodes_.end(), [&](auto v) { return code(v) == infected; });
  }

  /// One synchronous step; returns the number of new infections.
  std::uint64_t step(Rng& rng) {
    std::map<net::NodeId, SirCode> before;
    for (auto v : nodes_) before[v] = code(v);
    std::vector<std::pair<net::NodeId, SirCode>> changes;
    std::uint64_t new_infections = 0;
    for (auto v : nodes_) {
      const SirCode c = before[v];
      if (c == susceptible) {
        std::uint64_t k = 0;
        for (auto w : network_.neighbors(net_, v))
          if (before[w] == infected) ++k;
        if (k == 0) continue;
        double p = 1.0 - std::pow(1.0 - params_.beta, static_cast<double>(k));
        if (rng.uniform() < p) {
          changes.emplace_back(v, infected);
          ++new_infections;
        }
      } else if (c == infected) {
        if (rng.uniform() < params_.gamma) changes.emplace_back(v, recovered);
      }
    }
    for (auto [v, c] : changes) set_code(v, c);
    return new_infections;
  }

 private:
  SirParams params_;
  net::NetworkSet network_;
  net::NetId net_;
  std::vector<net::NodeId> nodes_;
};

/// Runs `system` until no node is infected. Throws if the 10 n / gamma step
/// budget is exhausted first.
inline std::uint64_t run_to_halt(SirSystem& system, Rng& rng) {
  const double cap = system.params().step_cap();
  std::uint64_t steps = 0;
  while (system.active()) {
    if (static_cast<double>(steps) >= cap) throw std::runtime_error("epidemic did not halt within 10*n/gamma steps");
    system.step(rng);
    ++steps;
  }
  return steps;
}

enum class Strategy { none, vaccinate_top, vaccinate_random, cut_links, vaccinate_all };

/// Catalogue order; the ordinal also selects a strategy's sub-seed.
inline constexpr Strategy kStrategies[] = {Strategy::none, Strategy::vaccinate_top, Strategy::vaccinate_random,
                                           Strategy::cut_links, Strategy::vaccinate_all};

inline std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::none: return "none";
    case Strategy::vaccinate_top: return "vaccinate_top";
    case Strategy::vaccinate_random: return "vaccinate_random";
    case Strategy::cut_links: return "cut_links";
    case Strategy::vaccinate_all: return "vaccinate_all";
  }
  return "?";
}

struct InterventionPlan {
  std::vector<Strategy> strategies{std::begin(kStrategies), std::end(kStrategies)};
  std::uint64_t vaccinate = 1;  // nodes vaccinated by vaccinate_top / vaccinate_random
  double cut_fraction = 0.5;    // share of links removed by cut_links
};

inline void vaccinate(SirSystem& sys, net::NodeId v) {
  sys.set_code(v, recovered);
  sys.network().set_node_state(v, "vaccinated", std::int64_t{1});
}

/// Applies one intervention to `sys` (a clone) using `rng` for any choices.
inline void apply_strategy(SirSystem& sys, Strategy s, const InterventionPlan& plan, Rng& rng) {
  std::vector<net::NodeId> sus;
  for (auto v : sys.nodes())
    if (sys.code(v) == susceptible) sus.push_back(v);
  switch (s) {
    case Strategy::none: break;
    case Strategy::vaccinate_top: {
      std::stable_sort(sus.begin(), sus.end(), [&](auto a, auto b) {
        return sys.network().degree(sys.net_id(), a) > sys.network().degree(sys.net_id(), b);
      });
      for (std::size_t k = 0; k < std::min<std::size_t>(plan.vaccinate, sus.size()); ++k) vaccinate(sys, sus[k]);
      break;
    }
    case Strategy::vaccinate_random: {
      const auto m = std::min<std::size_t>(plan.vaccinate, sus.size());
      for (std::size_t k = 0; k < m; ++k) {
        std::swap(sus[k], sus[k + rng.below(sus.size() - k)]);
        vaccinate(sys, sus[k]);
      }
      break;
    }
    case Strategy::cut_links: {
      const auto& links = sys.network().net(sys.net_id()).links;
      std::vector<net::LinkId> ids(links.begin(), links.end());
      const auto m = static_cast<std::size_t>(std::floor(plan.cut_fraction * static_cast<double>(ids.size())));
      for (std::size_t k = 0; k < m; ++k) {
        std::swap(ids[k], ids[k + rng.below(ids.size() - k)]);
        sys.network().remove_link(ids[k]);
      }
      break;
    }
    case Strategy::vaccinate_all:
      for (auto v : sus) vaccinate(sys, v);
      break;
  }
}

/// Clones `state` once per strategy, applies each strategy to its own clone
/// and runs it to halt. Clone j continues with seed derive_seed(unit_seed,
/// ordinal of its strategy), so identical strategies see identical dynamics.
/// `state` is not modified. Returns the epidemic size of each clone.
inline std::vector<std::uint64_t> sir_intervention_demo(const SirSystem& state, const InterventionPlan& plan,
                                                        std::uint64_t unit_seed) {
  std::vector<std::uint64_t> sizes;
  for (Strategy s : plan.strategies) {
    SirSystem clone = state;
    const auto ordinal = static_cast<std::uint64_t>(s);
    Rng rng(derive_seed(unit_seed, ordinal));
    apply_strategy(clone, s, plan, rng);
    run_to_halt(clone, rng);
    sizes.push_back(clone.epidemic_size());
  }
  return sizes;
}

/// Task "sir": one epidemic per run unit.
/// Records new_infections and infected at after_step, final and
/// duration at after_run (final is the number of nodes ever infected).
class SirTask : public TaskLogic {
 public:
  void init_run(RunContext& ctx) override {
    params_ = SirParams::from(ctx);
    if (params_.gamma == 0 && !ctx.max_steps())
      throw std::invalid_argument("gamma = 0 never halts; set [task] max_steps");
    system_ = std::make_unique<SirSystem>(params_, ctx.rng());
  }

  bool step(RunContext& ctx) override {
    if (static_cast<double>(ctx.step_index()) >= params_.step_cap())
      throw std::runtime_error("epidemic did not halt within 10*n/gamma steps");
    new_infections_ = system_->step(ctx.rng());
    return system_->active();
  }

  void collect(const TimePoint& tp, RunContext& ctx) override {
    if (!system_) return;
    if (tp == TimePoint::Builtin::after_step) {
      ctx.record("new_infections", static_cast<double>(new_infections_));
      ctx.record("infected", static_cast<double>(system_->counts().i));
    } else if (tp == TimePoint::Builtin::after_run) {
      ctx.record("final", static_cast<double>(system_->epidemic_size()));
      ctx.record("duration", static_cast<double>(ctx.step_index()));
    }
  }

  const SirSystem* system() const noexcept { return system_.get(); }

 private:
  SirParams params_;
  std::unique_ptr<SirSystem> system_;
  std::uint64_t new_infections_ = 0;
};

/// Task "sir_intervene": runs the epidemic for `intervene_at` steps, then
/// tests every intervention strategy on its own clone of the system.
/// Records size_at_intervention and final_<strategy> at user:strategy_done.
class InterveneTask : public TaskLogic {
 public:
  void init_run(RunContext& ctx) override {
    params_ = SirParams::from(ctx);
    if (params_.gamma == 0) throw std::invalid_argument("gamma must be positive for interventions");
    intervene_at_ = static_cast<std::uint64_t>(ctx.integer("intervene_at", 2));
    plan_.vaccinate = static_cast<std::uint64_t>(
        ctx.integer("vaccinate", std::max<std::int64_t>(1, static_cast<std::int64_t>(params_.n / 10))));
    plan_.cut_fraction = ctx.real("cut", 0.5);
    if (!(plan_.cut_fraction >= 0 && plan_.cut_fraction <= 1)) throw std::invalid_argument("cut must lie in [0, 1]");
    system_ = std::make_unique<SirSystem>(params_, ctx.rng());
  }

  bool step(RunContext& ctx) override {
    if (ctx.step_index() < intervene_at_ && system_->active()) {
      system_->step(ctx.rng());
      return true;
    }
    size_at_intervention_ = system_->epidemic_size();
    sizes_ = sir_intervention_demo(*system_, plan_, ctx.unit().seed);
    ctx.fire("strategy_done");
    return false;
  }

  void collect(const TimePoint& tp, RunContext& ctx) override {
    if (!tp.is_user() || tp.user_name() != "strategy_done") return;
    ctx.record("size_at_intervention", static_cast<double>(size_at_intervention_));
    for (std::size_t j = 0; j < sizes_.size(); ++j)
      ctx.record("final_" + strategy_name(plan_.strategies[j]), static_cast<double>(sizes_[j]));
  }

 private:
  SirParams params_;
  InterventionPlan plan_;
  std::uint64_t intervene_at_ = 2;
  std::unique_ptr<SirSystem> system_;
  std::uint64_t size_at_intervention_ = 0;
  std::vector<std::uint64_t> sizes_;
};

/// Task "busy": spins for `ms` milliseconds (default 100) in a single step.
/// Used to check parallel speedup.
class BusyTask : public TaskLogic {
 public:
  bool step(RunContext& ctx) override {
    const auto ms = ctx.integer("ms", 100);
    const auto until = std::chrono::steady_clock::now() + std::chrono::milliseconds(ms);
    volatile std::uint64_t sink = 0;
    while (std::chrono::steady_clock::now() < until) sink = sink + 1;
    return false;
  }

  void collect(const TimePoint& tp, RunContext& ctx) override {
    if (tp == TimePoint::Builtin::after_run) ctx.record("work", 1.0);
  }
};

using TaskRegistry = std::map<std::string, TaskFactory, std::less<>>;

inline void register_demo_tasks(TaskRegistry& registry) {
  registry["sir"] = [] { return std::make_unique<SirTask>(); };
  registry["sir_intervene"] = [] { return std::make_unique<InterveneTask>(); };
  registry["busy"] = [] { return std::make_unique<BusyTask>(); };
}

}  // namespace sweepforge::demo
