#include <gtest/gtest.h>

#include <random>
#include <set>

#include "sweepforge/config.hpp"
#include "sweepforge/space.hpp"

using namespace sweepforge;

namespace {

std::vector<Diagnostic> diagnostics_of(std::string_view text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.diagnostics();
  }
  return {};
}

}  // namespace

TEST(Space, MixedRadixLastFastest) {
  ParameterSpace space({{"x", {Value{std::int64_t{1}}, Value{std::int64_t{2}}}},
                        {"y", {Value{0.5}, Value{1.5}, Value{2.5}}}});
  ASSERT_EQ(space.point_count(), 6u);
  auto p1 = space.point(1);
  EXPECT_EQ(*p1.find("x"), Value{std::int64_t{1}});
  EXPECT_EQ(*p1.find("y"), Value{1.5});
  auto p3 = space.point(3);
  EXPECT_EQ(*p3.find("x"), Value{std::int64_t{2}});
  EXPECT_EQ(*p3.find("y"), Value{0.5});
  EXPECT_THROW(space.point(6), std::out_of_range);
}

TEST(Space, EmptySpaceHasOnePoint) {
  ParameterSpace space(std::vector<ParameterSpec>{});
  EXPECT_EQ(space.point_count(), 1u);
  EXPECT_TRUE(space.point(0).assignments.empty());
}

TEST(Space, IndexBijectionOnRandomSpaces) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ParameterSpec> specs;
    std::uint64_t expected = 1;
    const int k = static_cast<int>(gen() % 5);
    for (int p = 0; p < k; ++p) {
      std::vector<Value> values;
      const auto n = 1 + gen() % 6;
      for (std::uint64_t i = 0; i < n; ++i) values.emplace_back(static_cast<std::int64_t>(i * 10 + p));
      expected *= n;
      specs.push_back({"p" + std::to_string(p), values});
    }
    ParameterSpace space(specs);
    ASSERT_EQ(space.point_count(), expected);
    std::set<std::vector<std::pair<std::string, Value>>> distinct;
    for (std::uint64_t i = 0; i < space.point_count(); ++i) {
      auto pt = space.point(i);
      EXPECT_EQ(space.index_of(pt), i);
      distinct.insert(pt.assignments);
    }
    EXPECT_EQ(distinct.size(), expected);
  }
}

TEST(Space, RejectsBadParameters) {
  EXPECT_THROW(ParameterSpace(std::vector<ParameterSpec>{{"x", {}}}), ConfigError);
  EXPECT_THROW(ParameterSpace({{"x", {Value{1.0}, Value{1.0}}}}), ConfigError);
  EXPECT_THROW(ParameterSpace({{"x", {Value{1.0}}}, {"x", {Value{2.0}}}}), ConfigError);
  EXPECT_THROW(ParameterSpace({{"x", {Value{1.0}, Value{std::string("a")}}}}), ConfigError);
  EXPECT_THROW(ParameterSpace({{"1x", {Value{1.0}}}}), ConfigError);
  std::vector<Value> big;
  for (int i = 0; i < 1 << 14; ++i) big.emplace_back(std::int64_t{i});
  EXPECT_THROW(ParameterSpace({{"a", big}, {"b", big}, {"c", big}, {"d", big}}), ConfigError);
}

TEST(Range, IncludesStopDespiteRounding) {
  auto v = expand_range(0.1, 0.1, 0.3);
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v.back(), Value{0.3});
  auto w = expand_range(0.0, 0.1, 1.0);
  ASSERT_EQ(w.size(), 11u);
  EXPECT_EQ(w.back(), Value{1.0});
  auto x = expand_range(0.0, 0.3, 1.0);
  ASSERT_EQ(x.size(), 4u);
  EXPECT_LE(std::get<double>(x.back()), 1.0 * (1 + 1e-9));
  EXPECT_EQ(expand_range(1.0, 1.0, 1.0).size(), 1u);
  EXPECT_EQ(expand_range(3.0, -1.0, 1.0).size(), 3u);
}

TEST(Range, Errors) {
  EXPECT_THROW(expand_range(0.0, 0.0, 1.0), ConfigError);
  EXPECT_THROW(expand_range(0.0, -1.0, 1.0), ConfigError);
  EXPECT_THROW(expand_range(0.0, 1e-9, 1.0), ConfigError);
  EXPECT_THROW(expand_range(std::int64_t{0}, std::int64_t{0}, std::int64_t{4}), ConfigError);
}

TEST(Range, IntegerBounds) {
  auto v = expand_range(std::int64_t{1}, std::int64_t{2}, std::int64_t{8});
  ASSERT_EQ(v.size(), 4u);
  EXPECT_EQ(v.back(), Value{std::int64_t{7}});
}

TEST(Config, ParsesAllSections) {
  auto cfg = parse_config(R"(
# comment
[task]
name = sir
repeats = 3      # trailing comment
max_steps = 100
seed = 18446744073709551615
workers = 4

[params]
n = 1000
beta = 0.1:0.1:0.3
gamma = {0.5, 1}
topology = "complete"

[aggregate]
final : mean, stderr @ after_run by beta
final : count, hist(5) @ after_run by (beta, gamma)
infected : max @ user:peak

[checkpoint]
interval_seconds = 2.5
keep = 3
path = "out/run.ckpt"

[plot]
template = "fig.plt.in"
)");
  EXPECT_EQ(cfg.task.name, "sir");
  EXPECT_EQ(cfg.task.repeats, 3u);
  EXPECT_EQ(cfg.task.max_steps, 100u);
  EXPECT_EQ(cfg.task.seed, 18446744073709551615ull);
  EXPECT_EQ(cfg.task.workers, 4u);
  EXPECT_EQ(cfg.space.point_count(), 6u);
  EXPECT_EQ(units_total(cfg), 18u);
  EXPECT_EQ(cfg.space.find("gamma")->values.front(), Value{0.5});
  EXPECT_EQ(cfg.space.find("gamma")->values.back(), Value{1.0});
  EXPECT_EQ(cfg.space.find("topology")->values.front(), Value{std::string("complete")});
  ASSERT_EQ(cfg.rules.size(), 3u);
  EXPECT_EQ(cfg.rules[0].id, "final");
  EXPECT_EQ(cfg.rules[1].id, "final_2");
  EXPECT_EQ(cfg.rules[1].conditions.size(), 2u);
  EXPECT_EQ(cfg.rules[2].timepoint, TimePoint::user("peak"));
  EXPECT_EQ(cfg.checkpoint.interval_seconds, 2.5);
  EXPECT_EQ(cfg.checkpoint.keep, 3u);
  EXPECT_EQ(cfg.checkpoint.path, "out/run.ckpt");
  EXPECT_EQ(cfg.plot.template_path, "fig.plt.in");
}

TEST(Config, BasicExamples) {
  auto two_by_three = parse_config("[params]\nx = {1,2}\ny = 0.5:0.5:1.5\n");
  EXPECT_EQ(two_by_three.space.point_count(), 6u);
  auto p1 = two_by_three.space.point(1);
  EXPECT_EQ(*p1.find("x"), Value{std::int64_t{1}});
  EXPECT_EQ(*p1.find("y"), Value{1.0});

  auto d = diagnostics_of("[params]\nx = {1, 1}\n");
  ASSERT_FALSE(d.empty());
  EXPECT_NE(d.front().message.find("duplicate value 1"), std::string::npos);

  auto r = diagnostics_of("[params]\nx = 1\n[aggregate]\nfinal : mean @ after_run by z\n");
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r.front().line, 4u);
  EXPECT_NE(r.front().message.find("undeclared parameter 'z'"), std::string::npos);
}

TEST(Config, DiagnosticsCarryLineAndColumn) {
  auto d = diagnostics_of("[task]\nrepeats = 0\nbogus = 1\n[nope]\n[params]\nx = 1:0:3\n");
  ASSERT_EQ(d.size(), 4u);
  EXPECT_EQ(d[0].line, 2u);
  EXPECT_EQ(d[0].column, 11u);
  EXPECT_EQ(d[1].line, 3u);
  EXPECT_EQ(d[2].line, 4u);
  EXPECT_EQ(d[3].line, 6u);
}

TEST(Config, Rejections) {
  for (const char* bad : {
           "x = 1\n",
           "[task]\nrepeats = 1\nrepeats = 2\n",
           "[params]\nx = 1\nx = 2\n",
           "[params]\nx = {1, \"a\"}\n",
           "[params]\nx = 99999999999999999999\n",
           "[task]\nworkers = 0\n",
           "[task]\nseed = -1\n",
           "[task]\nname = \"a b\"\n",
           "[aggregate]\nv : mean @ before_task\n",
           "[aggregate]\nv : median @ after_run\n",
           "[aggregate]\nv : mean after_run\n",
           "[params]\nt = {\"a\", \"b\"}\n[aggregate]\nv : mean @ after_run by t\n",
           "[task]\n[task]\n",
           "[task\n",
           "[aggregate]\nv : hist(0) @ after_run\n",
       })
    EXPECT_THROW(parse_config(bad), ConfigError) << bad;
}

TEST(Config, MixedIntegerAndRealPromotesToReal) {
  auto cfg = parse_config("[params]\nx = {1, 2.5}\n");
  EXPECT_EQ(cfg.space.find("x")->values.front(), Value{1.0});
}

TEST(Config, CanonicalRoundTripAndHash) {
  const char* text = R"([task]
name = sir
repeats = 2
seed = 9
workers = 3
[params]
beta = 0.1:0.1:0.5
label = {"a b", "c"}
k = {1, 2, 3}
[aggregate]
final : mean, stderr @ after_run by beta*k, floor(beta/0.2)
[checkpoint]
interval_seconds = 0
)";
  auto cfg = parse_config(text);
  auto canon = canonical_text(cfg);
  EXPECT_EQ(parse_config(canon), cfg);
  EXPECT_EQ(canonical_text(parse_config(canon)), canon);

  // Cosmetic edits and non-semantic sections keep the hash.
  std::string cosmetic = std::string("# leading comment\n") + text;
  cosmetic.replace(cosmetic.find("repeats = 2"), 11, "  repeats=2   # two");
  auto edited = parse_config(cosmetic + "[plot]\nscript = \"x.plt\"\n");
  EXPECT_EQ(canonical_hash(edited), canonical_hash(cfg));
  auto other_workers = parse_config(std::string(text).replace(std::string(text).find("workers = 3"), 11, "workers = 8"));
  EXPECT_EQ(canonical_hash(other_workers), canonical_hash(cfg));

  auto changed = parse_config(std::string(text).replace(std::string(text).find("0.1:0.1:0.5"), 11, "0.1:0.1:0.6"));
  EXPECT_NE(canonical_hash(changed), canonical_hash(cfg));
  auto reseeded = parse_config(std::string(text).replace(std::string(text).find("seed = 9"), 8, "seed = 8"));
  EXPECT_NE(canonical_hash(reseeded), canonical_hash(cfg));
  EXPECT_EQ(canonical_hash(cfg).size(), 64u);
}

TEST(Config, FuzzIsTotal) {
  // Random mutations of a valid file either parse or throw ConfigError.
  const std::string base = "[task]\nrepeats = 2\n[params]\nx = {1, 2}\ny = 0:0.5:2\n[aggregate]\nv : mean @ after_run by x*y\n";
  const std::string alphabet = "[]{}=:,@#\"\\ \n\tabxy0123456789.-+*/^()";
  std::mt19937_64 gen(17);
  int parsed = 0;
  for (int i = 0; i < 3000; ++i) {
    std::string text = base;
    const int edits = 1 + static_cast<int>(gen() % 4);
    for (int e = 0; e < edits; ++e) {
      const auto pos = gen() % (text.size() + 1);
      switch (gen() % 3) {
        case 0: text.insert(pos, 1, alphabet[gen() % alphabet.size()]); break;
        case 1: if (pos < text.size()) text.erase(pos, 1); break;
        default: if (pos < text.size()) text[pos] = alphabet[gen() % alphabet.size()]; break;
      }
    }
    try {
      auto cfg = parse_config(text);
      ++parsed;
      EXPECT_EQ(parse_config(canonical_text(cfg)), cfg) << text;
    } catch (const ConfigError&) {
    }
  }
  EXPECT_GT(parsed, 0);
}
