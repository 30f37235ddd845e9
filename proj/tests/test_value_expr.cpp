#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sweepforge/expr.hpp"
#include "sweepforge/value.hpp"

using namespace sweepforge;

namespace {

expr::Resolver bind(std::map<std::string, double> vars) {
  return [vars = std::move(vars)](std::string_view name) -> std::optional<expr::Result> {
    auto it = vars.find(std::string(name));
    if (it == vars.end()) return std::nullopt;
    return it->second;
  };
}

}  // namespace

TEST(Value, FormatDoubleIsShortestRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(1000), "1000");
  EXPECT_EQ(format_double(-2.5), "-2.5");
  EXPECT_EQ(format_double(NAN), "nan");
  EXPECT_EQ(format_double(INFINITY), "inf");
  EXPECT_EQ(format_double(-INFINITY), "-inf");
  std::mt19937_64 gen(3);
  for (int i = 0; i < 1000; ++i) {
    double x = std::ldexp(static_cast<double>(gen() >> 11), static_cast<int>(gen() % 200) - 100);
    EXPECT_EQ(*parse_double(format_double(x)), x);
  }
}

TEST(Value, CanonicalTextKeepsKind) {
  EXPECT_EQ(canonical_text(Value{std::int64_t{3}}), "3");
  EXPECT_EQ(canonical_text(Value{3.0}), "3.0");
  EXPECT_EQ(canonical_text(Value{std::string("a b")}), "\"a b\"");
  for (Value v : {Value{std::int64_t{-7}}, Value{2.5}, Value{1e300}, Value{std::string("q\"\\\n")}})
    EXPECT_EQ(parse_canonical_value(canonical_text(v)), v);
}

TEST(Value, QuoteRoundTrip) {
  std::string s = "tab\there \"quoted\" back\\slash\nline";
  auto q = quote_text(s);
  EXPECT_EQ(unquote_text(std::string_view(q).substr(1, q.size() - 2)), s);
}

TEST(Expr, Arithmetic) {
  auto r = bind({{"x1", 2}, {"x2", 3}});
  EXPECT_DOUBLE_EQ(expr::evaluate_number(expr::parse("x1*x2"), r), 6);
  EXPECT_DOUBLE_EQ(expr::evaluate_number(expr::parse("1+2*3"), r), 7);
  EXPECT_DOUBLE_EQ(expr::evaluate_number(expr::parse("(1+2)*3"), r), 9);
  EXPECT_DOUBLE_EQ(expr::evaluate_number(expr::parse("2^3^2"), r), 512);
  EXPECT_DOUBLE_EQ(expr::evaluate_number(expr::parse("-2^2"), r), -4);
  EXPECT_DOUBLE_EQ(expr::evaluate_number(expr::parse("2^-1"), r), 0.5);
  EXPECT_DOUBLE_EQ(expr::evaluate_number(expr::parse("x2-x1-1"), r), 0);
  EXPECT_DOUBLE_EQ(expr::evaluate_number(expr::parse("floor(x2/x1)"), r), 1);
  EXPECT_NEAR(expr::evaluate_number(expr::parse("log(exp(1.5))"), r), 1.5, 1e-15);
}

TEST(Expr, TextConcatenation) {
  auto r = [](std::string_view n) -> std::optional<expr::Result> {
    if (n == "run.name") return expr::Result{std::string("sir")};
    return std::nullopt;
  };
  auto v = expr::evaluate(expr::parse("run.name & \".\" & 2"), r);
  EXPECT_EQ(std::get<std::string>(v), "sir.2");
}

TEST(Expr, Errors) {
  auto r = bind({{"x", 0}});
  EXPECT_THROW(expr::evaluate(expr::parse("1/x"), r), ExprError);
  EXPECT_THROW(expr::evaluate(expr::parse("log(x)"), r), ExprError);
  EXPECT_THROW(expr::evaluate(expr::parse("y"), r), ExprError);
  EXPECT_THROW(expr::evaluate(expr::parse("exp(1000)"), r), ExprError);
  EXPECT_THROW(expr::parse("1 +"), ExprError);
  EXPECT_THROW(expr::parse("(1"), ExprError);
  EXPECT_THROW(expr::parse("sqrt(2)"), ExprError);
  EXPECT_THROW(expr::parse(""), ExprError);
}

TEST(Expr, DeepNestingIsRejectedNotCrashing) {
  std::string deep(100000, '(');
  EXPECT_THROW(expr::parse(deep + "1" + std::string(100000, ')')), ExprError);
  std::string minus(5000, '-');
  EXPECT_THROW(expr::parse(minus + "1"), ExprError);
}

TEST(Expr, CanonicalTextRoundTrip) {
  for (const char* src : {"x1", "x1*x2", "x1 + x2 * 3", "(x1+x2)*3", "-x^2", "(-x)^2", "2^3^2", "(2^3)^2",
                          "a-(b-c)", "a-b-c", "a/(b*c)", "log(x)+floor(y/2)", "\"t\" & x", "(x1, x2)"}) {
    auto n = expr::parse(src);
    auto text = expr::to_text(n);
    EXPECT_EQ(expr::parse(text), n) << src << " -> " << text;
    EXPECT_EQ(expr::to_text(expr::parse(text)), text);
  }
  EXPECT_EQ(expr::to_text(expr::parse(" x1 * ( x2 ) ")), "x1*x2");
  EXPECT_EQ(expr::to_text(expr::parse("(a+b)*c")), "(a+b)*c");
}

TEST(Expr, RandomTreesRoundTrip) {
  std::mt19937_64 gen(11);
  std::function<std::string(int)> make = [&](int depth) -> std::string {
    if (depth == 0 || gen() % 3 == 0) {
      switch (gen() % 3) {
        case 0: return "x" + std::to_string(gen() % 3);
        case 1: return std::to_string(gen() % 10);
        default: return format_double(static_cast<double>(gen() % 1000) / 8);
      }
    }
    static const char* ops[] = {"+", "-", "*", "/", "^"};
    switch (gen() % 4) {
      case 0: return "-" + make(depth - 1);
      case 1: return "floor(" + make(depth - 1) + ")";
      default: return "(" + make(depth - 1) + ops[gen() % 5] + make(depth - 1) + ")";
    }
  };
  for (int i = 0; i < 500; ++i) {
    auto src = make(6);
    auto n = expr::parse(src);
    EXPECT_EQ(expr::parse(expr::to_text(n)), n) << src;
  }
}

TEST(Expr, NamesAndTuples) {
  auto n = expr::parse("(x1, x2*x1, 3)");
  EXPECT_EQ(expr::names(n), (std::vector<std::string>{"x1", "x2"}));
  EXPECT_EQ(expr::flatten_tuple(n).size(), 3u);
  EXPECT_EQ(expr::flatten_tuple(expr::parse("x")).size(), 1u);
}
