#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sweepforge/error.hpp"
#include "sweepforge/expr.hpp"
#include "sweepforge/space.hpp"
#include "sweepforge/timepoint.hpp"
#include "sweepforge/value.hpp"

namespace sweepforge {

/// A value recorded by task code while a time point was being fired.
struct Observation {
  TimePoint timepoint;
  std::string name;
  double value = 0;

  friend bool operator==(const Observation&, const Observation&) = default;
};

/// Evaluation failure attributed to one unit (bad key, non-finite value).
class RuleError : public Error {
 public:
  using Error::Error;
};

enum class StatKind { count, sum, mean, var, stderr_, min, max, hist };

struct StatSpec {
  StatKind kind = StatKind::count;
  unsigned bins = 0;  // hist only

  bool operator==(const StatSpec&) const = default;

  std::string to_string() const {
    switch (kind) {
      case StatKind::count: return "count";
      case StatKind::sum: return "sum";
      case StatKind::mean: return "mean";
      case StatKind::var: return "var";
      case StatKind::stderr_: return "stderr";
      case StatKind::min: return "min";
      case StatKind::max: return "max";
      case StatKind::hist: return "hist(" + std::to_string(bins) + ")";
    }
    return {};
  }
};

inline constexpr unsigned kMaxHistBins = 10000;

inline std::string_view trim(std::string_view s) noexcept {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::optional<StatSpec> parse_stat(std::string_view s) {
  s = trim(s);
  constexpr std::pair<std::string_view, StatKind> simple[] = {
      {"count", StatKind::count}, {"sum", StatKind::sum},       {"mean", StatKind::mean},
      {"var", StatKind::var},     {"stderr", StatKind::stderr_}, {"min", StatKind::min},
      {"max", StatKind::max}};
  for (auto [name, kind] : simple)
    if (s == name) return StatSpec{kind, 0};
  if (s.size() > 5 && s.substr(0, 5) == "hist(" && s.back() == ')') {
    auto k = parse_integer<unsigned>(trim(s.substr(5, s.size() - 6)));
    if (k && *k >= 1 && *k <= kMaxHistBins) return StatSpec{StatKind::hist, *k};
  }
  return std::nullopt;
}

/// What to collect (result_id), when (timepoint), how (stats) and keyed by
/// which expressions over numeric parameters (conditions). No conditions
/// means a single global cell.
struct AggregationRule {
  std::string id;         // unique table name; equals result_id unless repeated
  std::string result_id;  // name passed to RunContext::record
  std::vector<StatSpec> stats;
  TimePoint timepoint;
  std::vector<expr::Node> conditions;  // flattened key components

  bool has(StatKind k) const noexcept {
    return std::any_of(stats.begin(), stats.end(), [k](const StatSpec& s) { return s.kind == k; });
  }
  unsigned hist_bins() const noexcept {
    for (const auto& s : stats)
      if (s.kind == StatKind::hist) return s.bins;
    return 0;
  }
  bool keeps_samples() const noexcept { return has(StatKind::hist); }

  std::vector<std::string> condition_texts() const {
    std::vector<std::string> out;
    for (const auto& c : conditions) out.push_back(expr::to_text(c));
    return out;
  }

  /// Rule line in canonical form (no id; ids are derived from position).
  std::string to_text() const {
    std::string out = result_id + " : ";
    for (std::size_t i = 0; i < stats.size(); ++i) out += (i ? ", " : "") + stats[i].to_string();
    out += " @ " + timepoint.to_string();
    if (!conditions.empty()) {
      out += " by ";
      auto texts = condition_texts();
      for (std::size_t i = 0; i < texts.size(); ++i) out += (i ? ", " : "") + texts[i];
    }
    return out;
  }

  bool operator==(const AggregationRule& o) const {
    return id == o.id && result_id == o.result_id && stats == o.stats && timepoint == o.timepoint &&
           conditions == o.conditions;
  }
};

/// Parses `result_id : stat, ... @ timepoint [by expr, ...]`. The id is set
/// to result_id; callers disambiguate repeats. Throws ConfigError whose single
/// diagnostic carries a column (line left 0).
inline AggregationRule parse_rule(std::string_view line) {
  auto fail = [&](std::size_t col, const std::string& msg) -> AggregationRule {
    throw ConfigError(std::vector<Diagnostic>{{0, col, msg}});
  };
  AggregationRule rule;
  const auto colon = line.find(':');
  if (colon == std::string_view::npos) return fail(1, "expected ':' after result id");
  rule.result_id = std::string(trim(line.substr(0, colon)));
  if (!is_identifier(rule.result_id)) return fail(1, "expected a result id");
  rule.id = rule.result_id;

  const auto at = line.find('@', colon);
  if (at == std::string_view::npos) return fail(line.size() + 1, "expected '@' and a time point");
  std::size_t start = colon + 1;
  for (;;) {
    auto comma = line.find(',', start);
    std::size_t end = std::min(comma == std::string_view::npos ? at : comma, at);
    auto stat = parse_stat(line.substr(start, end - start));
    if (!stat) return fail(start + 1, "expected a statistic (count, sum, mean, var, stderr, min, max, hist(k))");
    if (std::find(rule.stats.begin(), rule.stats.end(), *stat) != rule.stats.end() ||
        (stat->kind == StatKind::hist && rule.has(StatKind::hist)))
      return fail(start + 1, "statistic '" + stat->to_string() + "' listed twice");
    rule.stats.push_back(*stat);
    if (end == at) break;
    start = end + 1;
  }

  std::string_view rest = line.substr(at + 1);
  std::size_t rest_col = at + 2;
  while (!rest.empty() && (rest.front() == ' ' || rest.front() == '\t')) {
    rest.remove_prefix(1);
    ++rest_col;
  }
  std::size_t tp_len = 0;
  while (tp_len < rest.size() && rest[tp_len] != ' ' && rest[tp_len] != '\t') ++tp_len;
  auto tp = TimePoint::parse(rest.substr(0, tp_len));
  if (!tp) return fail(rest_col, "expected a time point");
  rule.timepoint = *tp;

  std::string_view tail = rest.substr(tp_len);
  std::size_t tail_col = rest_col + tp_len;
  while (!tail.empty() && (tail.front() == ' ' || tail.front() == '\t')) {
    tail.remove_prefix(1);
    ++tail_col;
  }
  if (tail.empty()) return rule;
  if (tail.substr(0, 2) != "by" || tail.size() == 2 || !(tail[2] == ' ' || tail[2] == '\t' || tail[2] == '('))
    return fail(tail_col, "expected 'by' or end of line");
  auto list = trim(tail.substr(2));
  if (list.empty()) return fail(tail_col + 2, "expected a condition expression after 'by'");
  try {
    rule.conditions = expr::flatten_tuple(expr::parse("(" + std::string(list) + ")"));
  } catch (const ExprError& e) {
    return fail(tail_col + 3, std::string("in condition: ") + e.what());
  }
  for (const auto& c : rule.conditions)
    if (c.kind == expr::Node::Kind::text) return fail(tail_col + 3, "condition must be numeric");
  return rule;
}

/// Cell identity: the evaluated key tuple. -0 is folded into 0 so keys compare
/// and print consistently.
struct CellKey {
  std::vector<double> values;

  auto operator<=>(const CellKey&) const = default;

  std::string to_text() const {
    if (values.empty()) return "*";
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + format_double(values[i]);
    return out;
  }

  static std::optional<CellKey> parse(std::string_view s) {
    CellKey k;
    if (s == "*") return k;
    while (true) {
      auto comma = s.find(',');
      auto v = parse_double(s.substr(0, comma));
      if (!v || !std::isfinite(*v)) return std::nullopt;
      k.values.push_back(*v == 0 ? 0.0 : *v);
      if (comma == std::string_view::npos) break;
      s.remove_prefix(comma + 1);
    }
    return k;
  }
};

/// Resolver exposing the numeric parameters of a point.
inline expr::Resolver point_resolver(const ParameterPoint& point) {
  return [&point](std::string_view name) -> std::optional<expr::Result> {
    const Value* v = point.find(name);
    if (!v) return std::nullopt;
    if (auto d = as_number(*v)) return expr::Result{*d};
    return expr::Result{std::get<std::string>(*v)};
  };
}

inline CellKey eval_condition(const std::vector<expr::Node>& conditions, const ParameterPoint& point) {
  CellKey key;
  auto resolve = point_resolver(point);
  for (const auto& c : conditions) {
    double v = 0;
    try {
      v = expr::evaluate_number(c, resolve);
    } catch (const ExprError& e) {
      throw RuleError("condition '" + expr::to_text(c) + "': " + e.what());
    }
    key.values.push_back(v == 0 ? 0.0 : v);
  }
  return key;
}

inline CellKey eval_condition(const AggregationRule& rule, const ParameterPoint& point) {
  return eval_condition(rule.conditions, point);
}

/// Streaming summary of a set of observations (Welford / Chan et al.).
/// `samples` is only populated for rules that build a histogram, because bin
/// edges depend on the final min/max of the whole cell.
struct PartialStat {
  std::uint64_t count = 0;
  double mean = 0;
  double m2 = 0;
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();
  std::vector<double> samples;

  bool empty() const noexcept { return count == 0; }

  void observe(double x, bool keep_sample = false) {
    ++count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
    min = std::min(min, x);
    max = std::max(max, x);
    if (keep_sample) samples.push_back(x);
  }

  double sample_variance() const noexcept {
    return count < 2 ? std::numeric_limits<double>::quiet_NaN() : m2 / static_cast<double>(count - 1);
  }
  double standard_error() const noexcept {
    return count < 2 ? std::numeric_limits<double>::quiet_NaN()
                     : std::sqrt(sample_variance() / static_cast<double>(count));
  }

  friend bool operator==(const PartialStat&, const PartialStat&) = default;
};

inline PartialStat merge(const PartialStat& a, const PartialStat& b) {
  if (b.empty()) return a;
  if (a.empty()) return b;
  PartialStat out;
  out.count = a.count + b.count;
  const double n = static_cast<double>(out.count);
  const double na = static_cast<double>(a.count);
  const double nb = static_cast<double>(b.count);
  const double delta = b.mean - a.mean;
  out.mean = a.mean + delta * (nb / n);
  out.m2 = a.m2 + b.m2 + delta * delta * (na * nb / n);
  out.min = std::min(a.min, b.min);
  out.max = std::max(a.max, b.max);
  out.samples = a.samples;
  out.samples.insert(out.samples.end(), b.samples.begin(), b.samples.end());
  return out;
}

/// Equal-width bins over [min, max], right-open except the last, which is
/// closed. A zero-width range puts everything in the last bin.
inline std::vector<std::uint64_t> histogram(const std::vector<double>& samples, double lo, double hi,
                                            unsigned bins) {
  std::vector<std::uint64_t> counts(bins, 0);
  if (bins == 0) return counts;
  const double width = hi - lo;
  for (double v : samples) {
    std::size_t b = bins - 1;
    if (width > 0) {
      double pos = std::floor((v - lo) / width * bins);
      if (pos < 0) pos = 0;
      b = std::min<std::size_t>(bins - 1, static_cast<std::size_t>(pos));
    }
    ++counts[b];
  }
  return counts;
}

/// One unit's contribution: at most one cell per rule (a unit evaluates every
/// condition at its own parameter point).
struct UnitContribution {
  std::uint64_t unit_index = 0;
  std::vector<std::optional<std::pair<CellKey, PartialStat>>> per_rule;
};

/// Folds a unit's observation buffer into per-rule partial statistics.
/// Throws RuleError on a bad key or a non-finite value.
inline UnitContribution reduce_unit(const std::vector<AggregationRule>& rules, const ParameterPoint& point,
                                    std::uint64_t unit_index, const std::vector<Observation>& observations) {
  UnitContribution out;
  out.unit_index = unit_index;
  out.per_rule.resize(rules.size());
  for (std::size_t r = 0; r < rules.size(); ++r) {
    const auto& rule = rules[r];
    PartialStat stat;
    for (const auto& obs : observations) {
      if (obs.name != rule.result_id || !(obs.timepoint == rule.timepoint)) continue;
      if (!std::isfinite(obs.value))
        throw RuleError("rule '" + rule.id + "': non-finite value " + format_double(obs.value));
      stat.observe(obs.value, rule.keeps_samples());
    }
    if (stat.empty()) continue;
    CellKey key;
    try {
      key = eval_condition(rule, point);
    } catch (const RuleError& e) {
      throw RuleError("rule '" + rule.id + "': " + e.what());
    }
    out.per_rule[r].emplace(std::move(key), std::move(stat));
  }
  return out;
}

/// A finalized rule: one row per cell, sorted by key. Every column is numeric;
/// undefined statistics are NaN and print as `nan`.
struct ResultTable {
  std::string rule_id;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    return columns.size();
  }

  std::string to_text() const {
    std::string out = "#";
    for (const auto& c : columns) out += " " + c;
    out += '\n';
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) out += (i ? " " : "") + format_double(row[i]);
      out += '\n';
    }
    return out;
  }
};

/// Committed aggregation state: rule -> cell -> unit -> partial. Owned by a
/// single consumer; commits are all-or-nothing per unit.
class AggState {
 public:
  using CellMap = std::map<CellKey, std::map<std::uint64_t, PartialStat>>;

  AggState() = default;
  explicit AggState(std::vector<AggregationRule> rules) : rules_(std::move(rules)), cells_(rules_.size()) {}

  const std::vector<AggregationRule>& rules() const noexcept { return rules_; }
  const CellMap& cells(std::size_t rule) const { return cells_.at(rule); }
  const std::set<std::uint64_t>& committed() const noexcept { return committed_; }
  bool is_committed(std::uint64_t unit) const { return committed_.count(unit) != 0; }

  /// Returns false (and changes nothing) if the unit was already committed.
  bool commit(const UnitContribution& c) {
    if (c.per_rule.size() != rules_.size()) throw std::invalid_argument("contribution does not match rules");
    if (!committed_.insert(c.unit_index).second) return false;
    for (std::size_t r = 0; r < rules_.size(); ++r)
      if (c.per_rule[r]) cells_[r][c.per_rule[r]->first][c.unit_index] = c.per_rule[r]->second;
    return true;
  }

  /// Restores a committed unit without contribution (checkpoint load).
  void mark_committed(std::uint64_t unit) { committed_.insert(unit); }

  /// Restores one partial (checkpoint load). The unit must be marked committed.
  void restore(std::size_t rule, CellKey key, std::uint64_t unit, PartialStat stat) {
    if (!is_committed(unit)) throw std::invalid_argument("partial for uncommitted unit");
    cells_.at(rule)[std::move(key)][unit] = std::move(stat);
  }

  ResultTable finalize(std::size_t rule_index) const {
    const auto& rule = rules_.at(rule_index);
    ResultTable table;
    table.rule_id = rule.id;
    table.columns = rule.condition_texts();
    table.columns.push_back("count");
    constexpr StatKind order[] = {StatKind::sum, StatKind::mean, StatKind::var,
                                  StatKind::stderr_, StatKind::min, StatKind::max};
    for (StatKind k : order)
      if (rule.has(k)) table.columns.push_back(StatSpec{k, 0}.to_string());
    const unsigned bins = rule.hist_bins();
    for (unsigned b = 1; b <= bins; ++b) table.columns.push_back("hist_" + std::to_string(b));

    for (const auto& [key, units] : cells_[rule_index]) {
      PartialStat total;
      for (const auto& [unit, partial] : units) total = merge(total, partial);
      std::vector<double> row = key.values;
      row.push_back(static_cast<double>(total.count));
      for (StatKind k : order) {
        if (!rule.has(k)) continue;
        switch (k) {
          case StatKind::sum: row.push_back(total.mean * static_cast<double>(total.count)); break;
          case StatKind::mean: row.push_back(total.mean); break;
          case StatKind::var: row.push_back(total.sample_variance()); break;
          case StatKind::stderr_: row.push_back(total.standard_error()); break;
          case StatKind::min: row.push_back(total.min); break;
          case StatKind::max: row.push_back(total.max); break;
          default: break;
        }
      }
      for (auto c : histogram(total.samples, total.min, total.max, bins)) row.push_back(static_cast<double>(c));
      table.rows.push_back(std::move(row));
    }
    return table;
  }

  std::vector<ResultTable> finalize_all() const {
    std::vector<ResultTable> out;
    for (std::size_t r = 0; r < rules_.size(); ++r) out.push_back(finalize(r));
    return out;
  }

  friend bool operator==(const AggState&, const AggState&) = default;

 private:
  std::vector<AggregationRule> rules_;
  std::vector<CellMap> cells_;
  std::set<std::uint64_t> committed_;
};

}  // namespace sweepforge
