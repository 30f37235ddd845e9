#pragma once

// Experiment configuration: a line-oriented sectioned text file.
//
//   [task]        name, repeats, max_steps, seed, workers
//   [params]      name = scalar | {a, b, ...} | start : step : stop
//   [aggregate]   result_id : stat, ... @ timepoint [by expr, ...]
//   [checkpoint]  interval_seconds, keep, path
//   [plot]        template, script
//
// `#` starts a comment outside quoted strings.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "sweepforge/aggregate.hpp"
#include "sweepforge/error.hpp"
#include "sweepforge/io.hpp"
#include "sweepforge/space.hpp"
#include "sweepforge/value.hpp"

namespace sweepforge {

struct TaskSection {
  std::string name = "run";
  std::uint64_t repeats = 1;
  std::optional<std::uint64_t> max_steps;
  std::uint64_t seed = 0;
  std::optional<unsigned> workers;  // nullopt = detected core count

  bool operator==(const TaskSection&) const = default;
};

struct CheckpointPolicy {
  double interval_seconds = 60;
  unsigned keep = 2;
  std::optional<std::string> path;

  bool operator==(const CheckpointPolicy&) const = default;
};

struct PlotSection {
  std::optional<std::string> template_path;
  std::optional<std::string> script;

  bool operator==(const PlotSection&) const = default;
};

struct Config {
  TaskSection task;
  ParameterSpace space;
  std::vector<AggregationRule> rules;
  CheckpointPolicy checkpoint;
  PlotSection plot;

  bool operator==(const Config&) const = default;
};

namespace detail {

struct Scalar {
  Value value;
  std::string raw;
  std::size_t column = 0;
};

struct ParsedValue {
  enum class Shape { scalar, set, range } shape = Shape::scalar;
  std::vector<Scalar> items;
};

inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

inline bool looks_integer(std::string_view s) {
  if (!s.empty() && (s[0] == '+' || s[0] == '-')) s.remove_prefix(1);
  if (s.empty()) return false;
  for (char c : s)
    if (!is_digit(c)) return false;
  return true;
}

inline bool looks_real(std::string_view s) {
  if (!s.empty() && (s[0] == '+' || s[0] == '-')) s.remove_prefix(1);
  std::size_t i = 0, digits = 0;
  while (i < s.size() && is_digit(s[i])) ++i, ++digits;
  if (i < s.size() && s[i] == '.') {
    ++i;
    while (i < s.size() && is_digit(s[i])) ++i, ++digits;
  }
  if (digits == 0) return false;
  if (i < s.size() && (s[i] == 'e' || s[i] == 'E')) {
    ++i;
    if (i < s.size() && (s[i] == '+' || s[i] == '-')) ++i;
    std::size_t exp_digits = 0;
    while (i < s.size() && is_digit(s[i])) ++i, ++exp_digits;
    if (exp_digits == 0) return false;
  }
  return i == s.size();
}

/// Splits on `sep` outside double quotes; returns (piece, offset) pairs.
inline std::vector<std::pair<std::string_view, std::size_t>> split_unquoted(std::string_view s, char sep) {
  std::vector<std::pair<std::string_view, std::size_t>> out;
  bool quoted = false;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && quoted) {
      ++i;
    } else if (s[i] == '"') {
      quoted = !quoted;
    } else if (s[i] == sep && !quoted) {
      out.emplace_back(s.substr(start, i - start), start);
      start = i + 1;
    }
  }
  out.emplace_back(s.substr(start), start);
  return out;
}

class LineError : public std::exception {
 public:
  LineError(std::size_t col, std::string msg) : column(col), message(std::move(msg)) {}
  const char* what() const noexcept override { return message.c_str(); }
  std::size_t column;
  std::string message;
};

inline Scalar parse_scalar(std::string_view text, std::size_t column) {
  std::size_t lead = 0;
  while (lead < text.size() && (text[lead] == ' ' || text[lead] == '\t')) ++lead;
  column += lead;
  text = trim(text);
  Scalar s;
  s.raw = std::string(text);
  s.column = column;
  if (text.empty()) throw LineError(column, "expected a value");
  if (text.front() == '"') {
    if (text.size() < 2 || text.back() != '"') throw LineError(column, "expected closing '\"'");
    auto body = unquote_text(text.substr(1, text.size() - 2));
    if (!body) throw LineError(column, "invalid escape in string");
    s.value = std::move(*body);
    return s;
  }
  if (looks_integer(text)) {
    if (auto i = parse_integer<std::int64_t>(text)) {
      s.value = *i;
      return s;
    }
    if (text.front() != '-' && parse_integer<std::uint64_t>(text)) {
      s.value = std::string(text);  // only meaningful for `seed`
      return s;
    }
    throw LineError(column, "integer out of range");
  }
  if (looks_real(text)) {
    auto d = parse_double(text);
    if (!d || !std::isfinite(*d)) throw LineError(column, "real value out of range");
    s.value = *d;
    return s;
  }
  for (char c : text)
    if (c == ' ' || c == '\t' || c == '{' || c == '}' || c == ',' || c == ':' || c == '"')
      throw LineError(column, std::string("unexpected '") + c + "' in value");
  s.value = std::string(text);
  return s;
}

inline ParsedValue parse_value(std::string_view text, std::size_t column) {
  ParsedValue out;
  std::size_t lead = 0;
  while (lead < text.size() && (text[lead] == ' ' || text[lead] == '\t')) ++lead;
  std::string_view t = trim(text);
  const std::size_t col = column + lead;
  if (!t.empty() && t.front() == '{') {
    if (t.back() != '}') throw LineError(col + t.size(), "expected '}'");
    out.shape = ParsedValue::Shape::set;
    auto inner = t.substr(1, t.size() - 2);
    for (auto [piece, off] : split_unquoted(inner, ',')) out.items.push_back(parse_scalar(piece, col + 1 + off));
    return out;
  }
  auto parts = split_unquoted(t, ':');
  if (parts.size() == 3) {
    out.shape = ParsedValue::Shape::range;
    for (auto [piece, off] : parts) out.items.push_back(parse_scalar(piece, col + off));
    return out;
  }
  if (parts.size() != 1) throw LineError(col, "expected a scalar, '{a, b}' or 'start : step : stop'");
  out.items.push_back(parse_scalar(t, col));
  return out;
}

inline std::vector<Value> expand_values(const ParsedValue& v) {
  std::vector<Value> values;
  if (v.shape == ParsedValue::Shape::range) {
    bool all_int = true;
    double d[3];
    for (int i = 0; i < 3; ++i) {
      const auto& item = v.items[i];
      auto num = as_number(item.value);
      if (!num) throw LineError(item.column, "range bounds must be numbers");
      all_int = all_int && std::holds_alternative<std::int64_t>(item.value);
      d[i] = *num;
    }
    try {
      if (all_int)
        return expand_range(std::get<std::int64_t>(v.items[0].value), std::get<std::int64_t>(v.items[1].value),
                            std::get<std::int64_t>(v.items[2].value));
      return expand_range(d[0], d[1], d[2]);
    } catch (const ConfigError& e) {
      throw LineError(v.items[1].column, e.what());
    }
  }
  bool any_real = false, any_int = false, any_text = false;
  for (const auto& item : v.items) {
    if (looks_integer(item.raw) && std::holds_alternative<std::string>(item.value))
      throw LineError(item.column, "integer out of range");
    any_real |= std::holds_alternative<double>(item.value);
    any_int |= std::holds_alternative<std::int64_t>(item.value);
    any_text |= std::holds_alternative<std::string>(item.value);
  }
  if (any_text && (any_real || any_int))
    throw LineError(v.items.front().column, "a parameter's values must all be numbers or all be text");
  for (const auto& item : v.items) {
    if (any_real && std::holds_alternative<std::int64_t>(item.value))
      values.emplace_back(static_cast<double>(std::get<std::int64_t>(item.value)));
    else
      values.push_back(item.value);
    for (std::size_t j = 0; j + 1 < values.size(); ++j)
      if (values[j] == values.back())
        throw LineError(item.column, "duplicate value " + display_text(values.back()));
  }
  return values;
}

inline bool valid_run_name(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!(is_identifier(std::string_view(&c, 1)) || is_digit(c) || c == '-' || c == '.')) return false;
  return s != "." && s != "..";
}

inline std::string strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (quoted && line[i] == '\\') {
      ++i;
    } else if (line[i] == '"') {
      quoted = !quoted;
    } else if (line[i] == '#' && !quoted) {
      return std::string(line.substr(0, i));
    }
  }
  return std::string(line);
}

}  // namespace detail

/// Parses and validates a configuration. On failure throws ConfigError with
/// every problem found (line, column, message).
inline Config parse_config(std::string_view text) {
  using namespace detail;
  Config cfg;
  std::vector<Diagnostic> errors;
  std::vector<ParameterSpec> specs;
  std::vector<std::pair<AggregationRule, std::size_t>> rules;  // with line
  std::set<std::string> sections_seen;
  std::map<std::string, std::set<std::string>> keys_seen;
  std::string section;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::string body = strip_comment(raw);
    std::string_view line = trim(body);
    if (line.empty()) continue;
    const std::size_t indent = body.find_first_not_of(" \t") + 1;
    auto error = [&](std::size_t col, std::string msg) { errors.push_back({line_no, col, std::move(msg)}); };

    if (line.front() == '[') {
      if (line.back() != ']') {
        error(indent + line.size(), "expected ']'");
        section = "?";
        continue;
      }
      std::string name(trim(line.substr(1, line.size() - 2)));
      static const std::set<std::string> known = {"task", "params", "aggregate", "checkpoint", "plot"};
      if (!known.count(name)) {
        error(indent + 1, "unknown section '" + name + "'");
        section = "?";
      } else if (!sections_seen.insert(name).second) {
        error(indent + 1, "duplicate section '" + name + "'");
        section = "?";
      } else {
        section = name;
      }
      continue;
    }
    if (section.empty()) {
      error(indent, "entry outside of any section");
      continue;
    }
    if (section == "?") continue;

    if (section == "aggregate") {
      try {
        rules.emplace_back(parse_rule(line), line_no);
      } catch (const ConfigError& e) {
        const auto& d = e.diagnostics().front();
        error(indent + (d.column ? d.column - 1 : 0), d.message);
      }
      continue;
    }

    auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      error(indent + line.size(), "expected '='");
      continue;
    }
    std::string key(trim(line.substr(0, eq)));
    if (!is_identifier(key)) {
      error(indent, "expected a key name");
      continue;
    }
    if (!keys_seen[section].insert(key).second) {
      error(indent, section == "params" ? "duplicate parameter '" + key + "'" : "duplicate key '" + key + "'");
      continue;
    }
    try {
      ParsedValue value = parse_value(line.substr(eq + 1), indent + eq + 1);
      if (section == "params") {
        specs.push_back({key, expand_values(value)});
        continue;
      }
      if (value.shape != ParsedValue::Shape::scalar)
        throw LineError(value.items.front().column, "'" + key + "' takes a single value");
      const Scalar& s = value.items.front();
      auto need_uint = [&](std::uint64_t min) -> std::uint64_t {
        const auto* i = std::get_if<std::int64_t>(&s.value);
        if (!i || *i < static_cast<std::int64_t>(min))
          throw LineError(s.column, "'" + key + "' must be an integer >= " + std::to_string(min));
        return static_cast<std::uint64_t>(*i);
      };
      auto need_text = [&]() -> std::string {
        const auto* t = std::get_if<std::string>(&s.value);
        if (!t || t->empty()) throw LineError(s.column, "'" + key + "' must be text");
        return *t;
      };
      if (section == "task") {
        if (key == "name") {
          auto n = display_text(s.value);
          if (!valid_run_name(n)) throw LineError(s.column, "task name may only use letters, digits, '_', '-', '.'");
          cfg.task.name = n;
        } else if (key == "repeats") {
          cfg.task.repeats = need_uint(1);
        } else if (key == "max_steps") {
          cfg.task.max_steps = need_uint(0);
        } else if (key == "seed") {
          auto u = parse_integer<std::uint64_t>(s.raw);
          if (!u) throw LineError(s.column, "'seed' must be an unsigned 64-bit integer");
          cfg.task.seed = *u;
        } else if (key == "workers") {
          if (s.value == Value{std::string("auto")}) {
            cfg.task.workers.reset();
          } else {
            auto w = need_uint(1);
            if (w > 4096) throw LineError(s.column, "'workers' must be at most 4096");
            cfg.task.workers = static_cast<unsigned>(w);
          }
        } else {
          throw LineError(indent, "unknown key '" + key + "' in [task]");
        }
      } else if (section == "checkpoint") {
        if (key == "interval_seconds") {
          auto d = as_number(s.value);
          if (!d || *d < 0) throw LineError(s.column, "'interval_seconds' must be a number >= 0");
          cfg.checkpoint.interval_seconds = *d;
        } else if (key == "keep") {
          auto k = need_uint(1);
          if (k > 1000) throw LineError(s.column, "'keep' must be at most 1000");
          cfg.checkpoint.keep = static_cast<unsigned>(k);
        } else if (key == "path") {
          cfg.checkpoint.path = need_text();
        } else {
          throw LineError(indent, "unknown key '" + key + "' in [checkpoint]");
        }
      } else if (section == "plot") {
        if (key == "template") {
          cfg.plot.template_path = need_text();
        } else if (key == "script") {
          cfg.plot.script = need_text();
        } else {
          throw LineError(indent, "unknown key '" + key + "' in [plot]");
        }
      }
    } catch (const LineError& e) {
      error(e.column, e.message);
    }
  }

  try {
    cfg.space = ParameterSpace(std::move(specs));
  } catch (const ConfigError& e) {
    errors.push_back({0, 0, e.what()});
  }

  std::map<std::string, int> seen_ids;
  for (const auto& [rule, _] : rules) ++seen_ids[rule.result_id];
  std::map<std::string, int> occurrence;
  for (auto& [rule, line] : rules) {
    auto error = [&, ln = line](std::string msg) { errors.push_back({ln, 0, std::move(msg)}); };
    int n = ++occurrence[rule.result_id];
    if (n > 1) {
      rule.id = rule.result_id + "_" + std::to_string(n);
      if (seen_ids.count(rule.id)) error("rule id '" + rule.id + "' collides with another result id");
    }
    if (rule.timepoint.is_task_level())
      error("rule '" + rule.id + "' uses " + rule.timepoint.to_string() +
            "; task-level time points carry no per-run values");
    for (const auto& cond : rule.conditions) {
      for (const auto& name : expr::names(cond)) {
        const ParameterSpec* spec = cfg.space.find(name);
        if (!spec)
          error("rule '" + rule.id + "' references undeclared parameter '" + name + "'");
        else if (!is_numeric(spec->values.front()))
          error("rule '" + rule.id + "' references non-numeric parameter '" + name + "'");
      }
    }
    cfg.rules.push_back(rule);
  }

  if (!errors.empty()) throw ConfigError(std::move(errors));
  if (cfg.space.point_count() > kMaxIndex / cfg.task.repeats)
    throw ConfigError("points x repeats exceeds 2^53 units");
  return cfg;
}

inline Config load_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

namespace detail {

inline std::string params_text(const ParameterSpace& space) {
  std::string out = "[params]\n";
  for (const auto& spec : space.specs()) {
    out += spec.name + " = ";
    if (spec.values.size() == 1) {
      out += canonical_text(spec.values.front());
    } else {
      out += '{';
      for (std::size_t i = 0; i < spec.values.size(); ++i) out += (i ? ", " : "") + canonical_text(spec.values[i]);
      out += '}';
    }
    out += '\n';
  }
  return out;
}

inline std::string task_text(const TaskSection& t, bool with_workers) {
  std::string out = "[task]\nname = " + quote_text(t.name) + "\nrepeats = " + std::to_string(t.repeats) + "\n";
  if (t.max_steps) out += "max_steps = " + std::to_string(*t.max_steps) + "\n";
  out += "seed = " + std::to_string(t.seed) + "\n";
  if (with_workers) out += "workers = " + (t.workers ? std::to_string(*t.workers) : std::string("auto")) + "\n";
  return out;
}

inline std::string rules_text(const std::vector<AggregationRule>& rules) {
  std::string out = "[aggregate]\n";
  for (const auto& r : rules) out += r.to_text() + "\n";
  return out;
}

}  // namespace detail

/// Full canonical form: comments and layout dropped, values normalised.
/// parse_config(canonical_text(c)) == c.
inline std::string canonical_text(const Config& c) {
  std::string out = detail::task_text(c.task, true) + detail::params_text(c.space) + detail::rules_text(c.rules);
  out += "[checkpoint]\ninterval_seconds = " + canonical_text(Value{c.checkpoint.interval_seconds}) +
         "\nkeep = " + std::to_string(c.checkpoint.keep) + "\n";
  if (c.checkpoint.path) out += "path = " + quote_text(*c.checkpoint.path) + "\n";
  out += "[plot]\n";
  if (c.plot.template_path) out += "template = " + quote_text(*c.plot.template_path) + "\n";
  if (c.plot.script) out += "script = " + quote_text(*c.plot.script) + "\n";
  return out;
}

/// The part of the canonical form that determines results: task identity,
/// repeats, step cap, seed, parameters and rules. Worker count, checkpoint
/// policy and plotting are excluded so a run can move between machines.
inline std::string experiment_text(const Config& c) {
  return detail::task_text(c.task, false) + detail::params_text(c.space) + detail::rules_text(c.rules);
}

/// 256-bit digest (hex) binding checkpoints to an experiment.
inline std::string canonical_hash(const Config& c) { return sha256_hex(experiment_text(c)); }

/// Total number of run units for a config.
inline std::uint64_t units_total(const Config& c) { return c.space.point_count() * c.task.repeats; }

}  // namespace sweepforge
