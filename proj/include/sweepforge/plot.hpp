#pragma once

// Gnuplot output: data files per rule, default scripts, and a template engine
// that substitutes @{expr} directives with values from the run context.

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "sweepforge/aggregate.hpp"
#include "sweepforge/config.hpp"
#include "sweepforge/error.hpp"
#include "sweepforge/expr.hpp"
#include "sweepforge/io.hpp"

namespace sweepforge {

class PlotError : public Error {
 public:
  PlotError(std::size_t line, const std::string& msg)
      : Error("line " + std::to_string(line) + ": " + msg), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Template text split into literal runs and `@{expr}` directives.
class PlotTemplate {
 public:
  struct Segment {
    bool directive = false;
    std::string text;  // literal bytes, or the directive source
    expr::Node expr;
    std::size_t line = 1;
  };

  static PlotTemplate parse(std::string_view src) {
    PlotTemplate t;
    std::string literal;
    std::size_t line = 1;
    auto flush = [&] {
      if (!literal.empty()) t.segments_.push_back({false, std::move(literal), {}, line});
      literal.clear();
    };
    for (std::size_t i = 0; i < src.size();) {
      char c = src[i];
      if (c == '@' && i + 1 < src.size() && src[i + 1] == '@') {
        literal += '@';
        i += 2;
        continue;
      }
      if (c == '@' && i + 1 < src.size() && src[i + 1] == '{') {
        const std::size_t start_line = line;
        std::size_t j = i + 2;
        char quote = 0;
        for (; j < src.size(); ++j) {
          if (src[j] == '\n') ++line;
          if (quote) {
            if (src[j] == '\\') ++j;
            else if (src[j] == quote) quote = 0;
          } else if (src[j] == '"') {
            quote = '"';
          } else if (src[j] == '}') {
            break;
          }
        }
        if (j >= src.size()) throw PlotError(start_line, "unterminated '@{' directive");
        flush();
        Segment seg{true, std::string(src.substr(i + 2, j - i - 2)), {}, start_line};
        try {
          seg.expr = expr::parse(seg.text);
        } catch (const ExprError& e) {
          throw PlotError(start_line, std::string("bad directive '@{") + seg.text + "}': " + e.what());
        }
        t.segments_.push_back(std::move(seg));
        i = j + 1;
        continue;
      }
      if (c == '\n') ++line;
      literal += c;
      ++i;
    }
    flush();
    return t;
  }

  const std::vector<Segment>& segments() const noexcept { return segments_; }

 private:
  std::vector<Segment> segments_;
};

/// Makes `text` render to itself: every `@` becomes `@@`.
inline std::string escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    out += c;
    if (c == '@') out += '@';
  }
  return out;
}

/// Named values visible to templates.
class PlotContext {
 public:
  void bind(std::string name, expr::Result value) { bindings_[std::move(name)] = std::move(value); }

  const expr::Result* find(std::string_view name) const {
    auto it = bindings_.find(name);
    return it == bindings_.end() ? nullptr : &it->second;
  }

  expr::Resolver resolver() const {
    return [this](std::string_view name) -> std::optional<expr::Result> {
      if (const auto* r = find(name)) return *r;
      return std::nullopt;
    };
  }

  /// config.<param>, table.<id>.file, table.<id>.rows, run.name,
  /// run.units_total, run.completed.
  static PlotContext from_run(const Config& config, const std::vector<ResultTable>& tables,
                              const std::map<std::string, std::string>& files, std::uint64_t completed) {
    PlotContext ctx;
    for (const auto& spec : config.space.specs()) {
      auto scalar = [](const Value& v) -> expr::Scalar {
        if (auto d = as_number(v)) return *d;
        return std::get<std::string>(v);
      };
      if (spec.values.size() == 1) {
        expr::Scalar s = scalar(spec.values[0]);
        if (const auto* d = std::get_if<double>(&s)) ctx.bind("config." + spec.name, *d);
        else ctx.bind("config." + spec.name, std::get<std::string>(s));
      } else {
        std::vector<expr::Scalar> list;
        for (const auto& v : spec.values) list.push_back(scalar(v));
        ctx.bind("config." + spec.name, std::move(list));
      }
    }
    for (const auto& t : tables) {
      auto f = files.find(t.rule_id);
      if (f != files.end()) ctx.bind("table." + t.rule_id + ".file", f->second);
      ctx.bind("table." + t.rule_id + ".rows", static_cast<double>(t.rows.size()));
    }
    ctx.bind("run.name", config.task.name);
    ctx.bind("run.units_total", static_cast<double>(units_total(config)));
    ctx.bind("run.completed", static_cast<double>(completed));
    return ctx;
  }

 private:
  std::map<std::string, expr::Result, std::less<>> bindings_;
};

/// Text substituted for a directive value; lists are space-separated.
inline std::string render_value(const expr::Result& r) {
  auto scalar = [](const expr::Scalar& s) {
    if (const auto* d = std::get_if<double>(&s)) return format_double(*d);
    return std::get<std::string>(s);
  };
  if (const auto* d = std::get_if<double>(&r)) return format_double(*d);
  if (const auto* s = std::get_if<std::string>(&r)) return *s;
  std::string out;
  for (const auto& s : std::get<std::vector<expr::Scalar>>(r)) {
    if (!out.empty()) out += ' ';
    out += scalar(s);
  }
  return out;
}

inline std::string render(const PlotTemplate& tpl, const PlotContext& ctx) {
  std::string out;
  const auto resolve = ctx.resolver();
  for (const auto& seg : tpl.segments()) {
    if (!seg.directive) {
      out += seg.text;
      continue;
    }
    // A bare name may be bound to a list; anything else goes through evaluate.
    if (seg.expr.kind == expr::Node::Kind::name) {
      const auto* r = ctx.find(seg.expr.text);
      if (!r) throw PlotError(seg.line, "unknown binding '" + seg.expr.text + "'");
      out += render_value(*r);
      continue;
    }
    try {
      out += render_value(expr::evaluate(seg.expr, resolve));
    } catch (const ExprError& e) {
      throw PlotError(seg.line, e.what());
    }
  }
  return out;
}

inline std::string render(std::string_view tpl, const PlotContext& ctx) { return render(PlotTemplate::parse(tpl), ctx); }

/// Writes `<name>.<rule_id>.dat` for every table into `out_dir`; returns
/// rule_id -> file name (relative to `out_dir`).
inline std::map<std::string, std::string> emit_tables(const std::vector<ResultTable>& tables, const std::string& name,
                                                      const std::filesystem::path& out_dir) {
  std::map<std::string, std::string> files;
  for (const auto& t : tables) {
    std::string file = name + "." + t.rule_id + ".dat";
    atomic_write(out_dir / file, t.to_text());
    files[t.rule_id] = file;
  }
  return files;
}

namespace detail {

inline std::string gp_quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

}  // namespace detail

/// A standalone gnuplot script for one rule's table. Column positions are
/// taken from the table header (1-based).
inline std::string default_script(const AggregationRule& rule, const ResultTable& table, const std::string& data_file,
                                  const std::string& pdf_file) {
  using detail::gp_quote;
  auto col = [&](std::string_view c) -> std::size_t {
    std::size_t i = table.column(c);
    return i < table.columns.size() ? i + 1 : 0;
  };
  const std::size_t keys = rule.conditions.size();
  std::size_t y = col("mean");
  const std::size_t err = col("stderr");
  std::string out = "# " + rule.to_text() + "\n";
  if (!y) {
    y = keys + 1 < table.columns.size() ? keys + 2 : keys + 1;
    out += "# warning: rule has no mean; plotting column " + table.columns[y - 1] + "\n";
  }
  out += "set terminal pdf\n";
  out += "set output " + gp_quote(pdf_file) + "\n";
  const std::string style = err ? " with yerrorlines" : " with linespoints";
  const std::string tail = err ? ":" + std::to_string(err) : "";
  out += "set ylabel " + gp_quote(rule.result_id) + "\n";

  if (keys == 0) {
    out += "# warning: rule has no key columns; plotting a single point at x = 0\n";
    out += "plot " + gp_quote(data_file) + " using (0):" + std::to_string(y) + tail + style + " title " +
           gp_quote(rule.result_id) + "\n";
    return out;
  }

  const auto texts = rule.condition_texts();
  out += "set xlabel " + gp_quote(texts[0]) + "\n";
  std::set<double> series;
  if (keys >= 2)
    for (const auto& row : table.rows) series.insert(row[1]);
  if (series.empty()) {
    out += "plot " + gp_quote(data_file) + " using 1:" + std::to_string(y) + tail + style + " title " +
           gp_quote(rule.result_id) + "\n";
    return out;
  }
  out += "# one series per value of " + texts[1] + ", selected by filtering column 2";
  out += keys > 2 ? "; keys after the second are not separated\n" : "\n";
  out += "plot";
  bool first = true;
  for (double v : series) {
    const std::string value = format_double(v);
    out += first ? " " : ", \\\n     ";
    first = false;
    out += gp_quote(data_file) + " using 1:($2==" + value + " ? $" + std::to_string(y) + " : 1/0)" + tail + style +
           " title " + gp_quote(texts[1] + "=" + value);
  }
  out += "\n";
  return out;
}

/// Cheap structural checks on a script: quotes balance on every line, some
/// `set output` precedes the first `plot`, and every quoted `.dat` file exists
/// relative to `dir`. Returns the problems found.
inline std::vector<std::string> smoke_check(std::string_view script, const std::filesystem::path& dir) {
  std::vector<std::string> problems;
  bool output_set = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < script.size()) {
    std::size_t nl = script.find('\n', pos);
    if (nl == std::string_view::npos) nl = script.size();
    std::string_view line = script.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    std::string_view body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";

    std::vector<std::string> quoted;
    char quote = 0;
    std::string current;
    for (std::size_t i = 0; i < body.size(); ++i) {
      char c = body[i];
      if (quote) {
        if (quote == '"' && c == '\\' && i + 1 < body.size()) {
          current += body[++i];
        } else if (c == quote) {
          quoted.push_back(current);
          current.clear();
          quote = 0;
        } else {
          current += c;
        }
      } else if (c == '"' || c == '\'') {
        quote = c;
      } else if (c == '#') {
        break;
      }
    }
    if (quote) problems.push_back(where + "unbalanced quotes");

    if (body.substr(0, 10) == "set output") output_set = true;
    if ((body.substr(0, 5) == "plot " || body == "plot") && !output_set)
      problems.push_back(where + "plot before set output");
    for (const auto& q : quoted)
      if (q.size() > 4 && q.substr(q.size() - 4) == ".dat" && !std::filesystem::exists(dir / q))
        problems.push_back(where + "missing data file '" + q + "'");
  }
  return problems;
}

struct PlotOutputs {
  std::map<std::string, std::string> data_files;  // rule_id -> file name
  std::string script_file;                        // file name of the script
  std::string script;
};

/// Emits all data files and `<name>.plt` (or `[plot] script`) into `out_dir`.
/// With `[plot] template`, the script is that template rendered against the
/// run context; otherwise the default scripts of all rules, concatenated.
inline PlotOutputs emit_plot(const Config& config, const std::vector<ResultTable>& tables, std::uint64_t completed,
                             const std::filesystem::path& out_dir) {
  PlotOutputs out;
  const std::string& name = config.task.name;
  out.data_files = emit_tables(tables, name, out_dir);
  if (config.plot.template_path) {
    const auto ctx = PlotContext::from_run(config, tables, out.data_files, completed);
    out.script = render(read_file(*config.plot.template_path), ctx);
  } else {
    for (std::size_t r = 0; r < tables.size(); ++r) {
      if (r) out.script += "\n";
      const auto& rule = config.rules[r];
      out.script += default_script(rule, tables[r], out.data_files[rule.id], name + "." + rule.id + ".pdf");
    }
  }
  out.script_file = config.plot.script.value_or(name + ".plt");
  atomic_write(out_dir / out.script_file, out.script);
  return out;
}

}  // namespace sweepforge
