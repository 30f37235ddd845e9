#pragma once

// Portable checkpoint of the completed-unit ledger and committed aggregation
// state. Text, LF line endings:
//
//   LEOCKPT 1
//   config_hash = <64 hex>
//   master_seed = <u64>
//   units_total = <n>
//   completed = 0-3,7,9-12
//   [agg <rule_id>]
//   <cell_key> <unit> <count> <mean> <m2> <min> <max> [<sample> ...]
//   crc32 = <8 hex over every preceding byte>
//
// Trailing fields on an entry are the unit's raw values; they are present only
// for rules with a histogram, whose bin edges are fixed at finalize time.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sweepforge/aggregate.hpp"
#include "sweepforge/config.hpp"
#include "sweepforge/engine.hpp"
#include "sweepforge/error.hpp"
#include "sweepforge/io.hpp"

namespace sweepforge {

inline constexpr int kCheckpointVersion = 1;

/// Inclusive [first, last] index range.
using IndexRange = std::pair<std::uint64_t, std::uint64_t>;

inline std::vector<IndexRange> to_ranges(const std::set<std::uint64_t>& indices) {
  std::vector<IndexRange> out;
  for (auto i : indices) {
    if (!out.empty() && out.back().second + 1 == i)
      out.back().second = i;
    else
      out.emplace_back(i, i);
  }
  return out;
}

inline std::string encode_ranges(const std::vector<IndexRange>& ranges) {
  std::string out;
  for (const auto& [a, b] : ranges) {
    if (!out.empty()) out += ',';
    out += std::to_string(a);
    if (b != a) out += "-" + std::to_string(b);
  }
  return out;
}

inline std::string encode_ranges(const std::set<std::uint64_t>& indices) { return encode_ranges(to_ranges(indices)); }

/// Parses "0-3,7,9-12"; ranges must be ascending and disjoint. Adjacent
/// ranges are merged. Returns nullopt on malformed input.
inline std::optional<std::vector<IndexRange>> decode_ranges(std::string_view s) {
  std::vector<IndexRange> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto comma = s.find(',', start);
    auto piece = s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    auto dash = piece.find('-');
    std::optional<std::uint64_t> a, b;
    if (dash == std::string_view::npos) {
      a = b = parse_integer<std::uint64_t>(piece);
    } else {
      a = parse_integer<std::uint64_t>(piece.substr(0, dash));
      b = parse_integer<std::uint64_t>(piece.substr(dash + 1));
    }
    if (!a || !b || *a > *b || piece.empty() || piece.front() == '+') return std::nullopt;
    if (!out.empty() && *a <= out.back().second) return std::nullopt;
    if (!out.empty() && *a == out.back().second + 1)
      out.back().second = *b;
    else
      out.emplace_back(*a, *b);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline bool ranges_contain(const std::vector<IndexRange>& ranges, std::uint64_t i) {
  auto it = std::upper_bound(ranges.begin(), ranges.end(), i,
                             [](std::uint64_t v, const IndexRange& r) { return v < r.first; });
  return it != ranges.begin() && std::prev(it)->second >= i;
}

inline std::uint64_t ranges_size(const std::vector<IndexRange>& ranges) {
  std::uint64_t n = 0;
  for (const auto& [a, b] : ranges) n += b - a + 1;
  return n;
}

struct CheckpointEntry {
  CellKey key;
  std::uint64_t unit = 0;
  PartialStat stat;

  friend bool operator==(const CheckpointEntry&, const CheckpointEntry&) = default;
};

struct RuleSnapshot {
  std::string rule_id;
  std::vector<CheckpointEntry> entries;  // sorted by (key, unit)

  friend bool operator==(const RuleSnapshot&, const RuleSnapshot&) = default;
};

struct Checkpoint {
  int format_version = kCheckpointVersion;
  std::string config_hash;
  std::uint64_t master_seed = 0;
  std::uint64_t units_total = 0;
  std::vector<IndexRange> completed;
  std::vector<RuleSnapshot> rules;

  std::uint64_t completed_count() const { return ranges_size(completed); }

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// Captures the state at a commit boundary. `completed` must equal the set of
/// units committed into `state`.
inline Checkpoint snapshot(const std::set<std::uint64_t>& completed, const AggState& state, const Config& config) {
  if (completed != state.committed()) throw std::logic_error("snapshot outside a commit boundary");
  Checkpoint cp;
  cp.config_hash = canonical_hash(config);
  cp.master_seed = config.task.seed;
  cp.units_total = units_total(config);
  cp.completed = to_ranges(completed);
  for (std::size_t r = 0; r < state.rules().size(); ++r) {
    RuleSnapshot rs{state.rules()[r].id, {}};
    for (const auto& [key, units] : state.cells(r))
      for (const auto& [unit, stat] : units) rs.entries.push_back({key, unit, stat});
    cp.rules.push_back(std::move(rs));
  }
  return cp;
}

inline Checkpoint snapshot(const RunLedger& ledger, const AggState& state, const Config& config) {
  return snapshot(ledger.completed, state, config);
}

inline std::string crc_hex(std::uint32_t crc) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", crc);
  return buf;
}

inline std::string serialize(const Checkpoint& cp) {
  std::string out = "LEOCKPT " + std::to_string(cp.format_version) + "\n";
  out += "config_hash = " + cp.config_hash + "\n";
  out += "master_seed = " + std::to_string(cp.master_seed) + "\n";
  out += "units_total = " + std::to_string(cp.units_total) + "\n";
  out += "completed = " + encode_ranges(cp.completed) + "\n";
  for (const auto& rule : cp.rules) {
    out += "[agg " + rule.rule_id + "]\n";
    for (const auto& e : rule.entries) {
      out += e.key.to_text() + " " + std::to_string(e.unit) + " " + std::to_string(e.stat.count) + " " +
             format_double(e.stat.mean) + " " + format_double(e.stat.m2) + " " + format_double(e.stat.min) + " " +
             format_double(e.stat.max);
      for (double s : e.stat.samples) out += " " + format_double(s);
      out += '\n';
    }
  }
  out += "crc32 = " + crc_hex(crc32_of(out)) + "\n";
  return out;
}

/// Parses and verifies a checkpoint image. Throws CheckpointError.
inline Checkpoint parse_checkpoint(std::string_view bytes) {
  using Kind = CheckpointError::Kind;
  auto first_nl = bytes.find('\n');
  std::string_view magic = bytes.substr(0, first_nl);
  if (magic.substr(0, 8) != "LEOCKPT ")
    throw CheckpointError(bytes.empty() ? Kind::truncated : Kind::malformed, "not a checkpoint file (line 1)");
  auto version = parse_integer<int>(magic.substr(8));
  if (!version) throw CheckpointError(Kind::malformed, "bad version field (line 1)");
  if (*version != kCheckpointVersion)
    throw CheckpointError(Kind::incompatible_version,
                          "incompatible version " + std::to_string(*version) + " (supported: " +
                              std::to_string(kCheckpointVersion) + ")");

  auto crc_pos = bytes.rfind("\ncrc32 = ");
  if (crc_pos == std::string_view::npos || bytes.back() != '\n')
    throw CheckpointError(Kind::truncated, "truncated checkpoint (no crc32 trailer)");
  std::string_view body = bytes.substr(0, crc_pos + 1);
  std::string_view trailer = bytes.substr(crc_pos + 1);
  if (trailer.size() != 8 + 8 + 1) throw CheckpointError(Kind::truncated, "truncated checkpoint (bad crc32 trailer)");
  if (trailer.substr(8, 8) != crc_hex(crc32_of(body)))
    throw CheckpointError(Kind::corrupt, "corrupt checkpoint: crc mismatch");

  Checkpoint cp;
  cp.format_version = *version;
  std::size_t line_no = 1;
  std::size_t pos = first_nl + 1;
  auto next_line = [&]() -> std::optional<std::string_view> {
    if (pos >= body.size()) return std::nullopt;
    auto nl = body.find('\n', pos);
    auto line = body.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    return line;
  };
  auto malformed = [&](const std::string& msg) -> CheckpointError {
    return CheckpointError(Kind::malformed, "malformed checkpoint, line " + std::to_string(line_no) + ": " + msg);
  };
  auto field = [&](std::string_view key) -> std::string_view {
    auto line = next_line();
    std::string prefix = std::string(key) + " = ";
    if (!line || line->substr(0, prefix.size()) != prefix) throw malformed("expected '" + std::string(key) + "'");
    return line->substr(prefix.size());
  };

  cp.config_hash = std::string(field("config_hash"));
  if (cp.config_hash.size() != 64 ||
      cp.config_hash.find_first_not_of("0123456789abcdef") != std::string::npos)
    throw malformed("config_hash must be 64 lowercase hex digits");
  auto seed = parse_integer<std::uint64_t>(field("master_seed"));
  if (!seed) throw malformed("bad master_seed");
  cp.master_seed = *seed;
  auto total = parse_integer<std::uint64_t>(field("units_total"));
  if (!total) throw malformed("bad units_total");
  cp.units_total = *total;
  auto ranges = decode_ranges(field("completed"));
  if (!ranges) throw malformed("bad completed ranges");
  if (!ranges->empty() && ranges->back().second >= cp.units_total) throw malformed("completed unit out of range");
  cp.completed = std::move(*ranges);

  std::set<std::uint64_t> units_seen;
  while (auto line = next_line()) {
    if (line->size() > 6 && line->substr(0, 5) == "[agg " && line->back() == ']') {
      std::string id(line->substr(5, line->size() - 6));
      if (!is_identifier(id)) throw malformed("bad rule id");
      for (const auto& r : cp.rules)
        if (r.rule_id == id) throw malformed("duplicate rule section");
      cp.rules.push_back({id, {}});
      units_seen.clear();
      continue;
    }
    if (cp.rules.empty()) throw malformed("entry outside an [agg] section");
    std::vector<std::string_view> f;
    std::size_t s = 0;
    while (s <= line->size()) {
      auto sp = line->find(' ', s);
      f.push_back(line->substr(s, sp == std::string_view::npos ? std::string_view::npos : sp - s));
      if (sp == std::string_view::npos) break;
      s = sp + 1;
    }
    if (f.size() < 7) throw malformed("entry needs at least 7 fields");
    CheckpointEntry e;
    auto key = CellKey::parse(f[0]);
    auto unit = parse_integer<std::uint64_t>(f[1]);
    auto count = parse_integer<std::uint64_t>(f[2]);
    if (!key || !unit || !count || *count == 0) throw malformed("bad key, unit or count");
    e.key = std::move(*key);
    e.unit = *unit;
    e.stat.count = *count;
    double* targets[] = {&e.stat.mean, &e.stat.m2, &e.stat.min, &e.stat.max};
    for (int i = 0; i < 4; ++i) {
      auto v = parse_double(f[3 + i]);
      if (!v || !std::isfinite(*v)) throw malformed("bad statistic");
      *targets[i] = *v;
    }
    if (e.stat.m2 < 0 || e.stat.min > e.stat.max) throw malformed("inconsistent statistic");
    for (std::size_t i = 7; i < f.size(); ++i) {
      auto v = parse_double(f[i]);
      if (!v || !std::isfinite(*v)) throw malformed("bad sample");
      e.stat.samples.push_back(*v);
    }
    if (!e.stat.samples.empty() && e.stat.samples.size() != e.stat.count) throw malformed("sample count mismatch");
    if (!ranges_contain(cp.completed, e.unit)) throw malformed("entry for a unit not listed as completed");
    if (!units_seen.insert(e.unit).second) throw malformed("unit listed twice in one rule");
    cp.rules.back().entries.push_back(std::move(e));
  }
  return cp;
}

/// Atomically writes `cp` to `path`. Existing files rotate to `<path>.1`,
/// `<path>.2`, ... keeping `keep` files in total.
inline void write_checkpoint(const Checkpoint& cp, const std::filesystem::path& path, unsigned keep = 2,
                             std::optional<WriteFault> fault = std::nullopt) {
  namespace fs = std::filesystem;
  auto rotated = [&](unsigned i) { return fs::path(path.string() + "." + std::to_string(i)); };
  auto rotate = [&] {
    if (keep < 2 || !fs::exists(path)) return;
    std::error_code ec;
    for (unsigned i = keep - 1; i >= 2; --i)
      if (fs::exists(rotated(i - 1))) fs::rename(rotated(i - 1), rotated(i), ec);
    fs::copy_file(path, rotated(1), fs::copy_options::overwrite_existing, ec);
    if (ec) throw IoError("cannot rotate checkpoint '" + path.string() + "': " + ec.message());
  };
  atomic_write(path, serialize(cp), fault, rotate);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const IoError& e) {
    throw CheckpointError(CheckpointError::Kind::truncated, e.what());
  }
  return parse_checkpoint(bytes);
}

struct Resumption {
  std::vector<RunUnit> remaining;
  AggState state;
  std::set<std::uint64_t> completed;
};

/// Rebuilds the committed state and the plan of units still to run. Refuses a
/// checkpoint that belongs to a different experiment.
inline Resumption resume(const Checkpoint& cp, const Config& config) {
  using Kind = CheckpointError::Kind;
  const std::string hash = canonical_hash(config);
  if (cp.config_hash != hash || cp.units_total != units_total(config))
    throw CheckpointError(Kind::mismatch, "config changed since checkpoint (checkpoint " + cp.config_hash +
                                              ", config " + hash + ")");
  if (cp.master_seed != config.task.seed) throw CheckpointError(Kind::mismatch, "master seed differs from config");
  if (cp.rules.size() != config.rules.size())
    throw CheckpointError(Kind::mismatch, "checkpoint rules do not match config");

  Resumption out;
  out.state = AggState(config.rules);
  for (const auto& [a, b] : cp.completed)
    for (std::uint64_t i = a; i <= b; ++i) {
      out.completed.insert(i);
      out.state.mark_committed(i);
    }
  for (std::size_t r = 0; r < cp.rules.size(); ++r) {
    const auto& rule = config.rules[r];
    if (cp.rules[r].rule_id != rule.id) throw CheckpointError(Kind::mismatch, "checkpoint rules do not match config");
    for (const auto& e : cp.rules[r].entries) {
      if (e.key.values.size() != rule.conditions.size() ||
          (rule.keeps_samples() ? e.stat.samples.size() != e.stat.count : !e.stat.samples.empty()))
        throw CheckpointError(Kind::malformed, "entry shape does not match rule '" + rule.id + "'");
      out.state.restore(r, e.key, e.unit, e.stat);
    }
  }
  for (std::uint64_t i = 0; i < cp.units_total; ++i)
    if (!out.completed.count(i)) out.remaining.push_back(unit_at(i, config.task.repeats, config.task.seed));
  return out;
}

}  // namespace sweepforge
