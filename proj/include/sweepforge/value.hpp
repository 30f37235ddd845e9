#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>

namespace sweepforge {

/// A scalar used for parameter values and element state: integer, real or text.
using Value = std::variant<std::int64_t, double, std::string>;

enum class ValueKind { integer, real, text };

inline ValueKind kind_of(const Value& v) noexcept { return static_cast<ValueKind>(v.index()); }

inline const char* kind_name(ValueKind k) noexcept {
  switch (k) {
    case ValueKind::integer: return "integer";
    case ValueKind::real: return "real";
    case ValueKind::text: return "text";
  }
  return "?";
}

inline bool is_numeric(const Value& v) noexcept { return kind_of(v) != ValueKind::text; }

/// Numeric value of an integer or real; nullopt for text.
inline std::optional<double> as_number(const Value& v) noexcept {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  if (const auto* d = std::get_if<double>(&v)) return *d;
  return std::nullopt;
}

inline bool is_identifier(std::string_view s) noexcept {
  if (s.empty()) return false;
  auto head = [](char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_'; };
  auto tail = [&](char c) { return head(c) || (c >= '0' && c <= '9'); };
  if (!head(s.front())) return false;
  for (char c : s.substr(1))
    if (!tail(c)) return false;
  return true;
}

/// Shortest text that parses back to exactly `x`. `-0` is kept; callers that
/// need a sign-free zero normalise first.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view s) noexcept {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double out = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return out;
}

template <typename Int>
std::optional<Int> parse_integer(std::string_view s) noexcept {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  Int out{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return out;
}

inline std::string quote_text(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out + '"';
}

/// Decodes the body of a quoted string (without the surrounding quotes).
inline std::optional<std::string> unquote_text(std::string_view body) {
  std::string out;
  for (std::size_t i = 0; i < body.size(); ++i) {
    char c = body[i];
    if (c != '\\') {
      out += c;
      continue;
    }
    if (++i == body.size()) return std::nullopt;
    switch (body[i]) {
      case '"': out += '"'; break;
      case '\\': out += '\\'; break;
      case 'n': out += '\n'; break;
      case 't': out += '\t'; break;
      case 'r': out += '\r'; break;
      default: return std::nullopt;
    }
  }
  return out;
}

/// Kind-preserving text: reals always carry a '.', 'e' or are non-finite so
/// they never re-read as integers; text is quoted.
inline std::string canonical_text(const Value& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&v)) {
    std::string s = format_double(*d);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
  }
  return quote_text(std::get<std::string>(v));
}

/// Plain text used in tables, plot output and element dumps: numbers in
/// shortest form, text verbatim.
inline std::string display_text(const Value& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&v)) return format_double(*d);
  return std::get<std::string>(v);
}

/// Reads the output of canonical_text back.
inline std::optional<Value> parse_canonical_value(std::string_view s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
    auto body = unquote_text(s.substr(1, s.size() - 2));
    if (!body) return std::nullopt;
    return Value{std::move(*body)};
  }
  if (auto i = parse_integer<std::int64_t>(s)) return Value{*i};
  if (auto d = parse_double(s)) return Value{*d};
  return std::nullopt;
}

}  // namespace sweepforge
