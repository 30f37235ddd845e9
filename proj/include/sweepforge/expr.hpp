#pragma once

// Small arithmetic expression language used for aggregation conditions and
// plot template directives.
//
//   expr    := concat
//   concat  := sum ('&' sum)*
//   sum     := product (('+' | '-') product)*
//   product := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := atom ('^' unary)?            right associative
//   atom    := number | string | name | name '(' expr ')' | '(' expr (',' expr)* ')'
//
// Names may be dotted (`table.final.file`). Functions: log, exp, floor.
// A parenthesised comma list is a tuple; tuples are only meaningful as
// condition keys and are flattened by the caller.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "sweepforge/error.hpp"
#include "sweepforge/value.hpp"

namespace sweepforge::expr {

struct Node {
  enum class Kind { number, text, name, negate, binary, call, tuple };

  Kind kind = Kind::number;
  double number = 0;
  std::string text;  // string literal, name, function name, or operator
  std::vector<Node> args;

  bool operator==(const Node&) const = default;
};

/// Result of evaluation: a number, a text, or a list (bound lists only, e.g.
/// the value list of a swept parameter).
struct Scalar : std::variant<double, std::string> {
  using variant::variant;
};
using Result = std::variant<double, std::string, std::vector<Scalar>>;

/// Looks up a name; nullopt means unknown.
using Resolver = std::function<std::optional<Result>(std::string_view)>;

namespace detail {

struct Token {
  enum class Kind { number, text, name, op, end };
  Kind kind = Kind::end;
  std::string text;
  double number = 0;
  std::size_t pos = 0;
};

inline bool name_head(char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_'; }
inline bool name_tail(char c) { return name_head(c) || (c >= '0' && c <= '9'); }
inline bool digit(char c) { return c >= '0' && c <= '9'; }

inline std::vector<Token> lex(std::string_view src) {
  std::vector<Token> out;
  std::size_t i = 0;
  auto fail = [&](const std::string& msg) {
    throw ExprError(msg + " at offset " + std::to_string(i + 1));
  };
  while (i < src.size()) {
    char c = src[i];
    if (c == ' ' || c == '\t') {
      ++i;
      continue;
    }
    Token t;
    t.pos = i;
    if (digit(c) || (c == '.' && i + 1 < src.size() && digit(src[i + 1]))) {
      std::size_t j = i;
      while (j < src.size() && digit(src[j])) ++j;
      if (j < src.size() && src[j] == '.') {
        ++j;
        while (j < src.size() && digit(src[j])) ++j;
      }
      if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < src.size() && (src[k] == '+' || src[k] == '-')) ++k;
        if (k < src.size() && digit(src[k])) {
          while (k < src.size() && digit(src[k])) ++k;
          j = k;
        }
      }
      auto v = parse_double(src.substr(i, j - i));
      if (!v || !std::isfinite(*v)) fail("invalid number '" + std::string(src.substr(i, j - i)) + "'");
      t.kind = Token::Kind::number;
      t.number = *v;
      t.text = std::string(src.substr(i, j - i));
      i = j;
    } else if (name_head(c)) {
      std::size_t j = i;
      for (;;) {
        while (j < src.size() && name_tail(src[j])) ++j;
        if (j + 1 < src.size() && src[j] == '.' && name_head(src[j + 1])) {
          ++j;
          continue;
        }
        break;
      }
      t.kind = Token::Kind::name;
      t.text = std::string(src.substr(i, j - i));
      i = j;
    } else if (c == '"') {
      std::size_t j = i + 1;
      while (j < src.size() && src[j] != '"') j += src[j] == '\\' ? 2 : 1;
      if (j >= src.size()) fail("unterminated string");
      auto body = unquote_text(src.substr(i + 1, j - i - 1));
      if (!body) fail("invalid escape in string");
      t.kind = Token::Kind::text;
      t.text = std::move(*body);
      i = j + 1;
    } else if (std::string_view("+-*/^&(),").find(c) != std::string_view::npos) {
      t.kind = Token::Kind::op;
      t.text = std::string(1, c);
      ++i;
    } else {
      fail(std::string("unexpected character '") + c + "'");
    }
    out.push_back(std::move(t));
    if (out.size() > 10000) fail("expression too long");
  }
  Token end;
  end.pos = src.size();
  out.push_back(end);
  return out;
}

class Parser {
 public:
  explicit Parser(std::string_view src) : tokens_(lex(src)) {}

  Node parse_all() {
    Node n = parse_concat();
    if (peek().kind != Token::Kind::end) unexpected("end of expression");
    return n;
  }

 private:
  const Token& peek() const { return tokens_[pos_]; }
  bool at_op(std::string_view op) const {
    return peek().kind == Token::Kind::op && peek().text == op;
  }
  [[noreturn]] void unexpected(const std::string& expected) const {
    const Token& t = peek();
    std::string got = t.kind == Token::Kind::end ? "end of input" : "'" + t.text + "'";
    throw ExprError("expected " + expected + " but found " + got + " at offset " +
                    std::to_string(t.pos + 1));
  }
  void expect(std::string_view op) {
    if (!at_op(op)) unexpected("'" + std::string(op) + "'");
    ++pos_;
  }

  static Node binary(std::string op, Node lhs, Node rhs) {
    Node n;
    n.kind = Node::Kind::binary;
    n.text = std::move(op);
    n.args.push_back(std::move(lhs));
    n.args.push_back(std::move(rhs));
    return n;
  }

  Node parse_concat() {
    DepthGuard guard(depth_);
    Node lhs = parse_sum();
    while (at_op("&")) {
      ++pos_;
      lhs = binary("&", std::move(lhs), parse_sum());
    }
    return lhs;
  }

  Node parse_sum() {
    Node lhs = parse_product();
    while (at_op("+") || at_op("-")) {
      std::string op = tokens_[pos_++].text;
      lhs = binary(op, std::move(lhs), parse_product());
    }
    return lhs;
  }

  Node parse_product() {
    Node lhs = parse_unary();
    while (at_op("*") || at_op("/")) {
      std::string op = tokens_[pos_++].text;
      lhs = binary(op, std::move(lhs), parse_unary());
    }
    return lhs;
  }

  Node parse_unary() {
    DepthGuard guard(depth_);
    if (at_op("-")) {
      ++pos_;
      Node n;
      n.kind = Node::Kind::negate;
      n.args.push_back(parse_unary());
      return n;
    }
    return parse_power();
  }

  Node parse_power() {
    Node base = parse_atom();
    if (at_op("^")) {
      ++pos_;
      return binary("^", std::move(base), parse_unary());
    }
    return base;
  }

  Node parse_atom() {
    const Token& t = peek();
    Node n;
    switch (t.kind) {
      case Token::Kind::number:
        n.kind = Node::Kind::number;
        n.number = t.number;
        ++pos_;
        return n;
      case Token::Kind::text:
        n.kind = Node::Kind::text;
        n.text = t.text;
        ++pos_;
        return n;
      case Token::Kind::name:
        n.text = t.text;
        ++pos_;
        if (at_op("(")) {
          if (n.text != "log" && n.text != "exp" && n.text != "floor")
            throw ExprError("unknown function '" + n.text + "'");
          ++pos_;
          n.kind = Node::Kind::call;
          n.args.push_back(parse_concat());
          expect(")");
        } else {
          n.kind = Node::Kind::name;
        }
        return n;
      case Token::Kind::op:
        if (t.text == "(") {
          ++pos_;
          Node first = parse_concat();
          if (!at_op(",")) {
            expect(")");
            return first;
          }
          n.kind = Node::Kind::tuple;
          n.args.push_back(std::move(first));
          while (at_op(",")) {
            ++pos_;
            n.args.push_back(parse_concat());
          }
          expect(")");
          return n;
        }
        break;
      case Token::Kind::end:
        break;
    }
    unexpected("a number, name, string or '('");
  }

  struct DepthGuard {
    static constexpr int kMaxDepth = 256;
    int& depth;
    explicit DepthGuard(int& d) : depth(d) {
      if (++depth > kMaxDepth) throw ExprError("expression nested too deeply");
    }
    ~DepthGuard() { --depth; }
  };

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  int depth_ = 0;
};

inline int precedence(const Node& n) {
  switch (n.kind) {
    case Node::Kind::binary:
      if (n.text == "&") return 0;
      if (n.text == "+" || n.text == "-") return 1;
      if (n.text == "*" || n.text == "/") return 2;
      return 4;  // ^
    case Node::Kind::negate: return 3;
    default: return 5;
  }
}

inline void print(const Node& n, std::string& out);

inline void print_wrapped(const Node& n, bool parens, std::string& out) {
  if (parens) out += '(';
  print(n, out);
  if (parens) out += ')';
}

inline void print(const Node& n, std::string& out) {
  switch (n.kind) {
    case Node::Kind::number: out += format_double(n.number); break;
    case Node::Kind::text: out += quote_text(n.text); break;
    case Node::Kind::name: out += n.text; break;
    case Node::Kind::negate:
      out += '-';
      print_wrapped(n.args[0], precedence(n.args[0]) < 3, out);
      break;
    case Node::Kind::call:
      out += n.text;
      print_wrapped(n.args[0], true, out);
      break;
    case Node::Kind::tuple:
      out += '(';
      for (std::size_t i = 0; i < n.args.size(); ++i) {
        if (i) out += ',';
        print(n.args[i], out);
      }
      out += ')';
      break;
    case Node::Kind::binary: {
      int p = precedence(n);
      if (n.text == "^") {
        print_wrapped(n.args[0], precedence(n.args[0]) <= p, out);
        out += '^';
        print_wrapped(n.args[1], precedence(n.args[1]) < 3, out);
      } else {
        print_wrapped(n.args[0], precedence(n.args[0]) < p, out);
        out += n.text;
        print_wrapped(n.args[1], precedence(n.args[1]) <= p, out);
      }
      break;
    }
  }
}

inline double need_number(const Result& r, std::string_view what) {
  if (const auto* d = std::get_if<double>(&r)) return *d;
  throw ExprError(std::string(what) + " needs a number");
}

inline std::string as_text(const Result& r) {
  if (const auto* d = std::get_if<double>(&r)) return format_double(*d);
  if (const auto* s = std::get_if<std::string>(&r)) return *s;
  throw ExprError("a list cannot be used in an expression");
}

inline double checked(double v, std::string_view what) {
  if (!std::isfinite(v)) throw ExprError(std::string(what) + " produced a non-finite result");
  return v;
}

}  // namespace detail

/// Parses a complete expression. Throws ExprError with an offset on failure.
inline Node parse(std::string_view src) { return detail::Parser(src).parse_all(); }

/// Canonical text without whitespace; parse(to_text(n)) == n.
inline std::string to_text(const Node& n) {
  std::string out;
  detail::print(n, out);
  return out;
}

/// Every name referenced by the expression, in first-seen order.
inline std::vector<std::string> names(const Node& n) {
  std::vector<std::string> out;
  std::function<void(const Node&)> walk = [&](const Node& m) {
    if (m.kind == Node::Kind::name &&
        std::find(out.begin(), out.end(), m.text) == out.end())
      out.push_back(m.text);
    for (const auto& a : m.args) walk(a);
  };
  walk(n);
  return out;
}

/// Top-level tuple components, or the node itself.
inline std::vector<Node> flatten_tuple(const Node& n) {
  if (n.kind != Node::Kind::tuple) return {n};
  std::vector<Node> out;
  for (const auto& a : n.args) {
    auto part = flatten_tuple(a);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

inline Result evaluate(const Node& n, const Resolver& resolve) {
  using detail::checked;
  using detail::need_number;
  switch (n.kind) {
    case Node::Kind::number: return n.number;
    case Node::Kind::text: return n.text;
    case Node::Kind::name: {
      auto r = resolve(n.text);
      if (!r) throw ExprError("unknown binding '" + n.text + "'");
      return std::move(*r);
    }
    case Node::Kind::negate: return -need_number(evaluate(n.args[0], resolve), "unary '-'");
    case Node::Kind::call: {
      double x = need_number(evaluate(n.args[0], resolve), n.text);
      if (n.text == "log") {
        if (x <= 0) throw ExprError("log of non-positive value " + format_double(x));
        return checked(std::log(x), "log");
      }
      if (n.text == "exp") return checked(std::exp(x), "exp");
      return std::floor(x);
    }
    case Node::Kind::tuple: throw ExprError("a tuple is only allowed as a condition key");
    case Node::Kind::binary: {
      Result lhs = evaluate(n.args[0], resolve);
      Result rhs = evaluate(n.args[1], resolve);
      if (n.text == "&") return detail::as_text(lhs) + detail::as_text(rhs);
      double a = need_number(lhs, "'" + n.text + "'");
      double b = need_number(rhs, "'" + n.text + "'");
      switch (n.text[0]) {
        case '+': return checked(a + b, "'+'");
        case '-': return checked(a - b, "'-'");
        case '*': return checked(a * b, "'*'");
        case '/':
          if (b == 0) throw ExprError("division by zero");
          return checked(a / b, "'/'");
        default: return checked(std::pow(a, b), "'^'");
      }
    }
  }
  throw ExprError("malformed expression");
}

inline double evaluate_number(const Node& n, const Resolver& resolve) {
  return detail::need_number(evaluate(n, resolve), "expression");
}

}  // namespace sweepforge::expr
