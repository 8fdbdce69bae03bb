#pragma once

// Arithmetic expression DSL used for user-supplied metric components,
// potentials, wave profiles and bounding functions.
//
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := '-' factor | power
//   power  := atom ('^' factor)?
//   atom   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//
// '^' is right-associative and binds tighter than unary minus, so "-x1^2"
// is -(x1^2) while "2^-x1" is 2^(-x1). The bare identifier pi is the constant.

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cplab/error.hpp"

namespace cplab::expr {

struct Node {
  enum class Kind { Number, Variable, Negate, Add, Sub, Mul, Div, Pow, Call };

  Kind kind = Kind::Number;
  double value = 0.0;
  std::string name;
  std::vector<Node> args;

  bool operator==(const Node&) const = default;

  static Node number(double v) { return Node{Kind::Number, v, {}, {}}; }
  static Node variable(std::string n) { return Node{Kind::Variable, 0.0, std::move(n), {}}; }
  static Node unary(Kind k, Node a) { return Node{k, 0.0, {}, {std::move(a)}}; }
  static Node binary(Kind k, Node a, Node b) { return Node{k, 0.0, {}, {std::move(a), std::move(b)}}; }
  static Node call(std::string n, std::vector<Node> a) { return Node{Kind::Call, 0.0, std::move(n), std::move(a)}; }
};

/// Parse failure with the byte offset of the offending token and the set of
/// tokens that would have been accepted there.
class ParseFailure : public Error {
 public:
  ParseFailure(std::size_t offset, std::set<std::string> expected, const std::string& found)
      : Error(ErrorCode::ParseError, message(offset, expected, found)),
        offset_(offset),
        expected_(std::move(expected)) {}

  std::size_t offset() const noexcept { return offset_; }
  const std::set<std::string>& expected() const noexcept { return expected_; }

 private:
  static std::string message(std::size_t offset, const std::set<std::string>& expected,
                             const std::string& found) {
    std::string m = "at byte " + std::to_string(offset) + ": found '" + found + "', expected one of {";
    bool first = true;
    for (const auto& e : expected) {
      if (!first) m += ", ";
      m += e;
      first = false;
    }
    return m + "}";
  }

  std::size_t offset_;
  std::set<std::string> expected_;
};

namespace detail {

class Parser {
 public:
  explicit Parser(std::string_view src) : src_(src) {}

  Node parse_all() {
    skip_ws();
    if (pos_ >= src_.size()) throw ParseFailure(pos_, {"expression"}, "end of input");
    Node n = parse_expr();
    skip_ws();
    if (pos_ < src_.size()) throw ParseFailure(pos_, {"+", "-", "*", "/", "^", "end of input"}, found());
    return n;
  }

 private:
  void skip_ws() {
    while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\n' || src_[pos_] == '\r'))
      ++pos_;
  }

  char peek() {
    skip_ws();
    return pos_ < src_.size() ? src_[pos_] : '\0';
  }

  std::string found() const {
    if (pos_ >= src_.size()) return "end of input";
    return std::string(1, src_[pos_]);
  }

  Node parse_expr() {
    Node lhs = parse_term();
    for (;;) {
      char c = peek();
      if (c != '+' && c != '-') return lhs;
      ++pos_;
      Node rhs = parse_term();
      lhs = Node::binary(c == '+' ? Node::Kind::Add : Node::Kind::Sub, std::move(lhs), std::move(rhs));
    }
  }

  Node parse_term() {
    Node lhs = parse_factor();
    for (;;) {
      char c = peek();
      if (c != '*' && c != '/') return lhs;
      ++pos_;
      Node rhs = parse_factor();
      lhs = Node::binary(c == '*' ? Node::Kind::Mul : Node::Kind::Div, std::move(lhs), std::move(rhs));
    }
  }

  Node parse_factor() {
    if (peek() == '-') {
      ++pos_;
      return Node::unary(Node::Kind::Negate, parse_factor());
    }
    Node base = parse_atom();
    if (peek() == '^') {
      ++pos_;
      return Node::binary(Node::Kind::Pow, std::move(base), parse_factor());
    }
    return base;
  }

  static bool ident_start(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; }
  static bool ident_char(char c) { return ident_start(c) || (c >= '0' && c <= '9'); }
  static bool digit(char c) { return c >= '0' && c <= '9'; }

  Node parse_atom() {
    char c = peek();
    const std::set<std::string> atom_start{"number", "identifier", "(", "-"};
    if (c == '(') {
      ++pos_;
      Node inner = parse_expr();
      if (peek() != ')') throw ParseFailure(pos_, {")", "+", "-", "*", "/", "^"}, found());
      ++pos_;
      return inner;
    }
    if (digit(c) || c == '.') return parse_number();
    if (ident_start(c)) {
      std::size_t start = pos_;
      while (pos_ < src_.size() && ident_char(src_[pos_])) ++pos_;
      std::string name(src_.substr(start, pos_ - start));
      if (peek() != '(') return Node::variable(std::move(name));
      ++pos_;
      std::vector<Node> args;
      args.push_back(parse_expr());
      while (peek() == ',') {
        ++pos_;
        args.push_back(parse_expr());
      }
      if (peek() != ')') throw ParseFailure(pos_, {")", ","}, found());
      ++pos_;
      return Node::call(std::move(name), std::move(args));
    }
    throw ParseFailure(pos_, atom_start, found());
  }

  Node parse_number() {
    std::size_t start = pos_;
    while (pos_ < src_.size() && digit(src_[pos_])) ++pos_;
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      while (pos_ < src_.size() && digit(src_[pos_])) ++pos_;
    }
    if (pos_ - start == 1 && src_[start] == '.') throw ParseFailure(start, {"number"}, ".");
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      ++pos_;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (pos_ >= src_.size() || !digit(src_[pos_])) throw ParseFailure(pos_, {"exponent digits"}, found());
      while (pos_ < src_.size() && digit(src_[pos_])) ++pos_;
    }
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(src_.data() + start, src_.data() + pos_, v);
    if (ec != std::errc() || ptr != src_.data() + pos_) throw ParseFailure(start, {"number"}, found());
    return Node::number(v);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

inline void print(const Node& n, std::string& out) {
  switch (n.kind) {
    case Node::Kind::Number: {
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", std::abs(n.value));
      if (n.value < 0 || std::signbit(n.value)) out += "(-";
      out += buf;
      if (n.value < 0 || std::signbit(n.value)) out += ")";
      return;
    }
    case Node::Kind::Variable: out += n.name; return;
    case Node::Kind::Negate:
      out += "-(";
      print(n.args[0], out);
      out += ")";
      return;
    case Node::Kind::Call:
      out += n.name;
      out += "(";
      for (std::size_t i = 0; i < n.args.size(); ++i) {
        if (i) out += ", ";
        print(n.args[i], out);
      }
      out += ")";
      return;
    default: {
      const char* op = n.kind == Node::Kind::Add   ? " + "
                       : n.kind == Node::Kind::Sub ? " - "
                       : n.kind == Node::Kind::Mul ? " * "
                       : n.kind == Node::Kind::Div ? " / "
                                                   : "^";
      out += "(";
      // a negated base needs its own parentheses or it re-parses as -(a^b)
      const bool wrap = n.kind == Node::Kind::Pow && n.args[0].kind == Node::Kind::Negate;
      if (wrap) out += "(";
      print(n.args[0], out);
      if (wrap) out += ")";
      out += op;
      print(n.args[1], out);
      out += ")";
      return;
    }
  }
}

}  // namespace detail

inline Node parse(std::string_view src) {
  if (src.empty()) throw ParseFailure(0, {"expression"}, "end of input");
  return detail::Parser(src).parse_all();
}

/// Fully parenthesised rendering; parse(to_string(n)) == n for parsed trees.
inline std::string to_string(const Node& n) {
  std::string out;
  detail::print(n, out);
  return out;
}

// Variable slots shared by every bound expression.
inline constexpr std::size_t kSlotT = 0;
inline constexpr std::size_t kSlotU = 1;
inline constexpr std::size_t kSlotV = 2;
inline constexpr std::size_t kSlotX1 = 3;
inline constexpr std::size_t kNumSlots = 11;

using Slots = std::array<double, kNumSlots>;

inline int slot_of(std::string_view name) {
  if (name == "t") return static_cast<int>(kSlotT);
  if (name == "u") return static_cast<int>(kSlotU);
  if (name == "v") return static_cast<int>(kSlotV);
  if (name.size() == 2 && name[0] == 'x' && name[1] >= '1' && name[1] <= '8')
    return static_cast<int>(kSlotX1) + (name[1] - '1');
  return -1;
}

/// A named sub-expression callable from other expressions, e.g. a(u).
struct UserFunction {
  std::vector<std::string> params;
  Node body;
};

using FunctionTable = std::map<std::string, UserFunction>;

/// Compiled stack program for a bound expression.
class Compiled {
 public:
  enum class Op {
    Const, Load, Neg, Add, Sub, Mul, Div, Pow,
    Sin, Cos, Tan, Exp, Log, Sqrt, Sinh, Cosh, Tanh, Abs, Min, Max,
  };
  struct Instr {
    Op op;
    double value = 0.0;
    int slot = 0;
  };

  Compiled() { code_.push_back({Op::Const, 0.0, 0}); depth_ = 1; }
  Compiled(std::vector<Instr> code, std::size_t depth) : code_(std::move(code)), depth_(depth) {}

  double operator()(const Slots& s) const {
    std::array<double, 64> small{};
    std::vector<double> big;
    double* st = small.data();
    if (depth_ > small.size()) {
      big.resize(depth_);
      st = big.data();
    }
    std::size_t sp = 0;
    for (const Instr& in : code_) {
      switch (in.op) {
        case Op::Const: st[sp++] = in.value; break;
        case Op::Load: st[sp++] = s[static_cast<std::size_t>(in.slot)]; break;
        case Op::Neg: st[sp - 1] = -st[sp - 1]; break;
        case Op::Add: --sp; st[sp - 1] += st[sp]; break;
        case Op::Sub: --sp; st[sp - 1] -= st[sp]; break;
        case Op::Mul: --sp; st[sp - 1] *= st[sp]; break;
        case Op::Div:
          --sp;
          if (st[sp] == 0.0) fail(ErrorCode::EvalError, "division by zero");
          st[sp - 1] /= st[sp];
          break;
        case Op::Pow: {
          --sp;
          double r = std::pow(st[sp - 1], st[sp]);
          if (std::isnan(r) && !std::isnan(st[sp - 1]) && !std::isnan(st[sp]))
            fail(ErrorCode::EvalError, "pow of negative base with non-integer exponent");
          if (st[sp - 1] == 0.0 && st[sp] < 0.0) fail(ErrorCode::EvalError, "division by zero in pow");
          st[sp - 1] = r;
          break;
        }
        case Op::Sin: st[sp - 1] = std::sin(st[sp - 1]); break;
        case Op::Cos: st[sp - 1] = std::cos(st[sp - 1]); break;
        case Op::Tan: st[sp - 1] = std::tan(st[sp - 1]); break;
        case Op::Exp: st[sp - 1] = std::exp(st[sp - 1]); break;
        case Op::Log:
          if (!(st[sp - 1] > 0.0)) fail(ErrorCode::EvalError, "log of nonpositive value");
          st[sp - 1] = std::log(st[sp - 1]);
          break;
        case Op::Sqrt:
          if (st[sp - 1] < 0.0) fail(ErrorCode::EvalError, "sqrt of negative value");
          st[sp - 1] = std::sqrt(st[sp - 1]);
          break;
        case Op::Sinh: st[sp - 1] = std::sinh(st[sp - 1]); break;
        case Op::Cosh: st[sp - 1] = std::cosh(st[sp - 1]); break;
        case Op::Tanh: st[sp - 1] = std::tanh(st[sp - 1]); break;
        case Op::Abs: st[sp - 1] = std::abs(st[sp - 1]); break;
        case Op::Min: --sp; st[sp - 1] = std::min(st[sp - 1], st[sp]); break;
        case Op::Max: --sp; st[sp - 1] = std::max(st[sp - 1], st[sp]); break;
      }
    }
    return st[0];
  }

  /// True when the program contains no variable loads.
  bool is_constant() const {
    for (const auto& in : code_)
      if (in.op == Op::Load) return false;
    return true;
  }

  bool uses_slot(std::size_t slot) const {
    for (const auto& in : code_)
      if (in.op == Op::Load && in.slot == static_cast<int>(slot)) return true;
    return false;
  }

 private:
  std::vector<Instr> code_;
  std::size_t depth_ = 0;
};

namespace detail {

inline Node substitute(const Node& n, const std::map<std::string, const Node*>& repl) {
  if (n.kind == Node::Kind::Variable) {
    auto it = repl.find(n.name);
    if (it != repl.end()) return *it->second;
    return n;
  }
  Node out = n;
  for (auto& a : out.args) a = substitute(a, repl);
  return out;
}

struct Compiler {
  const FunctionTable& functions;
  std::vector<Compiled::Instr> code;
  std::size_t sp = 0, depth = 0;
  int inline_depth = 0;

  void push(Compiled::Instr in, int delta) {
    code.push_back(in);
    if (delta > 0) sp += static_cast<std::size_t>(delta);
    else sp -= static_cast<std::size_t>(-delta);
    depth = std::max(depth, sp);
  }

  void emit(const Node& n) {
    using K = Node::Kind;
    using Op = Compiled::Op;
    switch (n.kind) {
      case K::Number: push({Op::Const, n.value, 0}, +1); return;
      case K::Variable: {
        int s = slot_of(n.name);
        if (s < 0 && n.name == "pi") {
          push({Op::Const, std::numbers::pi, 0}, +1);
          return;
        }
        if (s < 0) fail(ErrorCode::UnknownIdentifier, "unknown variable '" + n.name + "'");
        push({Op::Load, 0.0, s}, +1);
        return;
      }
      case K::Negate: emit(n.args[0]); push({Op::Neg}, 0); return;
      case K::Add:
      case K::Sub:
      case K::Mul:
      case K::Div:
      case K::Pow: {
        emit(n.args[0]);
        emit(n.args[1]);
        Op op = n.kind == K::Add ? Op::Add : n.kind == K::Sub ? Op::Sub : n.kind == K::Mul ? Op::Mul
                : n.kind == K::Div ? Op::Div : Op::Pow;
        push({op}, -1);
        return;
      }
      case K::Call: emit_call(n); return;
    }
  }

  void emit_call(const Node& n) {
    using Op = Compiled::Op;
    static const std::map<std::string, Op> unary{
        {"sin", Op::Sin},   {"cos", Op::Cos},   {"tan", Op::Tan},   {"exp", Op::Exp},
        {"log", Op::Log},   {"sqrt", Op::Sqrt}, {"sinh", Op::Sinh}, {"cosh", Op::Cosh},
        {"tanh", Op::Tanh}, {"abs", Op::Abs},
    };
    if (auto it = unary.find(n.name); it != unary.end()) {
      if (n.args.size() != 1) fail(ErrorCode::UnknownIdentifier, n.name + " takes exactly one argument");
      emit(n.args[0]);
      push({it->second}, 0);
      return;
    }
    if (n.name == "pow") {
      if (n.args.size() != 2) fail(ErrorCode::UnknownIdentifier, "pow takes exactly two arguments");
      emit(n.args[0]);
      emit(n.args[1]);
      push({Op::Pow}, -1);
      return;
    }
    if (n.name == "min" || n.name == "max") {
      if (n.args.size() < 2) fail(ErrorCode::UnknownIdentifier, n.name + " takes at least two arguments");
      emit(n.args[0]);
      for (std::size_t i = 1; i < n.args.size(); ++i) {
        emit(n.args[i]);
        push({n.name == "min" ? Op::Min : Op::Max}, -1);
      }
      return;
    }
    auto uf = functions.find(n.name);
    if (uf == functions.end()) fail(ErrorCode::UnknownIdentifier, "unknown function '" + n.name + "'");
    if (uf->second.params.size() != n.args.size())
      fail(ErrorCode::UnknownIdentifier, "function '" + n.name + "' expects " +
                                             std::to_string(uf->second.params.size()) + " argument(s)");
    if (++inline_depth > 32) fail(ErrorCode::UnknownIdentifier, "recursive function '" + n.name + "'");
    std::map<std::string, const Node*> repl;
    for (std::size_t i = 0; i < n.args.size(); ++i) repl[uf->second.params[i]] = &n.args[i];
    emit(substitute(uf->second.body, repl));
    --inline_depth;
  }
};

}  // namespace detail

/// Resolve identifiers and compile. Throws UnknownIdentifier.
inline Compiled bind(const Node& n, const FunctionTable& functions = {}) {
  detail::Compiler c{functions, {}, 0, 0, 0};
  c.emit(n);
  return Compiled(std::move(c.code), c.depth);
}

/// Parsed source plus its compiled form.
class Expression {
 public:
  Expression() = default;
  explicit Expression(std::string_view src, const FunctionTable& functions = {})
      : source_(src), ast_(parse(src)), code_(expr::bind(ast_, functions)) {}

  static Expression constant(double c) {
    Expression e;
    e.ast_ = Node::number(c);
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", c);
    e.source_ = buf;
    e.code_ = expr::bind(e.ast_);
    return e;
  }

  double operator()(const Slots& s) const { return code_(s); }

  const std::string& source() const { return source_; }
  const Node& ast() const { return ast_; }
  const Compiled& compiled() const { return code_; }

 private:
  std::string source_ = "0";
  Node ast_ = Node::number(0.0);
  Compiled code_;
};

}  // namespace cplab::expr
