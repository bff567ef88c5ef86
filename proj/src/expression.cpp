#include "popctrl/expression.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <numbers>

#include "popctrl/errors.hpp"

namespace popctrl {

struct Expression::Node {
  enum class Kind { Number, Variable, Negate, Add, Sub, Mul, Div, Pow, Call };
  enum class Fn { Exp, Log, Sqrt, Sin, Cos, Tan, Abs, Step, Min, Max, Pow };

  Kind kind = Kind::Number;
  double number = 0.0;
  std::size_t variable = 0;
  Fn fn = Fn::Exp;
  std::vector<std::shared_ptr<const Node>> args;

  double eval(const double* values) const {
    switch (kind) {
      case Kind::Number:
        return number;
      case Kind::Variable:
        return values[variable];
      case Kind::Negate:
        return -args[0]->eval(values);
      case Kind::Add:
        return args[0]->eval(values) + args[1]->eval(values);
      case Kind::Sub:
        return args[0]->eval(values) - args[1]->eval(values);
      case Kind::Mul:
        return args[0]->eval(values) * args[1]->eval(values);
      case Kind::Div:
        return args[0]->eval(values) / args[1]->eval(values);
      case Kind::Pow:
        return std::pow(args[0]->eval(values), args[1]->eval(values));
      case Kind::Call:
        return call(values);
    }
    return 0.0;
  }

  double call(const double* values) const {
    const double x = args[0]->eval(values);
    switch (fn) {
      case Fn::Exp:
        return std::exp(x);
      case Fn::Log:
        return std::log(x);
      case Fn::Sqrt:
        return std::sqrt(x);
      case Fn::Sin:
        return std::sin(x);
      case Fn::Cos:
        return std::cos(x);
      case Fn::Tan:
        return std::tan(x);
      case Fn::Abs:
        return std::abs(x);
      case Fn::Step:
        return x >= 0.0 ? 1.0 : 0.0;
      case Fn::Min:
        return std::min(x, args[1]->eval(values));
      case Fn::Max:
        return std::max(x, args[1]->eval(values));
      case Fn::Pow:
        return std::pow(x, args[1]->eval(values));
    }
    return 0.0;
  }
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Node = Expression::Node;

class Parser {
 public:
  Parser(const std::string& src, const std::vector<std::string>& vars) : src_(src), vars_(vars) {}

  NodePtr parse() {
    NodePtr n = expr();
    skip_ws();
    if (pos_ != src_.size()) fail("unexpected '" + std::string(1, src_[pos_]) + "'");
    return n;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("expression \"" + src_ + "\": " + msg + " at offset " + std::to_string(pos_));
  }

  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  static NodePtr binary(Node::Kind k, NodePtr lhs, NodePtr rhs) {
    auto n = std::make_shared<Node>();
    n->kind = k;
    n->args = {std::move(lhs), std::move(rhs)};
    return n;
  }

  NodePtr expr() {
    NodePtr lhs = term();
    for (;;) {
      if (accept('+'))
        lhs = binary(Node::Kind::Add, lhs, term());
      else if (accept('-'))
        lhs = binary(Node::Kind::Sub, lhs, term());
      else
        return lhs;
    }
  }

  NodePtr term() {
    NodePtr lhs = unary();
    for (;;) {
      if (accept('*'))
        lhs = binary(Node::Kind::Mul, lhs, unary());
      else if (accept('/'))
        lhs = binary(Node::Kind::Div, lhs, unary());
      else
        return lhs;
    }
  }

  NodePtr unary() {
    if (accept('-')) {
      auto n = std::make_shared<Node>();
      n->kind = Node::Kind::Negate;
      n->args = {unary()};
      return n;
    }
    if (accept('+')) return unary();
    return power();
  }

  NodePtr power() {
    NodePtr base = primary();
    if (accept('^')) return binary(Node::Kind::Pow, base, unary());
    return base;
  }

  NodePtr primary() {
    skip_ws();
    if (pos_ >= src_.size()) fail("unexpected end of input");
    const char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr n = expr();
      if (!accept(')')) fail("expected ')'");
      return n;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return name();
    fail("unexpected '" + std::string(1, c) + "'");
  }

  NodePtr number() {
    const char* begin = src_.c_str() + pos_;
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin) fail("malformed number");
    pos_ += static_cast<std::size_t>(end - begin);
    auto n = std::make_shared<Node>();
    n->number = v;
    return n;
  }

  NodePtr name() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
      ++pos_;
    const std::string id = src_.substr(start, pos_ - start);

    if (accept('(')) return call(id);

    for (std::size_t i = 0; i < vars_.size(); ++i) {
      if (vars_[i] == id) {
        auto n = std::make_shared<Node>();
        n->kind = Node::Kind::Variable;
        n->variable = i;
        return n;
      }
    }
    auto n = std::make_shared<Node>();
    if (id == "pi") {
      n->number = std::numbers::pi;
      return n;
    }
    if (id == "e") {
      n->number = std::numbers::e;
      return n;
    }
    fail("unknown name '" + id + "'");
  }

  NodePtr call(const std::string& id) {
    static const struct {
      const char* name;
      Node::Fn fn;
      std::size_t arity;
    } table[] = {
        {"exp", Node::Fn::Exp, 1},   {"log", Node::Fn::Log, 1},   {"sqrt", Node::Fn::Sqrt, 1},
        {"sin", Node::Fn::Sin, 1},   {"cos", Node::Fn::Cos, 1},   {"tan", Node::Fn::Tan, 1},
        {"abs", Node::Fn::Abs, 1},   {"step", Node::Fn::Step, 1}, {"min", Node::Fn::Min, 2},
        {"max", Node::Fn::Max, 2},   {"pow", Node::Fn::Pow, 2},
    };
    auto n = std::make_shared<Node>();
    n->kind = Node::Kind::Call;
    n->args.push_back(expr());
    while (accept(',')) n->args.push_back(expr());
    if (!accept(')')) fail("expected ')' after arguments of " + id);
    for (const auto& entry : table) {
      if (id == entry.name) {
        if (n->args.size() != entry.arity)
          fail(id + " takes " + std::to_string(entry.arity) + " argument(s)");
        n->fn = entry.fn;
        return n;
      }
    }
    fail("unknown function '" + id + "'");
  }

  const std::string& src_;
  const std::vector<std::string>& vars_;
  std::size_t pos_ = 0;
};

}  // namespace

Expression::Expression(const std::string& source, std::vector<std::string> variables)
    : source_(source), variables_(std::move(variables)) {
  root_ = Parser(source_, variables_).parse();
}

double Expression::evaluate(const double* values) const { return root_->eval(values); }

}  // namespace popctrl
