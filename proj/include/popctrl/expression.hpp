#pragma once

#include <memory>
#include <string>
#include <vector>

namespace popctrl {

/// Compiled arithmetic expression over a fixed set of named variables.
///
/// Grammar (usual precedence, `^` right-associative):
///
///     expr    := term (('+' | '-') term)*
///     term    := unary (('*' | '/') unary)*
///     unary   := ('-' | '+') unary | power
///     power   := primary ('^' unary)?
///     primary := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
///
/// Functions: exp, log, sqrt, sin, cos, tan, abs, step (Heaviside, step(0)=1),
/// min, max, pow. Constants: pi, e.
///
/// Compilation resolves variable names once; evaluation is allocation free
/// and safe from concurrent readers.
class Expression {
 public:
  Expression(const std::string& source, std::vector<std::string> variables);

  double evaluate(const double* values) const;
  double operator()(double x) const { return evaluate(&x); }
  double operator()(double x, double y) const {
    const double v[2] = {x, y};
    return evaluate(v);
  }

  const std::string& source() const noexcept { return source_; }
  std::size_t arity() const noexcept { return variables_.size(); }

  struct Node;

 private:
  std::string source_;
  std::vector<std::string> variables_;
  std::shared_ptr<const Node> root_;
};

}  // namespace popctrl
