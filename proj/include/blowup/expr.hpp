#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "blowup/errors.hpp"

namespace blowup {

// A small immutable expression tree for scalar functions of the state
// vector x1..xd and named real parameters. Supports evaluation, symbolic
// differentiation, simplification and rendering back to source form.
//
// Exponents of '^' are restricted to state-free subtrees (numbers or
// parameters), which keeps differentiation total.

enum class ExprOp {
  Const,
  Var,    // state variable, 0-based index
  Param,  // named constant bound at evaluation time
  Norm,   // Euclidean norm of the whole state vector
  Neg,
  Exp,
  Ln,
  Abs,
  Sqrt,
  Add,
  Sub,
  Mul,
  Div,
  Pow,  // a ^ b with b state-free
};

struct ExprNode;
using ExprNodePtr = std::shared_ptr<const ExprNode>;

struct ExprNode {
  ExprOp op = ExprOp::Const;
  double value = 0.0;  // Const payload
  int var = 0;         // Var payload
  std::string param;   // Param payload
  ExprNodePtr a, b;    // children
};

class Expr {
public:
  Expr() : node_(std::make_shared<ExprNode>()) {}
  explicit Expr(ExprNodePtr node) : node_(std::move(node)) {}

  static Expr constant(double c);
  static Expr variable(int index);
  static Expr parameter(std::string name);
  static Expr norm();

  const ExprNode& node() const { return *node_; }
  ExprNodePtr ptr() const { return node_; }

private:
  ExprNodePtr node_;
};

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr exp(const Expr& a);
Expr ln(const Expr& a);
Expr abs(const Expr& a);
Expr sqrt(const Expr& a);
// Throws ParseError if the exponent depends on the state.
Expr pow(const Expr& base, const Expr& exponent);
Expr pow(const Expr& base, double exponent);

struct EvalPoint {
  std::vector<double> state;
  std::map<std::string, double> params;
};

enum class ValueKind { Finite, PosInf, NegInf, Undefined };

struct EvalOutcome {
  ValueKind kind = ValueKind::Finite;
  double value = 0.0;       // meaningful only when Finite
  std::string offender;     // rendered subexpression that went non-finite
  bool finite() const { return kind == ValueKind::Finite; }
};

// Throws EvalDomainError when the value is not a finite real.
double eval(const Expr& e, const EvalPoint& p);
// Non-throwing variant; classifies +/-inf and undefined outcomes.
EvalOutcome eval_extended(const Expr& e, const EvalPoint& p);

// Partial derivative with respect to state variable `var`.
// Throws NonDifferentiable for abs.
Expr differentiate(const Expr& e, int var);

// Constant folding and 0/1 identities; value-preserving on valid inputs.
Expr simplify(const Expr& e);

std::string render(const Expr& e);

struct ParseContext {
  int dim = 1;
  std::vector<std::string> params;
};

// Grammar:
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := atom ('^' exponent)?
//   atom   := number | ident | ident '(' expr ')' | '(' expr ')' | '-' atom
// where exponent is a number, a parameter name, or a parenthesized
// state-free expression. Identifiers: x, x1..x9, norm, exp, ln, sqrt, abs,
// plus declared parameter names. Whitespace-insensitive.
Expr parse(std::string_view src, const ParseContext& ctx = {});

bool structurally_equal(const Expr& a, const Expr& b);
bool depends_on_state(const Expr& e);
// Largest referenced variable index, or -1 when none. norm() counts as
// referencing the whole state but contributes no index.
int max_var_index(const Expr& e);
bool uses_norm(const Expr& e);
bool is_zero_const(const Expr& e);

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

// Flattened postfix program for fast repeated evaluation on the hot paths
// (path simulation, shell sampling). Parameters are resolved to constants
// at compile time. Thread-safe: evaluation keeps all scratch on the stack.
class CompiledExpr {
public:
  CompiledExpr() = default;
  CompiledExpr(const Expr& e, const std::map<std::string, double>& params, int dim);

  // Returns IEEE semantics (may be inf/nan) rather than throwing.
  double operator()(std::span<const double> state) const;
  bool valid() const { return !tape_.empty(); }

private:
  struct Instr {
    ExprOp op;
    double value;  // Const payload or Pow exponent
    int var;
  };
  std::vector<Instr> tape_;
  int dim_ = 0;
  std::size_t stack_need_ = 0;
};

}  // namespace blowup
