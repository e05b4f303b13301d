#include "blowup/expr.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cctype>
#include <cmath>
#include <cstring>

namespace blowup {

namespace {

ExprNodePtr make_node(ExprNode n) { return std::make_shared<const ExprNode>(std::move(n)); }

ExprNodePtr leaf_const(double c) {
  ExprNode n;
  n.op = ExprOp::Const;
  n.value = c;
  return make_node(std::move(n));
}

ExprNodePtr unary(ExprOp op, ExprNodePtr a) {
  ExprNode n;
  n.op = op;
  n.a = std::move(a);
  return make_node(std::move(n));
}

ExprNodePtr binary(ExprOp op, ExprNodePtr a, ExprNodePtr b) {
  ExprNode n;
  n.op = op;
  n.a = std::move(a);
  n.b = std::move(b);
  return make_node(std::move(n));
}

bool node_depends_on_state(const ExprNode& n) {
  switch (n.op) {
    case ExprOp::Var:
    case ExprOp::Norm:
      return true;
    case ExprOp::Const:
    case ExprOp::Param:
      return false;
    default:
      return (n.a && node_depends_on_state(*n.a)) || (n.b && node_depends_on_state(*n.b));
  }
}

}  // namespace

Expr Expr::constant(double c) { return Expr(leaf_const(c)); }

Expr Expr::variable(int index) {
  ExprNode n;
  n.op = ExprOp::Var;
  n.var = index;
  return Expr(make_node(std::move(n)));
}

Expr Expr::parameter(std::string name) {
  ExprNode n;
  n.op = ExprOp::Param;
  n.param = std::move(name);
  return Expr(make_node(std::move(n)));
}

Expr Expr::norm() {
  ExprNode n;
  n.op = ExprOp::Norm;
  return Expr(make_node(std::move(n)));
}

Expr operator+(const Expr& a, const Expr& b) { return Expr(binary(ExprOp::Add, a.ptr(), b.ptr())); }
Expr operator-(const Expr& a, const Expr& b) { return Expr(binary(ExprOp::Sub, a.ptr(), b.ptr())); }
Expr operator*(const Expr& a, const Expr& b) { return Expr(binary(ExprOp::Mul, a.ptr(), b.ptr())); }
Expr operator/(const Expr& a, const Expr& b) { return Expr(binary(ExprOp::Div, a.ptr(), b.ptr())); }
Expr operator-(const Expr& a) { return Expr(unary(ExprOp::Neg, a.ptr())); }
Expr exp(const Expr& a) { return Expr(unary(ExprOp::Exp, a.ptr())); }
Expr ln(const Expr& a) { return Expr(unary(ExprOp::Ln, a.ptr())); }
Expr abs(const Expr& a) { return Expr(unary(ExprOp::Abs, a.ptr())); }
Expr sqrt(const Expr& a) { return Expr(unary(ExprOp::Sqrt, a.ptr())); }

Expr pow(const Expr& base, const Expr& exponent) {
  if (node_depends_on_state(exponent.node()))
    throw ParseError("non-constant exponent", 0);
  return Expr(binary(ExprOp::Pow, base.ptr(), exponent.ptr()));
}

Expr pow(const Expr& base, double exponent) { return pow(base, Expr::constant(exponent)); }

bool depends_on_state(const Expr& e) { return node_depends_on_state(e.node()); }

int max_var_index(const Expr& e) {
  const ExprNode& n = e.node();
  int best = -1;
  if (n.op == ExprOp::Var) return n.var;
  if (n.a) best = std::max(best, max_var_index(Expr(n.a)));
  if (n.b) best = std::max(best, max_var_index(Expr(n.b)));
  return best;
}

bool uses_norm(const Expr& e) {
  const ExprNode& n = e.node();
  if (n.op == ExprOp::Norm) return true;
  if (n.a && uses_norm(Expr(n.a))) return true;
  if (n.b && uses_norm(Expr(n.b))) return true;
  return false;
}

bool is_zero_const(const Expr& e) {
  return e.node().op == ExprOp::Const && e.node().value == 0.0;
}

bool structurally_equal(const Expr& a, const Expr& b) {
  const ExprNode& x = a.node();
  const ExprNode& y = b.node();
  if (x.op != y.op) return false;
  switch (x.op) {
    case ExprOp::Const:
      return x.value == y.value;
    case ExprOp::Var:
      return x.var == y.var;
    case ExprOp::Param:
      return x.param == y.param;
    case ExprOp::Norm:
      return true;
    default:
      break;
  }
  if (static_cast<bool>(x.a) != static_cast<bool>(y.a)) return false;
  if (static_cast<bool>(x.b) != static_cast<bool>(y.b)) return false;
  if (x.a && !structurally_equal(Expr(x.a), Expr(y.a))) return false;
  if (x.b && !structurally_equal(Expr(x.b), Expr(y.b))) return false;
  return true;
}

std::string format_double(double v) {
  std::array<char, 32> buf;
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

struct EvalVisitor {
  const EvalPoint& p;
  EvalOutcome bad;       // first non-finite outcome encountered
  bool failed = false;

  double fail(ValueKind kind, const ExprNode& n, const char* what) {
    if (!failed) {
      failed = true;
      bad.kind = kind;
      bad.offender = render(Expr(make_node(ExprNode(n))));
      bad.value = 0.0;
      (void)what;
    }
    return 0.0;
  }

  double visit(const ExprNode& n) {
    if (failed) return 0.0;
    switch (n.op) {
      case ExprOp::Const:
        return n.value;
      case ExprOp::Var: {
        if (n.var < 0 || static_cast<std::size_t>(n.var) >= p.state.size())
          return fail(ValueKind::Undefined, n, "variable index out of range");
        return p.state[static_cast<std::size_t>(n.var)];
      }
      case ExprOp::Param: {
        auto it = p.params.find(n.param);
        if (it == p.params.end()) return fail(ValueKind::Undefined, n, "unbound parameter");
        return it->second;
      }
      case ExprOp::Norm: {
        double s = 0.0;
        for (double x : p.state) s += x * x;
        return std::sqrt(s);
      }
      case ExprOp::Neg:
        return -visit(*n.a);
      case ExprOp::Exp: {
        double v = std::exp(visit(*n.a));
        if (failed) return 0.0;
        if (std::isinf(v)) return fail(ValueKind::PosInf, n, "exp overflow");
        return v;
      }
      case ExprOp::Ln: {
        double u = visit(*n.a);
        if (failed) return 0.0;
        if (u < 0.0) return fail(ValueKind::Undefined, n, "ln of negative");
        if (u == 0.0) return fail(ValueKind::NegInf, n, "ln of zero");
        return std::log(u);
      }
      case ExprOp::Abs:
        return std::fabs(visit(*n.a));
      case ExprOp::Sqrt: {
        double u = visit(*n.a);
        if (failed) return 0.0;
        if (u < 0.0) return fail(ValueKind::Undefined, n, "sqrt of negative");
        return std::sqrt(u);
      }
      case ExprOp::Add: {
        double v = visit(*n.a) + visit(*n.b);
        if (failed) return 0.0;
        if (std::isinf(v)) return fail(v > 0 ? ValueKind::PosInf : ValueKind::NegInf, n, "overflow");
        return v;
      }
      case ExprOp::Sub: {
        double v = visit(*n.a) - visit(*n.b);
        if (failed) return 0.0;
        if (std::isinf(v)) return fail(v > 0 ? ValueKind::PosInf : ValueKind::NegInf, n, "overflow");
        return v;
      }
      case ExprOp::Mul: {
        double v = visit(*n.a) * visit(*n.b);
        if (failed) return 0.0;
        if (std::isinf(v)) return fail(v > 0 ? ValueKind::PosInf : ValueKind::NegInf, n, "overflow");
        return v;
      }
      case ExprOp::Div: {
        double num = visit(*n.a);
        double den = visit(*n.b);
        if (failed) return 0.0;
        if (den == 0.0) return fail(ValueKind::Undefined, n, "division by zero");
        double v = num / den;
        if (std::isinf(v)) return fail(v > 0 ? ValueKind::PosInf : ValueKind::NegInf, n, "overflow");
        return v;
      }
      case ExprOp::Pow: {
        double base = visit(*n.a);
        double ex = visit(*n.b);
        if (failed) return 0.0;
        if (base == 0.0 && ex < 0.0) return fail(ValueKind::PosInf, n, "zero to negative power");
        if (base < 0.0 && ex != std::floor(ex))
          return fail(ValueKind::Undefined, n, "negative base, fractional exponent");
        double v = std::pow(base, ex);
        if (std::isnan(v)) return fail(ValueKind::Undefined, n, "pow undefined");
        if (std::isinf(v)) return fail(v > 0 ? ValueKind::PosInf : ValueKind::NegInf, n, "overflow");
        return v;
      }
    }
    return 0.0;
  }
};

}  // namespace

EvalOutcome eval_extended(const Expr& e, const EvalPoint& p) {
  EvalVisitor v{p};
  double value = v.visit(e.node());
  if (v.failed) return v.bad;
  if (!std::isfinite(value)) {
    EvalOutcome out;
    out.kind = std::isnan(value) ? ValueKind::Undefined
                                 : (value > 0 ? ValueKind::PosInf : ValueKind::NegInf);
    out.offender = render(e);
    return out;
  }
  EvalOutcome out;
  out.kind = ValueKind::Finite;
  out.value = value;
  return out;
}

double eval(const Expr& e, const EvalPoint& p) {
  EvalOutcome out = eval_extended(e, p);
  if (!out.finite()) {
    const char* what = out.kind == ValueKind::PosInf   ? "value is +inf"
                       : out.kind == ValueKind::NegInf ? "value is -inf"
                                                       : "value undefined";
    throw EvalDomainError(what, out.offender);
  }
  return out.value;
}

// ---------------------------------------------------------------------------
// Differentiation

namespace {

Expr diff_node(const ExprNode& n, int var) {
  const Expr zero = Expr::constant(0.0);
  switch (n.op) {
    case ExprOp::Const:
    case ExprOp::Param:
      return zero;
    case ExprOp::Var:
      return Expr::constant(n.var == var ? 1.0 : 0.0);
    case ExprOp::Norm:
      // d norm(x) / d x_i = x_i / norm(x)
      return Expr::variable(var) / Expr::norm();
    case ExprOp::Neg:
      return -diff_node(*n.a, var);
    case ExprOp::Exp:
      return exp(Expr(n.a)) * diff_node(*n.a, var);
    case ExprOp::Ln:
      return diff_node(*n.a, var) / Expr(n.a);
    case ExprOp::Sqrt:
      return diff_node(*n.a, var) / (Expr::constant(2.0) * sqrt(Expr(n.a)));
    case ExprOp::Abs:
      throw NonDifferentiable("abs is not symbolically differentiable; use sqrt(x^2) away from 0");
    case ExprOp::Add:
      return diff_node(*n.a, var) + diff_node(*n.b, var);
    case ExprOp::Sub:
      return diff_node(*n.a, var) - diff_node(*n.b, var);
    case ExprOp::Mul:
      return diff_node(*n.a, var) * Expr(n.b) + Expr(n.a) * diff_node(*n.b, var);
    case ExprOp::Div:
      return (diff_node(*n.a, var) * Expr(n.b) - Expr(n.a) * diff_node(*n.b, var)) /
             pow(Expr(n.b), 2.0);
    case ExprOp::Pow: {
      // exponent is state-free: d/dx a^p = p * a^(p-1) * a'
      Expr p(n.b);
      Expr base(n.a);
      return p * pow(base, p - Expr::constant(1.0)) * diff_node(*n.a, var);
    }
  }
  return zero;
}

}  // namespace

Expr differentiate(const Expr& e, int var) { return simplify(diff_node(e.node(), var)); }

// ---------------------------------------------------------------------------
// Simplification

namespace {

bool const_val(const Expr& e, double& out) {
  if (e.node().op == ExprOp::Const) {
    out = e.node().value;
    return true;
  }
  return false;
}

Expr simplify_node(const Expr& e) {
  const ExprNode& n = e.node();
  switch (n.op) {
    case ExprOp::Const:
    case ExprOp::Var:
    case ExprOp::Param:
    case ExprOp::Norm:
      return e;
    default:
      break;
  }

  Expr a = n.a ? simplify_node(Expr(n.a)) : Expr();
  Expr b = n.b ? simplify_node(Expr(n.b)) : Expr();
  double ca = 0.0, cb = 0.0;
  bool ka = n.a && const_val(a, ca);
  bool kb = n.b && const_val(b, cb);

  auto fold1 = [&](double v) -> std::optional<Expr> {
    if (std::isfinite(v)) return Expr::constant(v);
    return std::nullopt;  // keep the tree; evaluation reports the domain issue
  };

  switch (n.op) {
    case ExprOp::Neg:
      if (ka) return Expr::constant(-ca);
      if (a.node().op == ExprOp::Neg) return Expr(a.node().a);
      return -a;
    case ExprOp::Exp:
      if (ka)
        if (auto f = fold1(std::exp(ca))) return *f;
      return exp(a);
    case ExprOp::Ln:
      if (ka && ca > 0.0)
        if (auto f = fold1(std::log(ca))) return *f;
      return ln(a);
    case ExprOp::Abs:
      if (ka) return Expr::constant(std::fabs(ca));
      return abs(a);
    case ExprOp::Sqrt:
      if (ka && ca >= 0.0)
        if (auto f = fold1(std::sqrt(ca))) return *f;
      return sqrt(a);
    case ExprOp::Add:
      if (ka && kb)
        if (auto f = fold1(ca + cb)) return *f;
      if (ka && ca == 0.0) return b;
      if (kb && cb == 0.0) return a;
      return a + b;
    case ExprOp::Sub:
      if (ka && kb)
        if (auto f = fold1(ca - cb)) return *f;
      if (kb && cb == 0.0) return a;
      if (ka && ca == 0.0) return simplify_node(-b);
      return a - b;
    case ExprOp::Mul:
      if (ka && kb)
        if (auto f = fold1(ca * cb)) return *f;
      if ((ka && ca == 0.0) || (kb && cb == 0.0)) return Expr::constant(0.0);
      if (ka && ca == 1.0) return b;
      if (kb && cb == 1.0) return a;
      return a * b;
    case ExprOp::Div:
      if (ka && kb && cb != 0.0)
        if (auto f = fold1(ca / cb)) return *f;
      if (kb && cb == 1.0) return a;
      return a / b;
    case ExprOp::Pow:
      if (kb && cb == 1.0) return a;
      if (kb && cb == 0.0) return Expr::constant(1.0);
      if (ka && kb) {
        double v = std::pow(ca, cb);
        if (std::isfinite(v) && !(ca < 0.0 && cb != std::floor(cb)))
          return Expr::constant(v);
      }
      return pow(a, b);
    default:
      break;
  }
  return e;
}

}  // namespace

Expr simplify(const Expr& e) { return simplify_node(e); }

// ---------------------------------------------------------------------------
// Rendering

namespace {

// Precedence levels: expr(+,-)=1, term(*,/)=2, factor(^)=3, atom=4.
int node_level(const ExprNode& n) {
  switch (n.op) {
    case ExprOp::Add:
    case ExprOp::Sub:
      return 1;
    case ExprOp::Mul:
    case ExprOp::Div:
      return 2;
    case ExprOp::Pow:
      return 3;
    case ExprOp::Neg:
      return 3;  // '-' atom sits at factor level (may carry an exponent)
    default:
      return 4;
  }
}

void render_node(const ExprNode& n, std::string& out, int min_level);

void render_wrapped(const ExprNode& n, std::string& out, int min_level) {
  if (node_level(n) < min_level) {
    out += '(';
    render_node(n, out, 1);
    out += ')';
  } else {
    render_node(n, out, min_level);
  }
}

void render_node(const ExprNode& n, std::string& out, int min_level) {
  switch (n.op) {
    case ExprOp::Const: {
      if (n.value < 0.0 || std::signbit(n.value)) {
        // negative literal binds like '-' atom: parenthesize where a bare
        // '-' would change the parse
        if (min_level > 3) {
          out += '(';
          out += format_double(n.value);
          out += ')';
        } else {
          out += format_double(n.value);
        }
      } else {
        out += format_double(n.value);
      }
      return;
    }
    case ExprOp::Var:
      out += 'x';
      if (n.var > 0) out += static_cast<char>('1' + n.var);
      return;
    case ExprOp::Param:
      out += n.param;
      return;
    case ExprOp::Norm:
      out += "norm(x)";
      return;
    case ExprOp::Neg:
      out += '-';
      render_wrapped(*n.a, out, 4);
      return;
    case ExprOp::Exp:
    case ExprOp::Ln:
    case ExprOp::Abs:
    case ExprOp::Sqrt: {
      out += n.op == ExprOp::Exp ? "exp" : n.op == ExprOp::Ln ? "ln" : n.op == ExprOp::Abs ? "abs" : "sqrt";
      out += '(';
      render_node(*n.a, out, 1);
      out += ')';
      return;
    }
    case ExprOp::Add:
      render_wrapped(*n.a, out, 1);
      out += '+';
      render_wrapped(*n.b, out, 2);
      return;
    case ExprOp::Sub:
      render_wrapped(*n.a, out, 1);
      out += '-';
      render_wrapped(*n.b, out, 2);
      return;
    case ExprOp::Mul:
      render_wrapped(*n.a, out, 2);
      out += '*';
      render_wrapped(*n.b, out, 3);
      return;
    case ExprOp::Div:
      render_wrapped(*n.a, out, 2);
      out += '/';
      render_wrapped(*n.b, out, 3);
      return;
    case ExprOp::Pow: {
      render_wrapped(*n.a, out, 4);
      out += '^';
      const ExprNode& ex = *n.b;
      if (ex.op == ExprOp::Const && !std::signbit(ex.value)) {
        out += format_double(ex.value);
      } else if (ex.op == ExprOp::Param) {
        out += ex.param;
      } else {
        out += '(';
        render_node(ex, out, 1);
        out += ')';
      }
      return;
    }
  }
}

}  // namespace

std::string render(const Expr& e) {
  std::string out;
  render_node(e.node(), out, 1);
  return out;
}

// ---------------------------------------------------------------------------
// Parser

namespace {

class Parser {
public:
  Parser(std::string_view src, const ParseContext& ctx) : src_(src), ctx_(ctx) {}

  Expr run() {
    Expr e = parse_expr();
    skip_ws();
    if (pos_ != src_.size()) throw ParseError("unexpected trailing input", pos_);
    return e;
  }

private:
  std::string_view src_;
  const ParseContext& ctx_;
  std::size_t pos_ = 0;

  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool eat(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  char peek() {
    skip_ws();
    return pos_ < src_.size() ? src_[pos_] : '\0';
  }

  Expr parse_expr() {
    Expr e = parse_term();
    for (;;) {
      if (eat('+'))
        e = e + parse_term();
      else if (eat('-'))
        e = e - parse_term();
      else
        return e;
    }
  }

  Expr parse_term() {
    Expr e = parse_factor();
    for (;;) {
      if (eat('*'))
        e = e * parse_factor();
      else if (eat('/'))
        e = e / parse_factor();
      else
        return e;
    }
  }

  Expr parse_factor() {
    Expr base = parse_atom();
    if (eat('^')) {
      std::size_t at = pos_;
      Expr ex = parse_exponent();
      if (depends_on_state(ex)) throw ParseError("non-constant exponent", at);
      return pow(base, ex);
    }
    return base;
  }

  Expr parse_exponent() {
    skip_ws();
    if (pos_ >= src_.size()) throw ParseError("missing exponent", pos_);
    char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = parse_expr();
      if (!eat(')')) throw ParseError("unbalanced parenthesis", pos_);
      return fold_const(e);
    }
    if (c == '-') {
      ++pos_;
      Expr e = parse_exponent();
      return fold_const(-e);
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t at = pos_;
      std::string id = parse_ident_name();
      if (is_param(id)) return Expr::parameter(id);
      throw ParseError("exponent must be a number or parameter, got '" + id + "'", at);
    }
    throw ParseError("missing exponent", pos_);
  }

  Expr fold_const(const Expr& e) {
    Expr s = simplify(e);
    return s;
  }

  Expr parse_atom() {
    skip_ws();
    if (pos_ >= src_.size()) throw ParseError("unexpected end of input", pos_);
    char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = parse_expr();
      if (!eat(')')) throw ParseError("unbalanced parenthesis", pos_);
      return e;
    }
    if (c == '-') {
      ++pos_;
      Expr inner = parse_atom();
      if (inner.node().op == ExprOp::Const) return Expr::constant(-inner.node().value);
      return -inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_ident();
    throw ParseError(std::string("unexpected character '") + c + "'", pos_);
  }

  Expr parse_number() {
    skip_ws();
    const char* begin = src_.data() + pos_;
    const char* end = src_.data() + src_.size();
    double value = 0.0;
    auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc()) throw ParseError("invalid number", pos_);
    pos_ += static_cast<std::size_t>(res.ptr - begin);
    return Expr::constant(value);
  }

  std::string parse_ident_name() {
    skip_ws();
    std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
      ++pos_;
    return std::string(src_.substr(start, pos_ - start));
  }

  bool is_param(const std::string& id) const {
    return std::find(ctx_.params.begin(), ctx_.params.end(), id) != ctx_.params.end();
  }

  Expr parse_ident() {
    std::size_t at = pos_;
    std::string id = parse_ident_name();
    if (id == "x") {
      if (ctx_.dim < 1) throw ParseError("state variable in zero-dimensional context", at);
      return Expr::variable(0);
    }
    if (id.size() == 2 && id[0] == 'x' && id[1] >= '1' && id[1] <= '9') {
      int idx = id[1] - '1';
      if (idx >= ctx_.dim)
        throw ParseError("variable " + id + " exceeds model dimension", at);
      return Expr::variable(idx);
    }
    if (id == "norm" || id == "exp" || id == "ln" || id == "sqrt" || id == "abs") {
      if (!eat('(')) throw ParseError("expected '(' after " + id, pos_);
      Expr arg = parse_expr();
      if (!eat(')')) throw ParseError("unbalanced parenthesis", pos_);
      if (id == "norm") {
        // norm's argument is the state vector itself; accept norm(x) only.
        if (arg.node().op != ExprOp::Var || arg.node().var != 0)
          throw ParseError("norm takes the whole state: write norm(x)", at);
        return Expr::norm();
      }
      if (id == "exp") return exp(arg);
      if (id == "ln") return ln(arg);
      if (id == "sqrt") return sqrt(arg);
      return abs(arg);
    }
    if (is_param(id)) return Expr::parameter(id);
    throw ParseError("unknown identifier '" + id + "'", at);
  }
};

}  // namespace

Expr parse(std::string_view src, const ParseContext& ctx) { return Parser(src, ctx).run(); }

// ---------------------------------------------------------------------------
// Compiled form

namespace {

void flatten(const ExprNode& n, const std::map<std::string, double>& params,
             std::vector<std::tuple<ExprOp, double, int>>& out) {
  switch (n.op) {
    case ExprOp::Const:
      out.emplace_back(ExprOp::Const, n.value, 0);
      return;
    case ExprOp::Var:
      out.emplace_back(ExprOp::Var, 0.0, n.var);
      return;
    case ExprOp::Param: {
      auto it = params.find(n.param);
      if (it == params.end()) throw ConfigError("unbound parameter '" + n.param + "'");
      out.emplace_back(ExprOp::Const, it->second, 0);
      return;
    }
    case ExprOp::Norm:
      out.emplace_back(ExprOp::Norm, 0.0, 0);
      return;
    case ExprOp::Pow: {
      flatten(*n.a, params, out);
      // exponent is state-free; evaluate it now
      EvalPoint p;
      for (const auto& kv : params) p.params.emplace(kv.first, kv.second);
      double ex = eval(Expr(n.b), p);
      out.emplace_back(ExprOp::Pow, ex, 0);
      return;
    }
    default:
      if (n.a) flatten(*n.a, params, out);
      if (n.b) flatten(*n.b, params, out);
      out.emplace_back(n.op, 0.0, 0);
      return;
  }
}

}  // namespace

CompiledExpr::CompiledExpr(const Expr& e, const std::map<std::string, double>& params, int dim)
    : dim_(dim) {
  std::vector<std::tuple<ExprOp, double, int>> flat;
  flatten(e.node(), params, flat);
  tape_.reserve(flat.size());
  std::size_t depth = 0, max_depth = 0;
  for (auto& [op, value, var] : flat) {
    switch (op) {
      case ExprOp::Const:
      case ExprOp::Var:
      case ExprOp::Norm:
        ++depth;
        break;
      case ExprOp::Add:
      case ExprOp::Sub:
      case ExprOp::Mul:
      case ExprOp::Div:
        --depth;
        break;
      default:
        break;  // unary and Pow keep depth
    }
    max_depth = std::max(max_depth, depth);
    tape_.push_back(Instr{op, value, var});
  }
  stack_need_ = max_depth + 1;
}

double CompiledExpr::operator()(std::span<const double> state) const {
  double local[64];
  std::vector<double> heap;
  double* st = local;
  if (stack_need_ > 64) {
    heap.resize(stack_need_);
    st = heap.data();
  }
  std::size_t top = 0;
  for (const Instr& in : tape_) {
    switch (in.op) {
      case ExprOp::Const:
        st[top++] = in.value;
        break;
      case ExprOp::Var:
        st[top++] = state[static_cast<std::size_t>(in.var)];
        break;
      case ExprOp::Norm: {
        double s = 0.0;
        for (double x : state) s += x * x;
        st[top++] = std::sqrt(s);
        break;
      }
      case ExprOp::Neg:
        st[top - 1] = -st[top - 1];
        break;
      case ExprOp::Exp:
        st[top - 1] = std::exp(st[top - 1]);
        break;
      case ExprOp::Ln:
        st[top - 1] = std::log(st[top - 1]);
        break;
      case ExprOp::Abs:
        st[top - 1] = std::fabs(st[top - 1]);
        break;
      case ExprOp::Sqrt:
        st[top - 1] = std::sqrt(st[top - 1]);
        break;
      case ExprOp::Pow:
        st[top - 1] = std::pow(st[top - 1], in.value);
        break;
      case ExprOp::Add:
        st[top - 2] += st[top - 1];
        --top;
        break;
      case ExprOp::Sub:
        st[top - 2] -= st[top - 1];
        --top;
        break;
      case ExprOp::Mul:
        st[top - 2] *= st[top - 1];
        --top;
        break;
      case ExprOp::Div:
        st[top - 2] /= st[top - 1];
        --top;
        break;
      default:
        break;
    }
  }
  return st[0];
}

}  // namespace blowup
