#include "quadfit/diff.hpp"

#include <sstream>

namespace quadfit::diff {

void Tape::check_finite(double v) const {
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "non-finite value (" << v << ") while evaluating " << term_;
    throw NumericalError(os.str());
  }
}

Var Tape::variable(double v) {
  check_finite(v);
  nodes_.push_back({-1, -1, 0.0, 0.0});
  return Var(this, static_cast<int>(nodes_.size()) - 1, v);
}

Var Tape::unary(const Var& a, double value, double da) {
  check_finite(value);
  nodes_.push_back({a.index(), -1, da, 0.0});
  return Var(this, static_cast<int>(nodes_.size()) - 1, value);
}

Var Tape::binary(const Var& a, const Var& b, double value, double da, double db) {
  check_finite(value);
  nodes_.push_back({a.is_constant() ? -1 : a.index(), b.is_constant() ? -1 : b.index(), da, db});
  return Var(this, static_cast<int>(nodes_.size()) - 1, value);
}

std::vector<double> Tape::backward(std::span<const Var> outputs, std::span<const double> seeds) const {
  std::vector<double> adj(nodes_.size(), 0.0);
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    if (outputs[i].is_constant()) continue;
    if (outputs[i].tape() != this) throw std::logic_error("output recorded on another tape");
    adj[outputs[i].index()] += seeds[i];
  }
  for (std::size_t k = nodes_.size(); k-- > 0;) {
    const double g = adj[k];
    if (g == 0.0) continue;
    const Node& n = nodes_[k];
    if (n.a >= 0) adj[n.a] += g * n.da;
    if (n.b >= 0) adj[n.b] += g * n.db;
  }
  return adj;
}

namespace {

Tape* tape_of(const Var& a, const Var& b) {
  if (!a.is_constant()) return a.tape();
  return b.tape();
}

}  // namespace

Var operator+(const Var& a, const Var& b) {
  const double v = a.value() + b.value();
  if (Tape* t = tape_of(a, b)) return t->binary(a, b, v, 1.0, 1.0);
  return Var(v);
}

Var operator-(const Var& a, const Var& b) {
  const double v = a.value() - b.value();
  if (Tape* t = tape_of(a, b)) return t->binary(a, b, v, 1.0, -1.0);
  return Var(v);
}

Var operator*(const Var& a, const Var& b) {
  const double v = a.value() * b.value();
  if (Tape* t = tape_of(a, b)) return t->binary(a, b, v, b.value(), a.value());
  return Var(v);
}

Var operator/(const Var& a, const Var& b) {
  const double v = a.value() / b.value();
  if (Tape* t = tape_of(a, b)) return t->binary(a, b, v, 1.0 / b.value(), -v / b.value());
  return Var(v);
}

Var operator-(const Var& a) {
  if (a.is_constant()) return Var(-a.value());
  return a.tape()->unary(a, -a.value(), -1.0);
}

#define QUADFIT_UNARY(NAME, VALUE, DERIV)             \
  Var NAME(const Var& a) {                            \
    const double x = a.value();                       \
    const double v = (VALUE);                         \
    if (a.is_constant()) return Var(v);               \
    return a.tape()->unary(a, v, (DERIV));            \
  }

QUADFIT_UNARY(sin, std::sin(x), std::cos(x))
QUADFIT_UNARY(cos, std::cos(x), -std::sin(x))
QUADFIT_UNARY(sqrt, std::sqrt(x), 0.5 / v)
QUADFIT_UNARY(exp, std::exp(x), v)
QUADFIT_UNARY(log, std::log(x), 1.0 / x)
QUADFIT_UNARY(tanh, std::tanh(x), 1.0 - v * v)
QUADFIT_UNARY(log1p, std::log1p(x), 1.0 / (1.0 + x))

#undef QUADFIT_UNARY

std::vector<Var> GradTape::register_slot(const std::string& name, std::span<const double> values) {
  for (const Slot& s : slots_)
    if (s.name == name) throw std::logic_error("slot '" + name + "' registered twice");
  std::vector<Var> vars;
  vars.reserve(values.size());
  const int first = static_cast<int>(tape_.size());
  for (double v : values) vars.push_back(tape_.variable(v));
  slots_.push_back({name, first, static_cast<int>(values.size())});
  return vars;
}

Gradients GradTape::backward(const Var& output) const {
  const double one = 1.0;
  return backward(std::span<const Var>(&output, 1), std::span<const double>(&one, 1));
}

Gradients GradTape::backward(std::span<const Var> outputs, std::span<const double> seeds) const {
  const std::vector<double> adj = tape_.backward(outputs, seeds);
  Gradients out;
  for (const Slot& s : slots_)
    out[s.name] = std::vector<double>(adj.begin() + s.first, adj.begin() + s.first + s.count);
  return out;
}

}  // namespace quadfit::diff
