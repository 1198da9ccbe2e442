#pragma once

// Minimal reverse-mode tape over scalars.
//
// Used for the small, branchy parts of the model (rotation exponentials,
// forward kinematics, camera parameterization). Per-vertex work is
// differentiated with hand-written vector-Jacobian products instead.

#include "quadfit/common.hpp"

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace quadfit::diff {

class Tape;

/// A scalar that may be recorded on a tape. A Var with no tape is a constant.
class Var {
 public:
  Var() = default;
  Var(double v) : value_(v) {}  // NOLINT: implicit constant promotion
  Var(Tape* tape, int index, double v) : tape_(tape), index_(index), value_(v) {}

  double value() const { return value_; }
  int index() const { return index_; }
  Tape* tape() const { return tape_; }
  bool is_constant() const { return tape_ == nullptr; }

 private:
  Tape* tape_ = nullptr;
  int index_ = -1;
  double value_ = 0.0;
};

class Tape {
 public:
  Var variable(double v);
  Var unary(const Var& a, double value, double da);
  Var binary(const Var& a, const Var& b, double value, double da, double db);

  /// Label attached to non-finite failures raised while recording.
  void set_term(std::string term) { term_ = std::move(term); }
  const std::string& term() const { return term_; }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  /// Accumulates adjoints from seeded outputs; returns one adjoint per node.
  std::vector<double> backward(std::span<const Var> outputs, std::span<const double> seeds) const;

 private:
  struct Node {
    int a, b;
    double da, db;
  };
  void check_finite(double v) const;

  std::vector<Node> nodes_;
  std::string term_ = "expression";
};

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }

Var sin(const Var& a);
Var cos(const Var& a);
Var sqrt(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var tanh(const Var& a);
Var log1p(const Var& a);

inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.value(); }

using Gradients = std::map<std::string, std::vector<double>>;

/// Tape plus a registry of named parameter slots.
class GradTape {
 public:
  /// Registers a slot and returns tape variables for its entries.
  std::vector<Var> register_slot(const std::string& name, std::span<const double> values);

  Tape& tape() { return tape_; }

  /// Gradient of a scalar output per registered slot. Slots the output does
  /// not depend on get exact zeros.
  Gradients backward(const Var& output) const;
  Gradients backward(std::span<const Var> outputs, std::span<const double> seeds) const;

 private:
  struct Slot {
    std::string name;
    int first;
    int count;
  };
  Tape tape_;
  std::vector<Slot> slots_;
};

/// Convenience: registers `slots`, evaluates `fn(tape, vars)`, returns per-slot
/// gradients together with the forward value.
template <class Fn>
std::pair<double, Gradients> grad(const std::map<std::string, std::vector<double>>& slots, Fn&& fn) {
  GradTape gt;
  std::map<std::string, std::vector<Var>> vars;
  for (const auto& [name, values] : slots) vars[name] = gt.register_slot(name, values);
  Var out = fn(gt.tape(), vars);
  return {out.value(), gt.backward(out)};
}

}  // namespace quadfit::diff
