#include "certifair/autodiff.hpp"

#include <cmath>

namespace certifair {

namespace {
thread_local BranchLog* active_log = nullptr;
}  // namespace

BranchLog::BranchLog() : previous_(active_log) { active_log = this; }

BranchLog::~BranchLog() { active_log = previous_; }

void BranchLog::record(bool taken) {
  if (active_log != nullptr) {
    active_log->outcomes_.push_back(taken);
  }
}

namespace ad {

Var Tape::variable(double value) {
  nodes_.push_back({-1, -1, 0.0, 0.0});
  return Var(value, static_cast<int>(nodes_.size() - 1), this);
}

Var Tape::record(double value, const Var& a, double da) {
  nodes_.push_back({a.index(), -1, da, 0.0});
  return Var(value, static_cast<int>(nodes_.size() - 1), this);
}

Var Tape::record(double value, const Var& a, double da, const Var& b, double db) {
  nodes_.push_back({a.index(), b.index(), da, db});
  return Var(value, static_cast<int>(nodes_.size() - 1), this);
}

std::vector<double> Tape::adjoints(const Var& output) const {
  std::vector<double> adj(nodes_.size(), 0.0);
  if (output.is_constant()) {
    return adj;
  }
  adj[output.index()] = 1.0;
  for (std::size_t i = static_cast<std::size_t>(output.index()) + 1; i-- > 0;) {
    const double g = adj[i];
    if (g == 0.0) continue;
    const Node& n = nodes_[i];
    if (n.a >= 0) adj[n.a] += g * n.da;
    if (n.b >= 0) adj[n.b] += g * n.db;
  }
  return adj;
}

namespace {

// Unary node on whichever operand lives on a tape.
Var unary(double value, const Var& x, double dx) {
  if (x.is_constant()) return Var(value);
  return x.tape()->record(value, x, dx);
}

Var binary(double value, const Var& a, double da, const Var& b, double db) {
  if (a.is_constant() && b.is_constant()) return Var(value);
  if (a.is_constant()) return b.tape()->record(value, b, db);
  if (b.is_constant()) return a.tape()->record(value, a, da);
  return a.tape()->record(value, a, da, b, db);
}

}  // namespace

Var operator+(const Var& a, const Var& b) {
  return binary(a.value() + b.value(), a, 1.0, b, 1.0);
}

Var operator-(const Var& a, const Var& b) {
  return binary(a.value() - b.value(), a, 1.0, b, -1.0);
}

Var operator*(const Var& a, const Var& b) {
  return binary(a.value() * b.value(), a, b.value(), b, a.value());
}

Var operator/(const Var& a, const Var& b) {
  const double q = a.value() / b.value();
  return binary(q, a, 1.0 / b.value(), b, -q / b.value());
}

Var operator-(const Var& a) { return unary(-a.value(), a, -1.0); }

Var exp(const Var& x) {
  const double e = std::exp(x.value());
  return unary(e, x, e);
}

Var log(const Var& x) { return unary(std::log(x.value()), x, 1.0 / x.value()); }

Var sigmoid(const Var& x) {
  const double s = certifair::sigmoid(x.value());
  return unary(s, x, s * (1.0 - s));
}

}  // namespace ad
}  // namespace certifair
