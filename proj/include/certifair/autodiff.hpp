#pragma once

// Minimal reverse-mode automatic differentiation over a scalar tape.
//
// The bound computations (interval and symbolic propagation, fairness upper
// bounds) are written once as templates over a scalar type.  Instantiated with
// `double` they evaluate; instantiated with `ad::Var` they also record a tape
// whose reverse sweep yields exact subgradients with respect to the network
// parameters.

#include <cmath>
#include <cstdint>
#include <vector>

namespace certifair {

/// Records the outcome of every data-dependent branch taken by the generic
/// scalar helpers while a recorder is installed.  Two evaluations with equal
/// logs lie in the same smooth piece of a piecewise-smooth function.
class BranchLog {
 public:
  BranchLog();
  ~BranchLog();
  BranchLog(const BranchLog&) = delete;
  BranchLog& operator=(const BranchLog&) = delete;

  const std::vector<bool>& outcomes() const { return outcomes_; }
  static void record(bool taken);

 private:
  std::vector<bool> outcomes_;
  BranchLog* previous_;
};

inline bool branch(bool cond) {
  BranchLog::record(cond);
  return cond;
}

namespace ad {

class Tape;

class Var {
 public:
  Var() = default;
  Var(double constant) : value_(constant) {}  // NOLINT: implicit by design of the generic code

  double value() const { return value_; }
  int index() const { return index_; }
  Tape* tape() const { return tape_; }
  bool is_constant() const { return tape_ == nullptr; }

 private:
  friend class Tape;
  Var(double value, int index, Tape* tape) : value_(value), index_(index), tape_(tape) {}

  double value_ = 0.0;
  int index_ = -1;
  Tape* tape_ = nullptr;
};

class Tape {
 public:
  /// A fresh independent variable.
  Var variable(double value);

  /// Node with up to two parents and the local partials d(node)/d(parent).
  Var record(double value, const Var& a, double da);
  Var record(double value, const Var& a, double da, const Var& b, double db);

  /// Adjoint of every node with respect to `output`.
  std::vector<double> adjoints(const Var& output) const;

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    std::int32_t a;
    std::int32_t b;
    double da;
    double db;
  };
  std::vector<Node> nodes_;
};

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }

Var exp(const Var& x);
Var log(const Var& x);
Var sigmoid(const Var& x);

}  // namespace ad

inline double value_of(double x) { return x; }
inline double value_of(const ad::Var& x) { return x.value(); }

inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <class S>
S relu(const S& x) {
  return branch(value_of(x) > 0.0) ? x : S(0.0);
}

/// max(x, 0) and min(x, 0); used to split weights by sign.
template <class S>
S positive_part(const S& x) {
  return branch(value_of(x) > 0.0) ? x : S(0.0);
}

template <class S>
S negative_part(const S& x) {
  return branch(value_of(x) < 0.0) ? x : S(0.0);
}

template <class S>
S max_of(const S& a, const S& b) {
  return branch(value_of(a) >= value_of(b)) ? a : b;
}

template <class S>
S min_of(const S& a, const S& b) {
  return branch(value_of(a) <= value_of(b)) ? a : b;
}

template <class S>
S clamp_to(const S& x, double lo, double hi) {
  if (branch(value_of(x) < lo)) return S(lo);
  if (branch(value_of(x) > hi)) return S(hi);
  return x;
}

}  // namespace certifair
