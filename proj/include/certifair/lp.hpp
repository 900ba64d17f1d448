#pragma once

#include <cstddef>
#include <limits>
#include <vector>

namespace certifair::lp {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();
inline constexpr double kFeasibilityTolerance = 1e-7;

enum class Relation { less_equal, greater_equal, equal };
enum class Sense { minimize, maximize, feasibility };

struct Constraint {
  std::vector<double> coeffs;
  Relation relation = Relation::less_equal;
  double rhs = 0.0;
};

/// Dense LP.  Variables default to [0, +inf); bounds may be infinite on
/// either side.
struct LinearProgram {
  std::size_t num_vars = 0;
  std::vector<Constraint> constraints;
  std::vector<double> objective;
  Sense sense = Sense::feasibility;
  std::vector<double> lower;
  std::vector<double> upper;

  LinearProgram() = default;
  explicit LinearProgram(std::size_t n)
      : num_vars(n), objective(n, 0.0), lower(n, 0.0), upper(n, kInfinity) {}

  void add(std::vector<double> coeffs, Relation rel, double rhs) {
    constraints.push_back({std::move(coeffs), rel, rhs});
  }
};

enum class Status { feasible, infeasible, unbounded };

struct Result {
  Status status = Status::infeasible;
  std::vector<double> point;
  double objective = 0.0;
};

/// Two-phase dense tableau simplex with Bland's rule.  Throws SolverError when
/// the pivot budget is exhausted or the returned point fails the constraint
/// re-check.
Result solve(const LinearProgram& program);

/// Largest violation of any constraint or bound at `point`.
double max_violation(const LinearProgram& program, const std::vector<double>& point);

}  // namespace certifair::lp
