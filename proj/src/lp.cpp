#include "certifair/lp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "certifair/errors.hpp"

namespace certifair::lp {

namespace {

constexpr double kPivotTolerance = 1e-9;
constexpr double kCostTolerance = 1e-9;

// x_j = shift + sign * y[col] (+ second column with the opposite sign for free variables).
struct VarMap {
  double shift = 0.0;
  double sign = 1.0;
  std::size_t col = 0;
  bool split = false;  // free variable: x = y[col] - y[col + 1]
};

class Tableau {
 public:
  Tableau(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * (cols + 1), 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data_[r * (cols_ + 1) + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * (cols_ + 1) + c]; }
  double& rhs(std::size_t r) { return at(r, cols_); }
  double rhs(std::size_t r) const { return at(r, cols_); }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  void remove_row(std::size_t r) {
    data_.erase(data_.begin() + static_cast<std::ptrdiff_t>(r * (cols_ + 1)),
                data_.begin() + static_cast<std::ptrdiff_t>((r + 1) * (cols_ + 1)));
    --rows_;
  }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> data_;
};

class Simplex {
 public:
  Simplex(Tableau t, std::vector<std::size_t> basis, std::size_t pivot_budget)
      : t_(std::move(t)), basis_(std::move(basis)), budget_(pivot_budget) {}

  // Minimizes cost over columns not marked excluded.  Returns false if unbounded.
  bool minimize(const std::vector<double>& cost, const std::vector<bool>& excluded) {
    const std::size_t n = t_.cols();
    obj_.assign(n + 1, 0.0);
    for (std::size_t j = 0; j < n; ++j) obj_[j] = cost[j];
    for (std::size_t i = 0; i < t_.rows(); ++i) {
      const double cb = cost[basis_[i]];
      if (cb == 0.0) continue;
      for (std::size_t j = 0; j <= n; ++j) obj_[j] -= cb * t_.at(i, j);
    }
    while (true) {
      std::size_t enter = n;
      for (std::size_t j = 0; j < n; ++j) {
        if (!excluded[j] && obj_[j] < -kCostTolerance) {
          enter = j;
          break;
        }
      }
      if (enter == n) return true;

      std::size_t leave = t_.rows();
      double best = 0.0;
      for (std::size_t i = 0; i < t_.rows(); ++i) {
        const double a = t_.at(i, enter);
        if (a <= kPivotTolerance) continue;
        const double ratio = std::max(t_.rhs(i), 0.0) / a;
        if (leave == t_.rows() || ratio < best - 1e-12 * std::max(1.0, best) ||
            (std::abs(ratio - best) <= 1e-12 * std::max(1.0, best) && basis_[i] < basis_[leave])) {
          leave = i;
          best = ratio;
        }
      }
      if (leave == t_.rows()) return false;
      pivot(leave, enter);
    }
  }

  void pivot(std::size_t r, std::size_t e) {
    if (budget_ == 0) throw SolverError("simplex pivot budget exhausted");
    --budget_;
    const std::size_t n = t_.cols();
    const double p = t_.at(r, e);
    if (!std::isfinite(p) || std::abs(p) < 1e-14) throw SolverError("simplex hit a degenerate pivot element");
    for (std::size_t j = 0; j <= n; ++j) t_.at(r, j) /= p;
    t_.at(r, e) = 1.0;
    for (std::size_t i = 0; i < t_.rows(); ++i) {
      if (i == r) continue;
      const double f = t_.at(i, e);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j <= n; ++j) t_.at(i, j) -= f * t_.at(r, j);
      t_.at(i, e) = 0.0;
    }
    if (!obj_.empty()) {
      const double f = obj_[e];
      if (f != 0.0) {
        for (std::size_t j = 0; j <= n; ++j) obj_[j] -= f * t_.at(r, j);
        obj_[e] = 0.0;
      }
    }
    basis_[r] = e;
  }

  // Current objective value of the last minimize() call.
  double objective_value() const { return -obj_.back(); }

  Tableau& tableau() { return t_; }
  std::vector<std::size_t>& basis() { return basis_; }

  std::vector<double> solution() const {
    std::vector<double> y(t_.cols(), 0.0);
    for (std::size_t i = 0; i < t_.rows(); ++i) y[basis_[i]] = std::max(t_.rhs(i), 0.0);
    return y;
  }

 private:
  Tableau t_;
  std::vector<std::size_t> basis_;
  std::vector<double> obj_;
  std::size_t budget_;
};

}  // namespace

double max_violation(const LinearProgram& program, const std::vector<double>& point) {
  double worst = 0.0;
  for (std::size_t j = 0; j < program.num_vars; ++j) {
    worst = std::max(worst, program.lower[j] - point[j]);
    worst = std::max(worst, point[j] - program.upper[j]);
  }
  for (const auto& c : program.constraints) {
    double lhs = 0.0;
    for (std::size_t j = 0; j < program.num_vars; ++j) lhs += c.coeffs[j] * point[j];
    const double scale = 1.0 + std::abs(c.rhs);
    double v = 0.0;
    switch (c.relation) {
      case Relation::less_equal: v = lhs - c.rhs; break;
      case Relation::greater_equal: v = c.rhs - lhs; break;
      case Relation::equal: v = std::abs(lhs - c.rhs); break;
    }
    worst = std::max(worst, v / scale);
  }
  return worst;
}

Result solve(const LinearProgram& program) {
  const std::size_t n = program.num_vars;
  if (program.lower.size() != n || program.upper.size() != n || program.objective.size() != n) {
    throw InternalError("LP: bound/objective vectors do not match num_vars");
  }
  for (const auto& c : program.constraints) {
    if (c.coeffs.size() != n) throw InternalError("LP: constraint length does not match num_vars");
    for (double a : c.coeffs) {
      if (!std::isfinite(a)) throw InternalError("LP: non-finite constraint coefficient");
    }
    if (!std::isfinite(c.rhs)) throw InternalError("LP: non-finite right-hand side");
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (program.lower[j] > program.upper[j]) return {Status::infeasible, {}, 0.0};
  }

  // Substitute nonnegative variables.
  std::vector<VarMap> map(n);
  std::size_t ny = 0;
  struct Row {
    std::vector<std::pair<std::size_t, double>> terms;
    Relation rel;
    double rhs;
  };
  std::vector<Row> rows;
  for (std::size_t j = 0; j < n; ++j) {
    const double lo = program.lower[j];
    const double hi = program.upper[j];
    if (std::isfinite(lo)) {
      map[j] = {lo, 1.0, ny++, false};
      if (std::isfinite(hi)) rows.push_back({{{map[j].col, 1.0}}, Relation::less_equal, hi - lo});
    } else if (std::isfinite(hi)) {
      map[j] = {hi, -1.0, ny++, false};
    } else {
      map[j] = {0.0, 1.0, ny, true};
      ny += 2;
    }
  }
  for (const auto& c : program.constraints) {
    Row row{{}, c.relation, c.rhs};
    for (std::size_t j = 0; j < n; ++j) {
      const double a = c.coeffs[j];
      if (a == 0.0) continue;
      row.rhs -= a * map[j].shift;
      row.terms.emplace_back(map[j].col, a * map[j].sign);
      if (map[j].split) row.terms.emplace_back(map[j].col + 1, -a);
    }
    rows.push_back(std::move(row));
  }

  // Slack / artificial columns.
  const std::size_t m = rows.size();
  std::size_t ns = 0;
  for (const auto& r : rows) ns += r.rel == Relation::equal ? 0 : 1;
  std::vector<bool> needs_artificial(m, false);
  std::size_t na = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const auto& r = rows[i];
    const bool flip = r.rhs < 0.0;
    // A slack is usable as the starting basic variable only if its sign is +1.
    const bool slack_plus = (r.rel == Relation::less_equal && !flip) || (r.rel == Relation::greater_equal && flip);
    needs_artificial[i] = !slack_plus;
    na += needs_artificial[i] ? 1 : 0;
  }
  const std::size_t cols = ny + ns + na;
  Tableau t(m, cols);
  std::vector<std::size_t> basis(m);
  std::size_t slack = ny;
  std::size_t art = ny + ns;
  for (std::size_t i = 0; i < m; ++i) {
    const auto& r = rows[i];
    const double s = r.rhs < 0.0 ? -1.0 : 1.0;
    for (const auto& [col, a] : r.terms) t.at(i, col) += s * a;
    t.rhs(i) = s * r.rhs;
    if (r.rel != Relation::equal) {
      const double slack_sign = r.rel == Relation::less_equal ? 1.0 : -1.0;
      t.at(i, slack) = s * slack_sign;
      if (!needs_artificial[i]) basis[i] = slack;
      ++slack;
    }
    if (needs_artificial[i]) {
      t.at(i, art) = 1.0;
      basis[i] = art++;
    }
  }

  const std::size_t budget = 200 * (m + cols) + 10000;
  Simplex sx(std::move(t), std::move(basis), budget);

  // Phase 1.
  std::vector<bool> excluded(cols, false);
  if (na > 0) {
    std::vector<double> cost(cols, 0.0);
    for (std::size_t j = ny + ns; j < cols; ++j) cost[j] = 1.0;
    sx.minimize(cost, excluded);
    double scale = 1.0;
    for (const auto& r : rows) scale = std::max(scale, std::abs(r.rhs));
    if (sx.objective_value() > kFeasibilityTolerance * scale) return {Status::infeasible, {}, 0.0};
    // Drive remaining artificials out of the basis.
    auto& tab = sx.tableau();
    for (std::size_t i = 0; i < tab.rows();) {
      if (sx.basis()[i] < ny + ns) {
        ++i;
        continue;
      }
      std::size_t enter = cols;
      for (std::size_t j = 0; j < ny + ns; ++j) {
        if (std::abs(tab.at(i, j)) > kPivotTolerance) {
          enter = j;
          break;
        }
      }
      if (enter == cols) {
        tab.remove_row(i);
        sx.basis().erase(sx.basis().begin() + static_cast<std::ptrdiff_t>(i));
        continue;
      }
      sx.pivot(i, enter);
      ++i;
    }
    for (std::size_t j = ny + ns; j < cols; ++j) excluded[j] = true;
  }

  // Phase 2.
  std::vector<double> cost(cols, 0.0);
  if (program.sense != Sense::feasibility) {
    const double dir = program.sense == Sense::maximize ? -1.0 : 1.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double c = dir * program.objective[j];
      cost[map[j].col] += c * map[j].sign;
      if (map[j].split) cost[map[j].col + 1] -= c;
    }
  }
  if (!sx.minimize(cost, excluded)) return {Status::unbounded, {}, 0.0};

  const auto y = sx.solution();
  Result res;
  res.status = Status::feasible;
  res.point.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    double v = map[j].shift + map[j].sign * y[map[j].col];
    if (map[j].split) v -= y[map[j].col + 1];
    res.point[j] = std::clamp(v, program.lower[j], program.upper[j]);
  }
  res.objective = 0.0;
  for (std::size_t j = 0; j < n; ++j) res.objective += program.objective[j] * res.point[j];
  const double viol = max_violation(program, res.point);
  if (!(viol <= kFeasibilityTolerance)) {
    throw SolverError("LP solution violates constraints by " + std::to_string(viol));
  }
  return res;
}

}  // namespace certifair::lp
