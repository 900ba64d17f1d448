#include "certifair/verifier.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>

#include "certifair/errors.hpp"
#include "certifair/lp.hpp"

namespace certifair {

using nlohmann::json;

json VerifierLimits::to_json() const { return {{"max_nodes", max_nodes}, {"timeout_secs", timeout_secs}}; }

std::string to_string(VerdictKind kind) {
  switch (kind) {
    case VerdictKind::fair: return "fair";
    case VerdictKind::unfair: return "unfair";
    case VerdictKind::resource_limit: return "resource_limit";
  }
  return "resource_limit";
}

namespace {

using Clock = std::chrono::steady_clock;

// One copy of the network inside a query.  A positive copy must reach
// logit >= 0, a negative one logit <= -tau.
struct QueryCopy {
  AffineInput input;
  bool positive = true;
};

struct Query {
  Box box;
  std::vector<lp::Constraint> side;  // linear constraints over z
  std::vector<QueryCopy> copies;
  // Turns an LP point over z into a concrete pair (clamped into the domain).
  std::function<CounterexamplePair(std::span<const double>)> candidate;
};

enum class SearchOutcome { exhausted, found, limit };

struct SearchStats {
  std::size_t visited = 0;
  std::size_t expanded = 0;
};

// Dense linear expression over the LP variables.
struct Expr {
  std::vector<double> coeffs;
  double constant = 0.0;
};

class Search {
 public:
  Search(const MLPNetwork& net, const Query& q, const FairnessProperty& prop, const DatasetSchema& schema,
         std::size_t node_budget, Clock::time_point deadline)
      : net_(net), q_(q), prop_(prop), schema_(schema), budget_(node_budget), deadline_(deadline) {}

  SearchOutcome run() {
    std::vector<std::vector<ReluSplits>> stack;
    stack.emplace_back(q_.copies.size(), no_splits(net_));
    bool inconclusive = false;
    while (!stack.empty()) {
      if (stats_.visited >= budget_ || Clock::now() > deadline_) return SearchOutcome::limit;
      auto splits = std::move(stack.back());
      stack.pop_back();
      ++stats_.visited;
      const auto step = process(splits);
      if (step.found) return SearchOutcome::found;
      if (step.inconclusive) inconclusive = true;
      if (step.branch) {
        ++stats_.expanded;
        const auto [copy, layer, neuron] = *step.branch;
        auto inactive = splits;
        inactive[copy][layer][neuron] = ReluPhase::inactive;
        splits[copy][layer][neuron] = ReluPhase::active;
        stack.push_back(std::move(inactive));
        stack.push_back(std::move(splits));
      }
    }
    return inconclusive ? SearchOutcome::limit : SearchOutcome::exhausted;
  }

  const SearchStats& stats() const { return stats_; }
  const std::optional<CounterexamplePair>& counterexample() const { return found_; }

 private:
  struct Neuron {
    std::size_t copy;
    std::size_t layer;
    std::size_t neuron;
  };
  struct Step {
    bool found = false;
    bool inconclusive = false;
    std::optional<std::tuple<std::size_t, std::size_t, std::size_t>> branch;
  };

  Step process(const std::vector<ReluSplits>& splits) {
    Step step;
    const auto& layers = net_.layers();
    std::vector<LinearBounds<double>> lb;
    lb.reserve(q_.copies.size());
    for (std::size_t c = 0; c < q_.copies.size(); ++c) {
      lb.push_back(symbolic_bounds<double>(layers, q_.copies[c].input, q_.box, &splits[c]));
      if (!lb.back().feasible) return step;
      const auto& out = lb.back().output().concrete;
      if (q_.copies[c].positive ? out.hi < 0.0 : out.lo > -kMarginTau) return step;
    }
    if (!difference_may_reach_margin(lb)) return step;

    // Unstable neurons, widest first; ties by layer, copy, neuron.
    std::vector<Neuron> unstable;
    std::optional<Neuron> widest;
    double widest_width = -1.0;
    for (std::size_t li = 0; li + 1 < layers.size(); ++li) {
      for (std::size_t c = 0; c < q_.copies.size(); ++c) {
        for (std::size_t r = 0; r < layers[li].fan_out; ++r) {
          const auto& iv = lb[c].pre[li][r].concrete;
          if (splits[c][li][r] != ReluPhase::free || !(iv.lo < 0.0 && iv.hi > 0.0)) continue;
          unstable.push_back({c, li, r});
          if (iv.hi - iv.lo > widest_width) {
            widest_width = iv.hi - iv.lo;
            widest = unstable.back();
          }
        }
      }
    }

    bool lp_feasible = true;
    try {
      const auto res = solve_relaxation(lb, splits, unstable.size());
      if (res.status == lp::Status::infeasible) {
        lp_feasible = false;
      } else if (res.status == lp::Status::feasible) {
        auto pair = q_.candidate(std::span<const double>(res.point).first(q_.box.dim()));
        if (validate_counterexample(net_, pair, prop_, schema_)) {
          found_ = std::move(pair);
          step.found = true;
          return step;
        }
      }
    } catch (const SolverError&) {
      // No pruning from this node; branching stays sound.
    }
    if (!lp_feasible) return step;
    if (!widest) {
      // Every ReLU is fixed, so the LP was exact; a feasible point that does
      // not survive exact re-evaluation sits on the tolerance boundary.
      step.inconclusive = true;
      return step;
    }
    step.branch = std::make_tuple(widest->copy, widest->layer, widest->neuron);
    return step;
  }

  bool difference_may_reach_margin(const std::vector<LinearBounds<double>>& lb) const {
    if (q_.copies.size() != 2) return true;
    const std::size_t p = q_.copies[0].positive ? 0 : 1;
    const std::size_t n = 1 - p;
    const auto& up = lb[p].output().upper;
    const auto& lo = lb[n].output().lower;
    AffineForm<double> diff;
    diff.coeffs.resize(up.coeffs.size());
    for (std::size_t j = 0; j < up.coeffs.size(); ++j) diff.coeffs[j] = up.coeffs[j] - lo.coeffs[j];
    diff.constant = up.constant - lo.constant;
    return form_max(diff, q_.box) >= kMarginTau;
  }

  lp::Result solve_relaxation(const std::vector<LinearBounds<double>>& lb, const std::vector<ReluSplits>& splits,
                              std::size_t unstable_count) const {
    const auto& layers = net_.layers();
    const std::size_t k = q_.box.dim();
    const std::size_t nv = k + unstable_count + 1;
    const std::size_t t_var = nv - 1;
    lp::LinearProgram prog(nv);
    for (std::size_t j = 0; j < k; ++j) {
      prog.lower[j] = q_.box.lo[j];
      prog.upper[j] = q_.box.hi[j];
    }
    for (const auto& c : q_.side) {
      auto coeffs = c.coeffs;
      coeffs.resize(nv, 0.0);
      prog.add(std::move(coeffs), c.relation, c.rhs);
    }
    auto add_expr = [&](const Expr& e, lp::Relation rel, double rhs) {
      bool any = false;
      for (double v : e.coeffs) any = any || v != 0.0;
      if (!any) return;  // constant rows are already decided by the bounds
      prog.add(e.coeffs, rel, rhs - e.constant);
    };

    std::size_t next_y = k;
    for (std::size_t c = 0; c < q_.copies.size(); ++c) {
      const auto& in = q_.copies[c].input;
      std::vector<Expr> post(in.rows);
      for (std::size_t r = 0; r < in.rows; ++r) {
        post[r].coeffs.assign(nv, 0.0);
        for (std::size_t j = 0; j < k; ++j) post[r].coeffs[j] = in.coeff(r, j);
        post[r].constant = in.offset[r];
      }
      for (std::size_t li = 0; li < layers.size(); ++li) {
        const auto& l = layers[li];
        std::vector<Expr> pre(l.fan_out);
        for (std::size_t r = 0; r < l.fan_out; ++r) {
          pre[r].coeffs.assign(nv, 0.0);
          pre[r].constant = l.bias[r];
          for (std::size_t i = 0; i < l.fan_in; ++i) {
            const double w = l.weight(r, i);
            if (w == 0.0) continue;
            for (std::size_t j = 0; j < nv; ++j) pre[r].coeffs[j] += w * post[i].coeffs[j];
            pre[r].constant += w * post[i].constant;
          }
        }
        if (li + 1 == layers.size()) {
          Expr logit = pre[0];
          if (q_.copies[c].positive) {
            logit.coeffs[t_var] -= 1.0;
            add_expr(logit, lp::Relation::greater_equal, 0.0);
          } else {
            logit.coeffs[t_var] += 1.0;
            add_expr(logit, lp::Relation::less_equal, -kMarginTau);
          }
          break;
        }
        std::vector<Expr> next(l.fan_out);
        for (std::size_t r = 0; r < l.fan_out; ++r) {
          const auto& iv = lb[c].pre[li][r].concrete;
          const ReluPhase ph = splits[c][li][r];
          next[r].coeffs.assign(nv, 0.0);
          if (ph == ReluPhase::inactive || iv.hi <= 0.0) {
            add_expr(pre[r], lp::Relation::less_equal, 0.0);
          } else if (ph == ReluPhase::active || iv.lo >= 0.0) {
            add_expr(pre[r], lp::Relation::greater_equal, 0.0);
            next[r] = pre[r];
          } else {
            const std::size_t y = next_y++;
            prog.upper[y] = iv.hi;
            // y >= pre
            Expr e = pre[r];
            for (double& v : e.coeffs) v = -v;
            e.constant = -e.constant;
            e.coeffs[y] += 1.0;
            add_expr(e, lp::Relation::greater_equal, 0.0);
            // y <= s (pre - l)
            const double s = iv.hi / (iv.hi - iv.lo);
            Expr u = pre[r];
            for (double& v : u.coeffs) v = -s * v;
            u.constant = -s * (u.constant - iv.lo);
            u.coeffs[y] += 1.0;
            add_expr(u, lp::Relation::less_equal, 0.0);
            next[r].coeffs[y] = 1.0;
          }
        }
        post = std::move(next);
      }
    }
    if (next_y != k + unstable_count) throw InternalError("verifier: unstable neuron count mismatch");
    prog.objective[t_var] = 1.0;
    prog.sense = lp::Sense::maximize;
    return lp::solve(prog);
  }

  const MLPNetwork& net_;
  const Query& q_;
  const FairnessProperty& prop_;
  const DatasetSchema& schema_;
  std::size_t budget_;
  Clock::time_point deadline_;
  SearchStats stats_;
  std::optional<CounterexamplePair> found_;
};

// Runs the queries in order against a shared node budget and deadline.
Verdict run_queries(const MLPNetwork& net, const std::vector<Query>& queries, const FairnessProperty& prop,
                    const DatasetSchema& schema, const VerifierLimits& limits) {
  const auto start = Clock::now();
  const auto deadline = start + std::chrono::duration_cast<Clock::duration>(
                                    std::chrono::duration<double>(std::max(0.0, limits.timeout_secs)));
  Verdict v;
  bool limited = false;
  for (const auto& q : queries) {
    const std::size_t left = limits.max_nodes > v.nodes_visited ? limits.max_nodes - v.nodes_visited : 0;
    Search search(net, q, prop, schema, left, deadline);
    const auto outcome = search.run();
    v.nodes_visited += search.stats().visited;
    v.nodes_expanded += search.stats().expanded;
    if (outcome == SearchOutcome::found) {
      v.kind = VerdictKind::unfair;
      v.counterexample = search.counterexample();
      break;
    }
    if (outcome == SearchOutcome::limit) {
      limited = true;
      if (left == 0 || Clock::now() > deadline) break;
    }
  }
  if (v.kind != VerdictKind::unfair && limited) v.kind = VerdictKind::resource_limit;
  v.millis = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  return v;
}

}  // namespace

Verdict verify_partition(const MLPNetwork& net, const Partition& partition, const FairnessProperty& prop,
                         const DatasetSchema& schema, const VerifierLimits& limits) {
  prop.validate(schema);
  if (net.input_dim() != schema.column_count()) {
    throw InputError("model expects " + std::to_string(net.input_dim()) + " inputs, schema encodes " +
                     std::to_string(schema.column_count()));
  }
  const auto [a, b] = partition.sensitive_pair;
  const auto enc = encode_partition(prop, schema, partition, a, b);
  const std::size_t m = enc.numerical_count;
  const auto& num = schema.numerical_features();

  std::vector<lp::Constraint> side;
  for (std::size_t k = 0; k < m; ++k) {
    std::vector<double> row(2 * m, 0.0);
    row[k] = 1.0;
    row[m + k] = 1.0;
    side.push_back({row, lp::Relation::greater_equal, partition.numerical_box[k].lo});
    side.push_back({row, lp::Relation::less_equal, partition.numerical_box[k].hi});
  }

  auto candidate = [&](std::span<const double> z) {
    std::vector<double> x = enc.first.offset;
    std::vector<double> xp = enc.second.offset;
    for (std::size_t k = 0; k < m; ++k) {
      const auto& d = partition.numerical_box[k];
      const std::size_t col = schema.column_of(num[k]);
      const double xv = std::clamp(z[k], d.lo, d.hi);
      const double lo = std::max(d.lo, xv - prop.delta[k]);
      const double hi = std::min(d.hi, xv + prop.delta[k]);
      x[col] = xv;
      xp[col] = std::clamp(xv + z[m + k], std::min(lo, hi), std::max(lo, hi));
    }
    return make_pair(net, std::move(x), std::move(xp));
  };

  // Exchanging x and x' also exchanges their sensitive levels, so both
  // orientations of the class difference are searched.
  std::vector<Query> queries;
  for (const bool first_positive : {true, false}) {
    Query q;
    q.box = enc.box;
    q.side = side;
    q.copies = {{enc.first, first_positive}, {enc.second, !first_positive}};
    q.candidate = candidate;
    queries.push_back(std::move(q));
  }
  return run_queries(net, queries, prop, schema, limits);
}

Verdict verify_local(const MLPNetwork& net, std::span<const double> x, const FairnessProperty& prop,
                     const DatasetSchema& schema, const VerifierLimits& limits, bool pin_sensitive) {
  prop.validate(schema);
  if (x.size() != schema.column_count() || net.input_dim() != x.size()) {
    throw InputError("local verification: point has " + std::to_string(x.size()) + " columns, expected " +
                     std::to_string(schema.column_count()));
  }
  if (!in_domain(x, prop, schema)) throw InputError("local verification: point lies outside the property domain");
  const auto& num = schema.numerical_features();
  const std::size_t m = num.size();
  const std::size_t n = x.size();
  const int cls = predict(net, x);
  const std::size_t s_idx = schema.sensitive_index();
  const std::size_t s_col = schema.column_of(s_idx);
  const std::size_t s_width = schema.width_of(s_idx);

  Box box{std::vector<double>(m), std::vector<double>(m)};
  for (std::size_t k = 0; k < m; ++k) {
    const double xv = x[schema.column_of(num[k])];
    box.lo[k] = std::min(0.0, std::max(-prop.delta[k], prop.domain[k].lo - xv));
    box.hi[k] = std::max(0.0, std::min(prop.delta[k], prop.domain[k].hi - xv));
  }

  std::size_t own_level = 0;
  for (std::size_t j = 0; j < s_width; ++j) {
    if (x[s_col + j] == 1.0) own_level = j;
  }

  std::vector<Query> queries;
  for (std::size_t level = 0; level < s_width; ++level) {
    if (pin_sensitive && level != own_level) continue;
    AffineInput in;
    in.rows = n;
    in.cols = m;
    in.matrix.assign(n * m, 0.0);
    in.offset.assign(x.begin(), x.end());
    for (std::size_t j = 0; j < s_width; ++j) in.offset[s_col + j] = j == level ? 1.0 : 0.0;
    for (std::size_t k = 0; k < m; ++k) in.matrix[schema.column_of(num[k]) * m + k] = 1.0;

    Query q;
    q.box = box;
    q.copies = {{in, cls == 0}};
    q.candidate = [&net, &prop, &schema, &num, x, offset = in.offset, m](std::span<const double> z) {
      std::vector<double> xp = offset;
      for (std::size_t k = 0; k < m; ++k) {
        const std::size_t col = schema.column_of(num[k]);
        const double lo = std::max(prop.domain[k].lo, x[col] - prop.delta[k]);
        const double hi = std::min(prop.domain[k].hi, x[col] + prop.delta[k]);
        xp[col] = std::clamp(x[col] + z[k], std::min(lo, hi), std::max(lo, hi));
      }
      return make_pair(net, std::vector<double>(x.begin(), x.end()), std::move(xp));
    };
    queries.push_back(std::move(q));
  }
  return run_queries(net, queries, prop, schema, limits);
}

std::size_t CertificationReport::total_nodes_expanded() const {
  std::size_t total = 0;
  for (const auto& p : partitions) total += p.verdict.nodes_expanded;
  return total;
}

json CertificationReport::to_json(const DatasetSchema& schema) const {
  json parts = json::array();
  for (const auto& p : partitions) {
    json e{{"assignment", p.partition.assignment_json(schema)},
           {"sensitive_pair", p.partition.sensitive_pair_json(schema)},
           {"verdict", to_string(p.verdict.kind)},
           {"nodes", p.verdict.nodes_visited},
           {"nodes_expanded", p.verdict.nodes_expanded},
           {"millis", p.verdict.millis}};
    if (p.verdict.counterexample) e["counterexample"] = p.verdict.counterexample->to_json();
    parts.push_back(std::move(e));
  }
  json j{{"certified_global_fairness_pct", certified_pct},
         {"accuracy_pct", accuracy_pct ? json(*accuracy_pct) : json(nullptr)},
         {"positivity_rate_pct", positivity_pct ? json(*positivity_pct) : json(nullptr)},
         {"partitions", std::move(parts)},
         {"summary",
          {{"total", partitions.size()}, {"fair", fair}, {"unfair", unfair}, {"resource_limit", resource_limited}}},
         {"property", property.to_json()},
         {"limits", limits.to_json()}};
  return j;
}

CertificationReport certify(const MLPNetwork& net, const FairnessProperty& prop, const DatasetSchema& schema,
                            const VerifierLimits& limits, std::size_t jobs, std::size_t partition_cap) {
  prop.validate(schema);
  CertificationReport report;
  report.property = prop;
  report.limits = limits;
  const auto parts = enumerate_partitions(prop, schema, partition_cap);
  std::vector<Verdict> verdicts(parts.size());

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= parts.size()) return;
      try {
        verdicts[i] = verify_partition(net, parts[i], prop, schema, limits);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = parts.size();
        return;
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(1, parts.size()));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (std::size_t i = 0; i < parts.size(); ++i) {
    switch (verdicts[i].kind) {
      case VerdictKind::fair: ++report.fair; break;
      case VerdictKind::unfair: ++report.unfair; break;
      case VerdictKind::resource_limit: ++report.resource_limited; break;
    }
    report.partitions.push_back({parts[i], std::move(verdicts[i])});
  }
  report.certified_pct = parts.empty() ? 100.0 : 100.0 * static_cast<double>(report.fair) / parts.size();
  return report;
}

}  // namespace certifair
