// Acceptance harness: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include <unistd.h>

#include "certifair/bounds.hpp"
#include "certifair/cli.hpp"
#include "certifair/model_io.hpp"
#include "certifair/training.hpp"
#include "certifair/verifier.hpp"
#include "support.hpp"
#include "synthetic.hpp"

using namespace certifair;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---------------------------------------------------------------------------
// Criteria 1-3: random corpus checked against the grid oracle.

struct CorpusStats {
  std::size_t nets = 0;
  std::size_t partitions = 0;
  std::size_t fair = 0;
  std::size_t unfair = 0;
  std::size_t resource = 0;
  std::size_t unsound = 0;        // Fair but the grid finds a class flip
  std::size_t missed = 0;         // grid pair with margin but no Unfair verdict
  std::size_t emitted = 0;
  std::size_t valid = 0;
  double seconds = 0.0;
};

CorpusStats run_corpus() {
  CorpusStats st;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(0xACCE55);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double deltas[] = {0.02, 0.05, 0.1};
  for (int t = 0; t < 100; ++t) {
    // input dim 3: one numerical + binary sensitive; input dim 4: two
    // numericals + binary sensitive, or one numerical + three sensitive levels.
    std::size_t m = 1;
    std::size_t levels = 2;
    switch (t % 3) {
      case 0: break;
      case 1: m = 2; break;
      case 2: levels = 3; break;
    }
    const auto schema = testing::make_schema(m, {}, levels);
    std::vector<Interval> domain;
    for (std::size_t k = 0; k < m; ++k) {
      const double w = 0.2 + 0.8 * u(rng);
      const double lo = (1.0 - w) * u(rng);
      domain.push_back({lo, lo + w});
    }
    const auto prop = testing::make_property(schema, deltas[rng() % 3], domain);
    std::vector<std::size_t> dims{schema.column_count(), 2 + rng() % 7};
    if (rng() % 2) dims.push_back(2 + rng() % 7);
    dims.push_back(1);
    const auto net = testing::random_net(dims, rng);
    const auto report = certify(net, prop, schema, VerifierLimits{100000, 60.0});
    ++st.nets;
    for (const auto& pr : report.partitions) {
      ++st.partitions;
      const auto grid = testing::grid_partition(net, prop, schema, pr.partition, 0.02, 2 * kMarginTau);
      switch (pr.verdict.kind) {
        case VerdictKind::fair:
          ++st.fair;
          if (grid.class_flips > 0) ++st.unsound;
          break;
        case VerdictKind::unfair:
          ++st.unfair;
          break;
        case VerdictKind::resource_limit:
          ++st.resource;
          break;
      }
      if (grid.margin_flips > 0 && pr.verdict.kind != VerdictKind::unfair) ++st.missed;
      if (pr.verdict.counterexample) {
        ++st.emitted;
        if (validate_counterexample(net, *pr.verdict.counterexample, prop, schema)) ++st.valid;
      }
    }
  }
  st.seconds = seconds_since(t0);
  return st;
}

// ---------------------------------------------------------------------------
// Criterion 4: bound soundness on sampled points.

std::vector<std::vector<double>> pre_activations(const MLPNetwork& net, const std::vector<double>& x) {
  std::vector<std::vector<double>> out;
  std::vector<double> a = x;
  for (const auto& l : net.layers()) {
    std::vector<double> z(l.fan_out);
    for (std::size_t r = 0; r < l.fan_out; ++r) {
      double s = l.bias[r];
      for (std::size_t c = 0; c < l.fan_in; ++c) s += l.weight(r, c) * a[c];
      z[r] = s;
    }
    out.push_back(z);
    a = z;
    for (double& v : a) v = std::max(v, 0.0);
  }
  return out;
}

Outcome criterion_bounds() {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::size_t violations = 0;
  std::size_t tighter = 0;
  std::size_t equal = 0;
  std::size_t cases = 0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t d = 2 + rng() % 5;
    std::vector<std::size_t> dims{d, 4 + rng() % 29};
    if (t % 2) dims.push_back(4 + rng() % 29);
    dims.push_back(1);
    const auto net = testing::random_net(dims, rng, 0.5, 0.3);
    Box box;
    for (std::size_t i = 0; i < d; ++i) {
      const double c = u(rng);
      const double r = 0.6 * unit(rng);
      box.lo.push_back(c - r);
      box.hi.push_back(c + r);
    }
    const auto ib = interval_bounds(net, box);
    const auto sb = symbolic_bounds(net, box);
    for (int s = 0; s < 10000; ++s) {
      std::vector<double> x(d);
      for (std::size_t i = 0; i < d; ++i) x[i] = box.lo[i] + (box.hi[i] - box.lo[i]) * unit(rng);
      const auto pre = pre_activations(net, x);
      for (std::size_t li = 0; li < pre.size(); ++li) {
        for (std::size_t r = 0; r < pre[li].size(); ++r) {
          const double v = pre[li][r];
          const auto& nb = sb.pre[li][r];
          double lo_form = nb.lower.constant;
          double hi_form = nb.upper.constant;
          for (std::size_t i = 0; i < d; ++i) {
            lo_form += nb.lower.coeffs[i] * x[i];
            hi_form += nb.upper.coeffs[i] * x[i];
          }
          const bool bad = v < ib.pre[li][r].lo - 1e-9 || v > ib.pre[li][r].hi + 1e-9 ||
                           v < nb.concrete.lo - 1e-9 || v > nb.concrete.hi + 1e-9 || v < lo_form - 1e-9 ||
                           v > hi_form + 1e-9;
          if (bad) ++violations;
        }
      }
    }
    ++cases;
    const double wi = ib.output().hi - ib.output().lo;
    const double ws = sb.output().concrete.hi - sb.output().concrete.lo;
    if (ws < wi - 1e-12) {
      ++tighter;
    } else if (ws <= wi + 1e-12) {
      ++equal;
    }
  }
  const bool pass = violations == 0 && tighter + equal == cases;
  std::ostringstream os;
  os << cases << " nets x 10000 samples, " << violations << " violations; symbolic narrower in " << tighter
     << ", equal in " << equal << ", wider in " << cases - tighter - equal;
  return {pass, os.str()};
}

// ---------------------------------------------------------------------------
// Criterion 5: composite-loss gradients against central differences.

Outcome criterion_gradients() {
  const auto schema = testing::make_schema(2, {2}, 2);
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  for (int t = 0; t < 20; ++t) {
    const double lo0 = 0.3 * unit(rng);
    const auto prop = testing::make_property(schema, 0.02 + 0.08 * unit(rng), {{lo0, lo0 + 0.5}, {0.0, 1.0}});
    std::vector<std::size_t> dims{schema.column_count(), 3 + rng() % 5};
    if (t % 2) dims.push_back(3 + rng() % 5);
    dims.push_back(1);
    const auto net = testing::random_net(dims, rng);
    std::vector<std::vector<double>> xs;
    for (int i = 0; i < 8; ++i) xs.push_back(testing::random_domain_point(prop, schema, rng));
    std::vector<LabeledPoint> batch;
    for (int i = 0; i < 8; ++i) batch.push_back({xs[i], static_cast<int>(rng() % 2)});
    TrainingConfig cfg;
    cfg.lambda_f = 0.1 + 0.8 * unit(rng);
    cfg.regularizer = t % 2 ? Regularizer::local : Regularizer::global;
    cfg.bound_mode = (t / 2) % 2 ? BoundMode::symbolic : BoundMode::interval;

    auto eval = [&](const MLPNetwork& n, std::vector<bool>& log_out) {
      BranchLog log;
      const double v = composite_loss(n, batch, prop, schema, cfg).total;
      log_out = log.outcomes();
      return v;
    };
    std::vector<bool> base;
    (void)eval(net, base);
    const auto g = composite_loss(net, batch, prop, schema, cfg).gradient;
    const auto theta = net.parameters();
    const double h = 1e-6;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      auto plus = theta;
      auto minus = theta;
      plus[i] += h;
      minus[i] -= h;
      MLPNetwork np = net, nm = net;
      np.set_parameters(plus);
      nm.set_parameters(minus);
      std::vector<bool> lp, lm;
      const double vp = eval(np, lp);
      const double vm = eval(nm, lm);
      if (lp != base || lm != base) {
        ++skipped;
        continue;
      }
      worst = std::max(worst, testing::relative_error((vp - vm) / (2 * h), g[i], 1e-4));
      ++checked;
    }
  }
  std::ostringstream os;
  os << "20 configurations, " << checked << " components checked (" << skipped
     << " skipped at kinks), max relative error " << fmt("%.2e", worst);
  return {checked > 0 && worst <= 1e-3, os.str()};
}

// ---------------------------------------------------------------------------
// Criterion 6: a zero final layer makes every partition fair at the root.

Outcome criterion_zero_bound() {
  const auto schema = testing::make_schema(2, {3, 2}, 3);
  const auto prop = testing::make_property(schema, 0.05);
  std::mt19937_64 rng(606);
  auto layers = testing::random_net({schema.column_count(), 8, 8, 1}, rng).layers();
  for (double& w : layers.back().weights) w = 0.0;
  const MLPNetwork net(schema.column_count(), layers);
  const double bound = global_fairness_upper(net, prop, schema, nullptr);
  const auto report = certify(net, prop, schema, VerifierLimits{});
  std::ostringstream os;
  os << "bound " << bound << ", certified " << report.certified_pct << "% of " << report.partitions.size()
     << " partitions, " << report.total_nodes_expanded() << " nodes expanded";
  return {bound == 0.0 && report.certified_pct == 100.0 && report.total_nodes_expanded() == 0, os.str()};
}

// ---------------------------------------------------------------------------
// Criteria 7 and 9: trade-off experiments on the generated biased data.
//
// n0 ~ U[0,1], n1 ~ U[0,0.5], binary sensitive s.  Label is [n0 > 0.35]
// with 10% flips, except inside |n0 - 0.5| <= 0.05 where level 0 is always
// negative and level 1 always positive.  The property covers that band over
// the whole n1 range with delta 0.02.

testing::BiasedDataSpec biased_spec(std::uint64_t seed) {
  testing::BiasedDataSpec s;
  s.rows = 5000;
  s.seed = seed;
  s.center = 0.5;
  s.band = 0.05;
  s.cut = 0.35;
  s.p_level0 = 0.0;
  s.noise = 0.1;
  s.n1_max = 0.5;
  return s;
}

FairnessProperty biased_property(const DatasetSchema& schema) {
  return testing::make_property(schema, 0.02, {{0.45, 0.55}, {0.0, 1.0}});
}

TrainingConfig tradeoff_config(double lambda, Regularizer reg, std::uint64_t seed) {
  TrainingConfig c;
  c.lambda_f = lambda;
  c.regularizer = lambda == 0.0 ? Regularizer::none : reg;
  c.epochs = 50;
  c.batch_size = 64;
  c.learning_rate = 0.005;
  c.architecture = {16, 16};
  c.bound_mode = BoundMode::interval;
  c.seed = seed;
  return c;
}

struct RunResult {
  double accuracy = 0.0;
  double certified = 0.0;
};

RunResult train_and_certify(std::uint64_t seed, double lambda, Regularizer reg) {
  const auto schema = testing::make_schema(2, {}, 2);
  const auto prop = biased_property(schema);
  const auto ds = testing::biased_dataset(biased_spec(100 + seed));
  const auto [tr, te] = split(ds, 0.7, seed);
  const auto r = train(tr, te, prop, schema, tradeoff_config(lambda, reg, seed));
  const auto rep = certify(r.net, prop, schema, VerifierLimits{100000, 120.0});
  return {accuracy(r.net, te), rep.certified_pct};
}

Outcome criterion_tradeoff() {
  const auto t0 = std::chrono::steady_clock::now();
  const double lambdas[] = {1e-4, 5e-4, 5e-3, 1e-2, 5e-2};
  const int seeds = 5;
  std::vector<double> cert(5, 0.0), acc(5, 0.0);
  for (int s = 0; s < seeds; ++s) {
    for (int i = 0; i < 5; ++i) {
      const auto r = train_and_certify(static_cast<std::uint64_t>(s), lambdas[i], Regularizer::global);
      cert[i] += r.certified / seeds;
      acc[i] += r.accuracy / seeds;
    }
  }
  int inversions = 0;
  bool small = true;
  for (int i = 1; i < 5; ++i) {
    if (cert[i] < cert[i - 1]) {
      ++inversions;
      if (cert[i - 1] - cert[i] > 5.0) small = false;
    }
  }
  std::ostringstream os;
  os << "mean over " << seeds << " seeds, lambda -> certified% / accuracy%:";
  for (int i = 0; i < 5; ++i) os << " " << lambdas[i] << "->" << fmt("%.0f", cert[i]) << "/" << fmt("%.2f", acc[i]);
  os << "; " << fmt("%.0f", seconds_since(t0)) << " s";
  const bool pass = inversions <= 1 && small && cert[4] == 100.0 && acc[4] < acc[0] && seconds_since(t0) < 900.0;
  return {pass, os.str()};
}

Outcome criterion_regularizers() {
  const double lambda = 5e-2;
  int wins = 0;
  std::ostringstream os;
  os << "lambda " << lambda << ", seed: base acc | global acc/cert | local acc/cert:";
  for (int s = 0; s < 5; ++s) {
    const auto seed = static_cast<std::uint64_t>(s);
    const auto base = train_and_certify(seed, 0.0, Regularizer::none);
    const auto g = train_and_certify(seed, lambda, Regularizer::global);
    const auto l = train_and_certify(seed, lambda, Regularizer::local);
    const double loss_g = base.accuracy - g.accuracy;
    const double loss_l = base.accuracy - l.accuracy;
    if (g.certified >= l.certified && loss_g <= loss_l) ++wins;
    os << " " << s << ": " << fmt("%.2f", base.accuracy) << " | " << fmt("%.2f", g.accuracy) << "/"
       << fmt("%.0f", g.certified) << " | " << fmt("%.2f", l.accuracy) << "/" << fmt("%.0f", l.certified) << ";";
  }
  os << " global at least as good in " << wins << "/5";
  return {wins >= 4, os.str()};
}

// ---------------------------------------------------------------------------
// Criteria 8 and 10 go through the command-line entry point.

struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& tag) {
    dir = fs::temp_directory_path() / ("certifair_acceptance_" + tag + "_" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
  void write(const std::string& name, const std::string& text) const { std::ofstream(dir / name) << text; }
};

int run_cli(std::vector<std::string> args, std::string& out, std::string& err) {
  args.insert(args.begin(), "certifair");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream o, e;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), o, e);
  out = o.str();
  err = e.str();
  return code;
}

std::string read_file(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Labels [n0 > 0.5] with no noise and no rows within 0.15 of the boundary.
void write_margin_inputs(const Scratch& s) {
  const auto schema = testing::make_schema(2, {}, 2);
  testing::BiasedDataSpec spec;
  spec.rows = 700;
  spec.seed = 808;
  spec.band = -1.0;
  spec.cut = 0.5;
  spec.noise = 0.0;
  spec.gap = 0.15;
  s.write("data.csv", testing::to_csv(testing::biased_dataset(spec)));
  s.write("schema.json", schema.to_json().dump(2));
  s.write("property.json", testing::make_property(schema, 0.05).to_json().dump(2));
  s.write("config.json", R"({"epochs": 60, "batch_size": 32, "learning_rate": 0.005, "architecture": [16, 16],
                             "seed": 8, "regularizer": "none", "lambda_f": 0.0})");
}

Outcome criterion_local_vs_global() {
  Scratch s("c8");
  write_margin_inputs(s);
  std::string out, err;
  int code = run_cli({"train", "--data", s.path("data.csv"), "--schema", s.path("schema.json"), "--property",
                      s.path("property.json"), "--config", s.path("config.json"), "--out-model", s.path("model.json")},
                     out, err);
  if (code != 0) return {false, "train failed: " + err};
  code = run_cli({"verify-local", "--model", s.path("model.json"), "--schema", s.path("schema.json"), "--property",
                  s.path("property.json"), "--data", s.path("data.csv"), "--max-points", "200"},
                 out, err);
  if (code != 0 && code != 1) return {false, "verify-local failed: " + err};
  const auto local = json::parse(out);
  code = run_cli({"certify", "--model", s.path("model.json"), "--schema", s.path("schema.json"), "--property",
                  s.path("property.json"), "--report", s.path("report.json")},
                 out, err);
  const auto global = json::parse(out);
  const auto report = json::parse(read_file(s.path("report.json")));
  const auto schema = testing::make_schema(2, {}, 2);
  const auto prop = testing::make_property(schema, 0.05);
  const auto net = load_model(s.path("model.json"));
  bool validated = true;
  for (const auto& p : report["partitions"]) {
    if (p.contains("counterexample")) {
      validated = validated && validate_counterexample(net, CounterexamplePair::from_json(p["counterexample"]), prop, schema);
    }
  }
  const double lpct = local["local_fairness_pct"].get<double>();
  const double gpct = global["certified_global_fairness_pct"].get<double>();
  std::ostringstream os;
  os << "local " << lpct << "% on " << local["checked"] << " test points, global " << gpct << "% (exit " << code
     << ")";
  const bool pass = local["checked"].get<int>() == 200 && lpct == 100.0 && gpct < 100.0 && validated;
  return {pass, os.str()};
}

Outcome criterion_determinism() {
  Scratch s("c10");
  write_margin_inputs(s);
  ::setenv("CERTIFAIR_SEED", "12345", 1);
  std::string out, err;
  std::vector<std::string> common{"train", "--data", s.path("data.csv"), "--schema", s.path("schema.json"),
                                  "--property", s.path("property.json"), "--config", s.path("config.json")};
  auto a = common;
  a.insert(a.end(), {"--out-model", s.path("a.json")});
  auto b = common;
  b.insert(b.end(), {"--out-model", s.path("b.json")});
  const int ca = run_cli(a, out, err);
  const int cb = run_cli(b, out, err);
  ::setenv("CERTIFAIR_SEED", "54321", 1);
  auto c = common;
  c.insert(c.end(), {"--out-model", s.path("c.json")});
  const int cc = run_cli(c, out, err);
  ::unsetenv("CERTIFAIR_SEED");
  const auto ma = read_file(s.path("a.json"));
  const auto mb = read_file(s.path("b.json"));
  const auto mc = read_file(s.path("c.json"));
  std::ostringstream os;
  os << "two runs with CERTIFAIR_SEED=12345: " << ma.size() << " bytes, identical=" << (ma == mb ? "yes" : "no")
     << "; another seed differs=" << (ma != mc ? "yes" : "no");
  return {ca == 0 && cb == 0 && cc == 0 && !ma.empty() && ma == mb && ma != mc, os.str()};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const Outcome& o) {
    std::printf("[%s] criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  };

  const auto corpus = run_corpus();
  {
    std::ostringstream os;
    os << corpus.nets << " nets, " << corpus.partitions << " partitions (" << corpus.fair << " fair, " << corpus.unfair
       << " unfair, " << corpus.resource << " resource-limited); " << corpus.unsound
       << " fair verdicts contradicted by the 0.02 grid; " << fmt("%.0f", corpus.seconds) << " s";
    report(1, "soundness vs grid oracle", {corpus.unsound == 0 && corpus.seconds < 600.0, os.str()});
  }
  {
    std::ostringstream os;
    os << corpus.missed << " grid pairs with gap >= 2 tau not reported unfair";
    report(2, "completeness up to margin", {corpus.missed == 0, os.str()});
  }
  {
    std::ostringstream os;
    os << corpus.valid << "/" << corpus.emitted << " counterexamples pass exact re-validation";
    report(3, "counterexample validity", {corpus.emitted > 0 && corpus.valid == corpus.emitted, os.str()});
  }
  report(4, "bound soundness", criterion_bounds());
  report(5, "gradient correctness", criterion_gradients());
  report(6, "zero bound certifies without branching", criterion_zero_bound());
  report(7, "lambda trade-off trend", criterion_tradeoff());
  report(8, "local fair, globally unfair", criterion_local_vs_global());
  report(9, "global vs local regularizer", criterion_regularizers());
  report(10, "training determinism", criterion_determinism());
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
