#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <random>

#include "certifair/autodiff.hpp"
#include "certifair/errors.hpp"
#include "certifair/model_io.hpp"
#include "certifair/network.hpp"
#include "support.hpp"

using namespace certifair;

namespace {

MLPNetwork single_layer(std::vector<double> w, double b) {
  DenseLayer<double> l;
  l.fan_in = w.size();
  l.fan_out = 1;
  l.weights = std::move(w);
  l.bias = {b};
  return MLPNetwork(l.fan_in, {l});
}

std::vector<std::size_t> dims_of(std::initializer_list<std::size_t> d) { return d; }

}  // namespace

TEST_CASE("init is deterministic and shaped") {
  const auto d = dims_of({2, 1});
  CHECK(MLPNetwork::init(d, 7) == MLPNetwork::init(d, 7));
  CHECK_FALSE(MLPNetwork::init(d, 7) == MLPNetwork::init(d, 8));

  const auto net = MLPNetwork::init(dims_of({2, 20, 20, 1}), 3);
  REQUIRE(net.layers().size() == 3);
  CHECK(net.layers()[0].fan_out == 20);
  CHECK(net.layers()[0].fan_in == 2);
  CHECK(net.layers()[1].fan_out == 20);
  CHECK(net.layers()[1].fan_in == 20);
  CHECK(net.layers()[2].fan_out == 1);
  CHECK(net.layers()[2].fan_in == 20);
  for (const auto& l : net.layers()) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.fan_in + l.fan_out));
    for (double w : l.weights) CHECK(std::abs(w) <= limit);
    for (double b : l.bias) CHECK(b == 0.0);
  }
}

TEST_CASE("init rejects degenerate dims") {
  CHECK_THROWS_AS(MLPNetwork::init(dims_of({2}), 1), ConfigError);
  CHECK_THROWS_AS(MLPNetwork::init(dims_of({}), 1), ConfigError);
  CHECK_THROWS_AS(MLPNetwork::init(dims_of({2, 0, 1}), 1), ConfigError);
  CHECK_THROWS_AS(MLPNetwork::init(dims_of({2, 3, 2}), 1), ConfigError);
}

TEST_CASE("constructor validates shapes and finiteness") {
  DenseLayer<double> l{2, 1, {1.0, NAN}, {0.0}};
  CHECK_THROWS(MLPNetwork(2, {l}));
  DenseLayer<double> a{2, 3, std::vector<double>(6, 0.1), std::vector<double>(3, 0.0)};
  DenseLayer<double> b{2, 1, {1.0, 1.0}, {0.0}};
  CHECK_THROWS(MLPNetwork(2, {a, b}));
}

TEST_CASE("forward on analytic examples") {
  const auto zero = single_layer({0.0, 0.0}, 0.0);
  const double x0[] = {0.3, 0.9};
  CHECK(forward(zero, x0).logit == 0.0);
  CHECK(forward(zero, x0).prob == 0.5);

  const auto net = single_layer({1.0, -1.0}, 0.5);
  const double x1[] = {1.0, 0.0};
  CHECK(forward(net, x1).logit == doctest::Approx(1.5));
  CHECK(forward(net, x1).prob == doctest::Approx(1.0 / (1.0 + std::exp(-1.5))));
  CHECK(forward(net, x1).prob == doctest::Approx(0.8176).epsilon(1e-4));

  const double bad[] = {1.0};
  CHECK_THROWS_AS(forward(net, bad), InputError);
  const double nan_in[] = {NAN, 0.0};
  CHECK_THROWS_AS(forward(net, nan_in), InputError);
}

TEST_CASE("probabilities stay inside (0,1) and forward is deterministic") {
  std::mt19937_64 rng(11);
  const auto net = testing::random_net({2, 3, 1}, rng);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 200; ++i) {
    const double x[] = {u(rng), u(rng)};
    const auto a = forward(net, x);
    const auto b = forward(net, x);
    CHECK(a.prob > 0.0);
    CHECK(a.prob < 1.0);
    CHECK(a.logit == b.logit);
    CHECK((predict(net, x) == 1) == (a.logit >= 0.0));
  }
}

TEST_CASE("predict tie rule") {
  const double x[] = {0.0};
  CHECK(predict(single_layer({1.0}, 0.0), x) == 1);
  CHECK(predict(single_layer({1.0}, -3.0), x) == 0);
  CHECK(predict(single_layer({1.0}, 1.5), x) == 1);
}

TEST_CASE("bce loss values") {
  CHECK(bce_loss(0.5, 1) == doctest::Approx(std::log(2.0)));
  CHECK(bce_loss(0.5, 0) == doctest::Approx(std::log(2.0)));
  CHECK(bce_loss(1e-9, 1) == doctest::Approx(-std::log(1e-7)));
  CHECK(bce_loss(1.0, 0) == doctest::Approx(-std::log(1e-7)));
  CHECK(bce_loss(0.9, 1) >= 0.0);
}

TEST_CASE("tape gradients of elementary expressions") {
  ad::Tape tape;
  const auto x = tape.variable(0.7);
  const auto y = tape.variable(-1.3);
  const auto f = x * y + ad::exp(x) - ad::log(x) / y + ad::sigmoid(y);
  const auto adj = tape.adjoints(f);
  const double s = 1.0 / (1.0 + std::exp(1.3));
  CHECK(adj[x.index()] == doctest::Approx(-1.3 + std::exp(0.7) - (1.0 / 0.7) / -1.3));
  CHECK(adj[y.index()] == doctest::Approx(0.7 + std::log(0.7) / (1.3 * 1.3) + s * (1.0 - s)));
}

TEST_CASE("branch log records helper decisions") {
  BranchLog log;
  (void)relu(-1.0);
  (void)max_of(2.0, 1.0);
  REQUIRE(log.outcomes().size() == 2);
  CHECK_FALSE(log.outcomes()[0]);
  CHECK(log.outcomes()[1]);
}

namespace {

double batch_loss(const MLPNetwork& net, std::span<const LabeledPoint> batch) {
  double s = 0.0;
  for (const auto& p : batch) s += bce_loss(forward(net, p.x).prob, p.y);
  return s / static_cast<double>(batch.size());
}

std::vector<bool> branches_of(const MLPNetwork& net, std::span<const LabeledPoint> batch) {
  BranchLog log;
  (void)bce_gradients(net, batch);
  return log.outcomes();
}

}  // namespace

TEST_CASE("BCE gradients match central finite differences") {
  std::mt19937_64 rng(2024);
  const double h = 1e-5;
  double worst = 0.0;
  std::size_t checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 2 + rng() % 3;
    std::vector<std::size_t> dims{d, 2 + rng() % 5};
    if (trial % 2 == 0) dims.push_back(2 + rng() % 4);
    dims.push_back(1);
    auto net = testing::random_net(dims, rng);
    std::vector<std::vector<double>> xs;
    std::vector<LabeledPoint> batch;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 6; ++i) {
      xs.emplace_back();
      for (std::size_t k = 0; k < d; ++k) xs.back().push_back(u(rng));
    }
    for (int i = 0; i < 6; ++i) batch.push_back({xs[i], static_cast<int>(rng() % 2)});
    const auto g = bce_gradients(net, batch);
    CHECK(g.loss == doctest::Approx(batch_loss(net, batch)));
    const auto base_branches = branches_of(net, batch);
    auto theta = net.parameters();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      auto plus = theta;
      auto minus = theta;
      plus[i] += h;
      minus[i] -= h;
      MLPNetwork np = net, nm = net;
      np.set_parameters(plus);
      nm.set_parameters(minus);
      if (branches_of(np, batch) != base_branches || branches_of(nm, batch) != base_branches) continue;
      const double fd = (batch_loss(np, batch) - batch_loss(nm, batch)) / (2 * h);
      worst = std::max(worst, testing::relative_error(fd, g.gradient[i], 1e-4));
      ++checked;
    }
  }
  CHECK(checked > 500);
  CHECK(worst <= 1e-4);
}

TEST_CASE("duplicated batch gives the same gradient") {
  std::mt19937_64 rng(5);
  const auto net = testing::random_net({3, 4, 1}, rng);
  const std::vector<double> x{0.2, 0.5, 0.9};
  const LabeledPoint p{x, 1};
  const std::vector<LabeledPoint> one{p};
  const std::vector<LabeledPoint> two{p, p};
  const auto a = bce_gradients(net, one);
  const auto b = bce_gradients(net, two);
  REQUIRE(a.gradient.size() == b.gradient.size());
  for (std::size_t i = 0; i < a.gradient.size(); ++i) CHECK(a.gradient[i] == doctest::Approx(b.gradient[i]));
  CHECK_THROWS_AS(bce_gradients(net, std::span<const LabeledPoint>{}), InputError);
}

TEST_CASE("adam step") {
  auto net = MLPNetwork::init(dims_of({2, 3, 1}), 1);
  auto state = AdamState::for_network(net);
  CHECK(state.learning_rate == 0.001);
  const auto before = net.parameters();
  adam_step(state, net, std::vector<double>(net.parameter_count(), 0.0));
  CHECK(net.parameters() == before);

  std::vector<double> g(net.parameter_count(), 0.37);
  std::vector<double> prev = net.parameters();
  double last_update = 0.0;
  for (int i = 0; i < 2000; ++i) {
    adam_step(state, net, g);
    const auto cur = net.parameters();
    last_update = prev[0] - cur[0];
    prev = cur;
  }
  CHECK(last_update == doctest::Approx(state.learning_rate).epsilon(1e-3));
  CHECK_THROWS_AS(adam_step(state, net, std::vector<double>(3, 0.0)), InternalError);
}

TEST_CASE("model JSON round trip is exact") {
  std::mt19937_64 rng(9);
  const auto net = testing::random_net({4, 5, 3, 1}, rng);
  const auto j = model_to_json(net);
  CHECK(j["layers"][0]["activation"] == "relu");
  CHECK(j["layers"][2]["activation"] == "sigmoid");
  CHECK(model_from_json(j) == net);
  const auto path = std::filesystem::temp_directory_path() / "certifair_model_roundtrip.json";
  save_model(net, path);
  CHECK(load_model(path) == net);
  std::filesystem::remove(path);

  auto bad = j;
  bad["layers"][2]["activation"] = "relu";
  CHECK_THROWS_AS(model_from_json(bad), ConfigError);
  CHECK_THROWS_AS(load_model("/nonexistent/model.json"), ConfigError);
}
