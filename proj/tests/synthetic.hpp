#pragma once

// Generated tabular data for the trade-off and regularizer experiments.
// Columns follow testing::make_schema(2, {}, 2): n0, n1, s0, s1.

#include <cstdint>
#include <random>

#include "certifair/dataset.hpp"

namespace certifair::testing {

struct BiasedDataSpec {
  std::size_t rows = 2000;
  std::uint64_t seed = 1;
  // Inside |n0 - center| <= band the label follows the sensitive level
  // (level 1 always positive, level 0 positive with `p_level0`).  Outside,
  // the label is [n0 > cut] with `noise` flips.
  double center = 0.5;
  double band = 0.03;
  double cut = 0.5;
  double p_level0 = 0.5;
  double noise = 0.03;
  // n1 is drawn from [0, n1_max]; the rest of [0, 1] carries no data.
  double n1_max = 1.0;
  // Rows with |n0 - cut| < gap are dropped (after drawing).
  double gap = 0.0;
};

inline Dataset biased_dataset(const BiasedDataSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Dataset ds;
  while (ds.size() < spec.rows) {
    const double a = u(rng);
    const double b = spec.n1_max * u(rng);
    const int s = static_cast<int>(rng() % 2);
    const double r = u(rng);
    if (std::abs(a - spec.cut) < spec.gap) continue;
    int y = 0;
    if (std::abs(a - spec.center) <= spec.band) {
      y = s == 1 ? 1 : (r < spec.p_level0 ? 1 : 0);
    } else {
      y = a > spec.cut ? 1 : 0;
      if (r < spec.noise) y = 1 - y;
    }
    ds.rows.push_back({a, b, s == 0 ? 1.0 : 0.0, s == 1 ? 1.0 : 0.0});
    ds.labels.push_back(y);
  }
  return ds;
}

/// Same rows as raw CSV text for the command-line tools.
inline std::string to_csv(const Dataset& ds) {
  std::string out = "n0,n1,s,y\n";
  char buf[64];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& r = ds.rows[i];
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,", r[0], r[1]);
    out += buf;
    out += r[3] == 1.0 ? "S1," : "S0,";
    out += ds.labels[i] == 1 ? "1\n" : "0\n";
  }
  return out;
}

}  // namespace certifair::testing
