#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "facechannel/metrics.hpp"
#include "facechannel/rng.hpp"
#include "test_support.hpp"

using namespace facechannel;
using testsupport::contains;
using testsupport::thrown_message;

namespace {

std::vector<double> random_seq(Rng& rng, std::size_t n, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

double pop_var(const std::vector<double>& x) {
  double mu = 0;
  for (double v : x) mu += v;
  mu /= double(x.size());
  double var = 0;
  for (double v : x) var += (v - mu) * (v - mu);
  return var / double(x.size());
}

} // namespace

TEST_CASE("ccc worked examples") {
  CHECK(ccc({1, 2, 3}, {1, 2, 3}) == doctest::Approx(1.0));
  CHECK(ccc({1, 2, 3}, {2, 3, 4}) == doctest::Approx(4.0 / 7.0).epsilon(1e-12));
  CHECK(ccc({1, 1, 1}, {1, 2, 3}) == doctest::Approx(0.0));
  // Identical constants: degenerate perfect agreement.
  CHECK(ccc({5, 5, 5}, {5, 5, 5}) == 1.0);
}

TEST_CASE("ccc input validation") {
  CHECK_THROWS_AS((void)ccc({1, 2}, {1, 2, 3}), std::invalid_argument);
  CHECK_THROWS_AS((void)ccc({1}, {2}), std::invalid_argument);
}

TEST_CASE("ccc is symmetric") {
  Rng rng(41);
  for (int round = 0; round < 50; ++round) {
    const auto x = random_seq(rng, 20);
    const auto y = random_seq(rng, 20);
    CHECK(std::abs(ccc(x, y) - ccc(y, x)) <= 1e-12);
  }
}

TEST_CASE("ccc equals the pearson form wherever pearson is defined") {
  Rng rng(42);
  for (int round = 0; round < 200; ++round) {
    const auto x = random_seq(rng, 12);
    const auto y = random_seq(rng, 12);
    const double r = pearson(x, y);
    const double sx = std::sqrt(pop_var(x)), sy = std::sqrt(pop_var(y));
    double mx = 0, my = 0;
    for (double v : x) mx += v;
    for (double v : y) my += v;
    mx /= 12;
    my /= 12;
    const double direct = 2 * r * sx * sy / (sx * sx + sy * sy + (mx - my) * (mx - my));
    CHECK(std::abs(ccc(x, y) - direct) <= 1e-9);
  }
}

TEST_CASE("|ccc| never exceeds |pearson|") {
  Rng rng(43);
  for (int round = 0; round < 100; ++round) {
    const auto x = random_seq(rng, 15);
    const auto y = random_seq(rng, 15);
    CHECK(std::abs(ccc(x, y)) <= std::abs(pearson(x, y)) + 1e-9);
  }
}

TEST_CASE("shifting one sequence penalizes ccc by the closed form") {
  Rng rng(44);
  for (double c : {0.5, -1.0, 2.0}) {
    const auto x = random_seq(rng, 30);
    std::vector<double> y = x;
    for (auto& v : y) v += c;
    const double var = pop_var(x);
    CHECK(ccc(x, y) == doctest::Approx(2 * var / (2 * var + c * c)).epsilon(1e-9));
    CHECK(ccc(x, y) < 1.0);
  }
}

TEST_CASE("pearson worked examples and strict domain") {
  std::vector<double> x = {0.3, 1.7, -0.4, 2.2};
  std::vector<double> y;
  for (double v : x) y.push_back(2 * v + 3);
  CHECK(pearson(x, y) == doctest::Approx(1.0));
  std::vector<double> neg;
  for (double v : x) neg.push_back(-v);
  CHECK(pearson(x, neg) == doctest::Approx(-1.0));
  CHECK(pearson({1, 2, 3}, {1, 3, 2}) == doctest::Approx(0.5));

  const std::string msg = thrown_message([&] { (void)pearson({1, 1, 1}, {1, 2, 3}); });
  CHECK(contains(msg, "variance"));
}

TEST_CASE("accuracy counts exact matches") {
  CHECK(accuracy({0, 1, 2}, {0, 1, 2}) == 1.0);
  CHECK(accuracy({1, 2, 0}, {0, 1, 2}) == 0.0);
  CHECK(accuracy({0, 1, 1, 2}, {0, 1, 2, 2}) == 0.75);
  CHECK_THROWS_AS((void)accuracy({0}, {0, 1}), std::invalid_argument);
}

TEST_CASE("confusion counts true-by-predicted and validates the range") {
  const auto m = confusion({0, 1, 1, 2}, {0, 1, 2, 2}, 3);
  CHECK(m[0][0] == 1);
  CHECK(m[1][1] == 1);
  CHECK(m[2][1] == 1);
  CHECK(m[2][2] == 1);
  std::size_t total = 0;
  for (const auto& row : m)
    for (const auto v : row) total += v;
  CHECK(total == 4);

  const std::string msg = thrown_message([&] { (void)confusion({0}, {7}, 5); });
  CHECK(contains(msg, "confusion"));
  CHECK(contains(msg, "7"));
  CHECK(contains(msg, "[0,5)"));
}

TEST_CASE("argmax accuracy is invariant under monotone transforms of rows") {
  Rng rng(45);
  Tensor<double> rows({40, 6});
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = rng.uniform(-1.0, 1.0);
  std::vector<std::size_t> base, mapped;
  for (std::size_t n = 0; n < 40; ++n) {
    base.push_back(argmax_row(rows.data() + n * 6, 6));
    Tensor<double> t({1, 6});
    for (std::size_t k = 0; k < 6; ++k) t[k] = std::exp(3.0 * rows[n * 6 + k]) + 7.0;
    mapped.push_back(argmax_row(t.data(), 6));
  }
  CHECK(base == mapped);
}

TEST_CASE("argmax breaks ties toward the lowest class index") {
  Tensor<double> t({1, 4}, {0.2, 0.7, 0.7, 0.1});
  CHECK(argmax_row(t.data(), 4) == 1);
}

TEST_CASE("EvalReport serializes fixed keys, null for inapplicable metrics") {
  EvalReport r;
  r.accuracy = 0.75;
  r.confusion = {{3, 1}, {0, 4}};
  r.n = 8;
  const std::string j = r.to_json();
  CHECK(contains(j, "\"accuracy\""));
  CHECK(contains(j, "\"ccc_arousal\": null"));
  CHECK(contains(j, "\"ccc_valence\": null"));
  CHECK(contains(j, "\"confusion\""));
  CHECK(contains(j, "\"n\": 8"));

  EvalReport d;
  d.ccc_arousal = 0.25;
  d.ccc_valence = -0.5;
  d.n = 4;
  const std::string k = d.to_json();
  CHECK(contains(k, "\"accuracy\": null"));
  CHECK(contains(k, "0.25"));
  CHECK(contains(k, "-0.5"));
}
