#include <doctest.h>

#include <cmath>
#include <random>

#include "dualsys/entropy.hpp"
#include "dualsys/errors.hpp"
#include "oracles/entropy_oracle.hpp"

using namespace dualsys;

namespace {

TokenDistribution make_dist(const std::vector<double>& ps, double tail = 0.0) {
  TokenDistribution d;
  for (std::size_t i = 0; i < ps.size(); ++i) d.entries.push_back({"t" + std::to_string(i), ps[i]});
  d.tail_mass = tail;
  return d;
}

// Random distribution with k entries; a random share of the mass goes to the tail.
std::pair<std::vector<double>, double> random_dist(std::mt19937_64& rng, std::size_t k) {
  std::exponential_distribution<double> ex(1.0);
  std::vector<double> raw(k + 1);
  double total = 0;
  for (auto& r : raw) total += (r = ex(rng));
  std::vector<double> ps(k);
  for (std::size_t i = 0; i < k; ++i) ps[i] = raw[i] / total;
  return {ps, raw[k] / total};
}

}  // namespace

TEST_CASE("token_entropy examples") {
  CHECK(token_entropy(make_dist({0.25, 0.25, 0.25, 0.25})) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  CHECK(token_entropy(make_dist({1.0})) == 0.0);
  // Frozen from the 50-digit oracle: -(0.5 ln 0.5 + 2 * 0.25 ln 0.25) = 1.5 ln 2.
  CHECK(token_entropy(make_dist({0.5, 0.25, 0.25})) == doctest::Approx(1.0397207708399179).epsilon(1e-15));
  CHECK(oracle::entropy({0.5, 0.25, 0.25}, 0.0, true) == doctest::Approx(1.0397207708399179).epsilon(1e-15));
}

TEST_CASE("token_entropy tail policies") {
  const auto d = make_dist({0.5, 0.25}, 0.25);
  CHECK(token_entropy(d, TailPolicy::single_bucket) == doctest::Approx(1.5 * std::log(2.0)));
  CHECK(token_entropy(d, TailPolicy::ignore) == doctest::Approx(0.5 * std::log(2.0) + 0.25 * std::log(4.0)));
  // zero-probability entries contribute exactly nothing
  CHECK(token_entropy(make_dist({1.0, 0.0, 0.0})) == 0.0);
}

TEST_CASE("token_entropy rejects malformed distributions") {
  CHECK_THROWS_AS(token_entropy(make_dist({0.5, -0.1, 0.6})), ValidationError);
  CHECK_THROWS_AS(token_entropy(make_dist({0.5, 0.4})), ValidationError);
  CHECK_THROWS_AS(token_entropy(make_dist({0.5, 0.6})), ValidationError);
  CHECK_THROWS_AS(token_entropy(make_dist({0.5}, 1.5)), ValidationError);
  try {
    token_entropy(make_dist({0.5, -0.1, 0.6}));
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("entry 1") != std::string::npos);
  }
  // within the 1e-6 mass tolerance is fine
  CHECK_NOTHROW(token_entropy(make_dist({0.5, 0.5 + 5e-7})));
}

TEST_CASE("token_entropy matches the high-precision oracle and stays within bounds") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> kdist(1, 50);
  for (int i = 0; i < 500; ++i) {
    const auto k = kdist(rng);
    const auto [ps, tail] = random_dist(rng, k);
    const auto d = make_dist(ps, tail);
    const double h = token_entropy(d);
    const double ref = oracle::entropy(ps, tail, true);
    CHECK(std::abs(h - ref) <= 1e-10 * std::max(1.0, ref));
    CHECK(h >= 0.0);
    CHECK(h <= std::log(static_cast<double>(k + 1)) + 1e-12);
    CHECK(token_entropy(d, TailPolicy::ignore) == doctest::Approx(oracle::entropy(ps, tail, false)).epsilon(1e-10));
  }
}

TEST_CASE("sequence_stats examples") {
  std::vector<double> c{1.0, 1.0, 1.0};
  auto s = sequence_stats(c);
  CHECK(s.mean == 1.0);
  CHECK(s.variance == 0.0);
  CHECK(s.n == 3);

  std::vector<double> one{0.0};
  s = sequence_stats(one);
  CHECK(s.mean == 0.0);
  CHECK(s.variance == 0.0);

  std::vector<double> two{1.0, 3.0};
  s = sequence_stats(two);
  CHECK(s.mean == 2.0);
  CHECK(s.variance == 1.0);  // divisor n, not n - 1

  CHECK_THROWS_WITH_AS(sequence_stats(std::vector<double>{}), doctest::Contains("empty generation"), ValidationError);
  CHECK_THROWS_AS(sequence_stats(std::vector<double>{0.1, -0.2}), ValidationError);
}

TEST_CASE("sequence_stats agrees with the two-pass reference") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> len(1, 300);
  std::gamma_distribution<double> g(2.0, 0.7);
  for (int i = 0; i < 300; ++i) {
    std::vector<double> xs(len(rng));
    for (auto& x : xs) x = g(rng);
    const auto s = sequence_stats(xs);
    const auto ref = oracle::population_stats(xs);
    CHECK(std::abs(s.mean - ref.mean) <= 1e-12 * ref.mean);
    CHECK(std::abs(s.variance - ref.variance) <= 1e-12 * std::max(ref.variance, 1e-300));
  }
}

TEST_CASE("total_sum_normalize") {
  auto n = total_sum_normalize({1.0, 0.0, 1}, {3.0, 0.0, 1});
  CHECK(n.h_hat_1 == 0.25);
  CHECK(n.h_hat_2 == 0.75);
  CHECK(n.v_hat_1 == 0.5);  // both variances zero
  CHECK(n.v_hat_2 == 0.5);

  n = total_sum_normalize({2.0, 1.0, 1}, {2.0, 3.0, 1});
  CHECK(n.h_hat_1 == 0.5);
  CHECK(n.v_hat_1 == 0.25);

  n = total_sum_normalize({0.0, 0.0, 1}, {0.0, 0.0, 1});
  CHECK(n.h_hat_1 == 0.5);
  CHECK(n.h_hat_2 == 0.5);
}

TEST_CASE("reliability_score") {
  const NormalizedStatsPair n{0.25, 0.75, 0.5, 0.5};
  auto r = reliability_score(n, ReliabilityWeight(0.4));
  CHECK(r.r1 == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(r.r2 == doctest::Approx(0.6).epsilon(1e-15));

  const NormalizedStatsPair m{0.3, 0.7, 0.9, 0.1};
  r = reliability_score(m, ReliabilityWeight(1.0));
  CHECK(r.r1 == m.h_hat_1);
  CHECK(r.r2 == m.h_hat_2);
  r = reliability_score(m, ReliabilityWeight(0.0));
  CHECK(r.r1 == m.v_hat_1);
  CHECK(r.r2 == m.v_hat_2);

  CHECK_THROWS_AS(ReliabilityWeight(1.5), ValidationError);
  CHECK_THROWS_AS(ReliabilityWeight(-0.01), ValidationError);
  CHECK_THROWS_AS(ReliabilityWeight(std::nan("")), ValidationError);
  CHECK(ReliabilityWeight().value() == 0.4);
}

TEST_CASE("select") {
  CHECK(select(0.4, 0.6).chosen == SystemId::system1);
  CHECK_FALSE(select(0.4, 0.6).tie);
  CHECK(select(0.6, 0.4).chosen == SystemId::system2);
  auto s = select(0.5, 0.5, TieBreak::prefer_s1);
  CHECK(s.chosen == SystemId::system1);
  CHECK(s.tie);
  s = select(0.5, 0.5 + 5e-13, TieBreak::prefer_s2);
  CHECK(s.chosen == SystemId::system2);
  CHECK(s.tie);
  CHECK_FALSE(select(0.5, 0.5 + 1e-9).tie);
  CHECK_THROWS_AS(select(std::nan(""), 0.5), ValidationError);
  CHECK_THROWS_AS(select(0.5, INFINITY), ValidationError);
}

TEST_CASE("decide: worked example through all three steps") {
  std::vector<double> a{0.2, 0.2}, b{0.0, 0.8};
  const auto d = decide(sequence_stats(a), sequence_stats(b), ReliabilityWeight(0.4));
  CHECK(d.normalized.h_hat_1 == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(d.normalized.v_hat_1 == 0.0);
  CHECK(d.normalized.v_hat_2 == 1.0);
  CHECK(std::abs(d.r1 - 0.4 / 3) < 1e-9);
  CHECK(std::abs(d.r2 - (0.4 * 2 / 3 + 0.6)) < 1e-9);
  CHECK(d.chosen == SystemId::system1);
  CHECK_FALSE(d.tie);
}

TEST_CASE("properties: complementarity, scale invariance, single crossing") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(1e-3, 5.0);
  std::uniform_real_distribution<double> logscale(-20.0, 20.0);
  for (int i = 0; i < 2000; ++i) {
    const SequenceEntropyStats s1{u(rng), u(rng), 10}, s2{u(rng), u(rng), 12};
    const auto n = total_sum_normalize(s1, s2);
    std::uniform_real_distribution<double> wu(0.0, 1.0);
    const ReliabilityWeight w(wu(rng));
    const auto r = reliability_score(n, w);
    CHECK(std::abs(r.r1 + r.r2 - 1.0) <= 1e-9);

    // arbitrary positive factors: the decision is identical
    const double c = std::exp(logscale(rng)), dd = std::exp(logscale(rng));
    const auto base = decide(s1, s2, w);
    const auto scaled = decide({s1.mean * c, s1.variance * dd, 10}, {s2.mean * c, s2.variance * dd, 12}, w);
    CHECK(base.chosen == scaled.chosen);
    CHECK(base.normalized.h_hat_1 == doctest::Approx(scaled.normalized.h_hat_1).epsilon(1e-14));

    // power-of-two factors are exact in binary floating point: everything is bit-identical
    const double p2 = std::ldexp(1.0, static_cast<int>(logscale(rng)));
    const auto exact = decide({s1.mean * p2, s1.variance * 4.0, 10}, {s2.mean * p2, s2.variance * 4.0, 12}, w);
    CHECK(exact.r1 == base.r1);
    CHECK(exact.r2 == base.r2);
    CHECK(exact.normalized.v_hat_2 == base.normalized.v_hat_2);

    // sweeping w changes the decision at most once
    int flips = 0;
    SystemId prev = decide(s1, s2, ReliabilityWeight(0.0)).chosen;
    for (int k = 1; k <= 100; ++k) {
      const auto cur = decide(s1, s2, ReliabilityWeight(k / 100.0)).chosen;
      flips += cur != prev;
      prev = cur;
    }
    CHECK(flips <= 1);
  }
}
