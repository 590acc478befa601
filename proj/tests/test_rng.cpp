#include <doctest.h>

#include <cmath>
#include <vector>

#include "bliptest/rng.hpp"

using namespace bliptest;

TEST_CASE("streams are reproducible and independent of creation order") {
  Rng a = Rng::stream(42, 7);
  Rng b = Rng::stream(42, 8);
  Rng a2 = Rng::stream(42, 7);
  for (int i = 0; i < 100; ++i) {
    uint64_t va = a.next_u64();
    CHECK(va == a2.next_u64());
  }
  CHECK(a.next_u64() != b.next_u64());
}

TEST_CASE("uniform_int is within range and roughly uniform") {
  Rng rng(123);
  std::vector<int> counts(7, 0);
  const int N = 70000;
  for (int i = 0; i < N; ++i) {
    uint32_t v = rng.uniform_int(7);
    REQUIRE(v < 7);
    ++counts[v];
  }
  for (int c : counts) {
    double expect = N / 7.0;
    CHECK(std::fabs(c - expect) < 5.0 * std::sqrt(expect));
  }
}

TEST_CASE("normal moments") {
  Rng rng(5);
  const int N = 200000;
  double sum = 0, sumsq = 0;
  for (int i = 0; i < N; ++i) {
    double v = rng.normal(2.0, 3.0);
    sum += v;
    sumsq += v * v;
  }
  double mean = sum / N;
  double var = sumsq / N - mean * mean;
  CHECK(std::fabs(mean - 2.0) < 5.0 * 3.0 / std::sqrt(N));
  CHECK(std::fabs(var - 9.0) < 0.2);
}

TEST_CASE("poisson moments") {
  Rng rng(11);
  const int N = 100000;
  double sum = 0, sumsq = 0;
  for (int i = 0; i < N; ++i) {
    double v = rng.poisson(20.0);
    sum += v;
    sumsq += v * v;
  }
  double mean = sum / N;
  double var = sumsq / N - mean * mean;
  CHECK(std::fabs(mean - 20.0) < 5.0 * std::sqrt(20.0 / N));
  CHECK(std::fabs(var - 20.0) < 0.6);
}

TEST_CASE("categorical respects the distribution") {
  Rng rng(9);
  std::vector<double> probs = {0.2, 0.5, 0.3};
  std::vector<int> counts(3, 0);
  const int N = 60000;
  for (int i = 0; i < N; ++i) ++counts[rng.categorical(probs)];
  for (int j = 0; j < 3; ++j) {
    double expect = N * probs[j];
    CHECK(std::fabs(counts[j] - expect) < 5.0 * std::sqrt(expect));
  }
}
