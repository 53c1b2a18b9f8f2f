#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cyphertalk/grad_check.hpp"
#include "cyphertalk/matrix.hpp"
#include "cyphertalk/rng.hpp"

using namespace cyphertalk;

TEST_CASE("identical seed gives identical stream") {
  Rng a(123456789), b(123456789);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("labeled streams diverge from root and each other") {
  Rng root(99);
  Rng s1 = root.stream("alpha");
  Rng s2 = root.stream("beta");
  Rng r(99);
  bool all_same = true;
  for (int i = 0; i < 16; ++i) {
    const uint64_t v1 = s1.next_u64(), v2 = s2.next_u64(), vr = r.next_u64();
    if (v1 != v2 || v1 != vr) all_same = false;
  }
  CHECK_FALSE(all_same);
}

// Golden output of the spec'd generator (xoshiro256++ seeded via
// splitmix64), recorded once; any drift in the generator breaks key
// reproducibility.
TEST_CASE("uniform golden values, seed=7") {
  Rng rng(7);
  auto v = sample({DistSpec::Kind::Uniform}, 3, rng);
  const double expected[3] = {0.055360436478333108, 0.17211585444811772,
                              0.71757612835865936};
  REQUIRE(v.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(v[i] == expected[i]);
}

TEST_CASE("zero-variance gaussian collapses to zero") {
  Rng rng(1);
  DistSpec spec{DistSpec::Kind::Gaussian};
  spec.sigma = 0.0;
  auto v = sample(spec, 4, rng);
  for (double x : v) CHECK(x == 0.0);
}

TEST_CASE("invalid params are rejected by name") {
  Rng rng(1);
  DistSpec g{DistSpec::Kind::Gamma};
  g.k = 0.0;
  CHECK_THROWS_AS(sample(g, 1, rng), ConfigError);
  g.k = 1.0;
  g.theta = -1.0;
  CHECK_THROWS_AS(sample(g, 1, rng), ConfigError);
  DistSpec l{DistSpec::Kind::LaplaceEps};
  l.epsilon = 0.0;
  CHECK_THROWS_AS(sample(l, 1, rng), ConfigError);
  CHECK_THROWS_AS(sample({DistSpec::Kind::Uniform}, 0, rng), ConfigError);
}

TEST_CASE("gamma(k=1,theta=2) mean within 3 standard errors of 2") {
  Rng rng(2024);
  DistSpec spec{DistSpec::Kind::Gamma};
  spec.k = 1.0;
  spec.theta = 2.0;
  const size_t n = 100000;
  auto v = sample(spec, n, rng);
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= double(n);
  const double se = 2.0 / std::sqrt(double(n));  // sd = sqrt(k)*theta = 2
  CHECK(std::fabs(mean - 2.0) < 3.0 * se);
}

TEST_CASE("distribution moments match analytic values") {
  const size_t n = 100000;
  auto check_moments = [n](DistSpec spec, double mean, double var) {
    Rng rng(555);
    auto v = sample(spec, n, rng);
    double m = 0.0;
    for (double x : v) m += x;
    m /= double(n);
    double s2 = 0.0;
    for (double x : v) s2 += (x - m) * (x - m);
    s2 /= double(n - 1);
    const double se_mean = std::sqrt(var / double(n));
    CHECK(std::fabs(m - mean) < 4.0 * se_mean);
    CHECK(std::fabs(s2 - var) < 0.05 * var + 4.0 * var * std::sqrt(2.0 / double(n)));
  };
  check_moments({DistSpec::Kind::Uniform}, 0.5, 1.0 / 12.0);
  DistSpec g{DistSpec::Kind::Gaussian};
  g.sigma = 1.5;
  check_moments(g, 0.0, 2.25);
  DistSpec ga{DistSpec::Kind::Gamma};
  ga.k = 0.5;  // exercises the k<1 boost
  ga.theta = 1.0;
  check_moments(ga, 0.5, 0.5);
  DistSpec la{DistSpec::Kind::LaplaceEps};
  la.epsilon = 2.0;
  check_moments(la, 0.0, 8.0);  // var = 2 b^2
}

TEST_CASE("finite difference gradient of x^2") {
  auto f = [](const Vector& x) { return x[0] * x[0]; };
  auto g = finite_diff_grad(f, {3.0}, 1e-5);
  CHECK(g[0] == doctest::Approx(6.0).epsilon(1e-6));
}

TEST_CASE("finite difference gradient of a constant is zero") {
  auto f = [](const Vector&) { return 42.0; };
  auto g = finite_diff_grad(f, {1.0, -2.0, 0.5}, 1e-4);
  for (double v : g) CHECK(std::fabs(v) < 1e-9);
}

TEST_CASE("finite difference rejects non-finite objectives") {
  auto f = [](const Vector& x) { return std::log(x[0]); };
  CHECK_THROWS_AS(finite_diff_grad(f, {-1.0}, 1e-5), NumericError);
}

TEST_CASE("matvec and transpose agree with hand computation") {
  Matrix m(2, 3);
  double vals[] = {1, 2, 3, 4, 5, 6};
  std::copy(std::begin(vals), std::end(vals), m.data().begin());
  auto y = matvec(m, {1.0, 0.0, -1.0});
  CHECK(y[0] == doctest::Approx(-2.0));
  CHECK(y[1] == doctest::Approx(-2.0));
  auto z = matvec_t(m, {1.0, 1.0});
  CHECK(z[0] == doctest::Approx(5.0));
  CHECK(z[1] == doctest::Approx(7.0));
  CHECK(z[2] == doctest::Approx(9.0));
  CHECK_THROWS_AS(matvec(m, {1.0}), InputError);
}
