#include <doctest.h>

#include <cmath>

#include "modcausal/distribution.hpp"
#include "modcausal/metrics.hpp"

using namespace modcausal;

TEST_SUITE("distribution") {

TEST_CASE("marginal, condition and fix_condition agree with hand arithmetic") {
  Distribution d({"A", "B"}, {2, 2});
  d.at({0, 0}) = 0.1;
  d.at({0, 1}) = 0.2;
  d.at({1, 0}) = 0.3;
  d.at({1, 1}) = 0.4;
  auto ma = d.marginal(VariableSet{"A"});
  CHECK(ma.at({0}) == doctest::Approx(0.3));
  CHECK(ma.at({1}) == doctest::Approx(0.7));

  auto cond = d.condition(VariableSet{"A"});
  CHECK(cond.cond_vars == std::vector<std::string>{"A"});
  CHECK(cond.at({0}, {0}) == doctest::Approx(0.1 / 0.3));
  CHECK(cond.at({1}, {1}) == doctest::Approx(0.4 / 0.7));

  auto fixed = cond.fix_condition("A", 1);
  CHECK(fixed.cond_vars.empty());
  CHECK(fixed.at({0}) == doctest::Approx(0.3 / 0.7));
}

TEST_CASE("reorder permutes axes consistently") {
  Distribution d({"A", "B"}, {2, 3});
  int k = 0;
  for (int a = 0; a < 2; a++)
    for (int b = 0; b < 3; b++) d.at({a, b}) = ++k;
  auto r = d.reorder({"B", "A"});
  for (int a = 0; a < 2; a++)
    for (int b = 0; b < 3; b++) CHECK(r.at({b, a}) == d.at({a, b}));
}

TEST_CASE("tvd matches the stated examples") {
  Distribution p({"X"}, {2}), q({"X"}, {2});
  p.at({0}) = 0.6;
  p.at({1}) = 0.4;
  q.at({0}) = 0.5;
  q.at({1}) = 0.5;
  CHECK(tvd(p, q) == doctest::Approx(0.1));
  CHECK(tvd(p, p) == doctest::Approx(0.0));

  Distribution a({"X"}, {2}), b({"X"}, {2});
  a.at({0}) = 1.0;
  b.at({1}) = 1.0;
  CHECK(tvd(a, b) == doctest::Approx(1.0));

  Distribution wrong({"Y"}, {2});
  CHECK_THROWS_AS(tvd(p, wrong), validation_error);
}

TEST_CASE("kl matches the stated examples and is nonnegative") {
  Distribution p({"X"}, {2}), q({"X"}, {2});
  p.at({0}) = 1.0;
  q.at({0}) = 0.5;
  q.at({1}) = 0.5;
  CHECK(kl(p, q) == doctest::Approx(std::log(2.0)));
  CHECK(kl(q, q) == doctest::Approx(0.0));

  bool smoothed = false;
  Distribution z({"X"}, {2});
  z.at({0}) = 1.0;
  Distribution w({"X"}, {2});
  w.at({1}) = 1.0;
  double v = kl(z, w, &smoothed);
  CHECK(smoothed);
  CHECK(v > 0);

  // Gibbs on a few random pairs
  std::uint64_t state = 9;
  auto rnd = [&] {
    state = state * 6364136223846793005ULL + 1442695040888963407ULL;
    return (double)(state >> 11) / (double)(1ULL << 53);
  };
  for (int trial = 0; trial < 100; trial++) {
    Distribution r1({"X"}, {4}), r2({"X"}, {4});
    double s1 = 0, s2 = 0;
    for (int i = 0; i < 4; i++) {
      r1.at({i}) = 0.05 + rnd();
      r2.at({i}) = 0.05 + rnd();
      s1 += r1.at({i});
      s2 += r2.at({i});
    }
    for (int i = 0; i < 4; i++) {
      r1.at({i}) /= s1;
      r2.at({i}) /= s2;
    }
    CHECK(kl(r1, r2) >= -1e-12);
  }
}

TEST_CASE("slice-max convention: conditional tables report the worst slice") {
  Distribution p({"Y"}, {2}, {"X"}, {2}), q({"Y"}, {2}, {"X"}, {2});
  p.at({0}, {0}) = 0.5;
  p.at({1}, {0}) = 0.5;
  q.at({0}, {0}) = 0.5;
  q.at({1}, {0}) = 0.5;
  p.at({0}, {1}) = 0.9;
  p.at({1}, {1}) = 0.1;
  q.at({0}, {1}) = 0.6;
  q.at({1}, {1}) = 0.4;
  CHECK(tvd(p, q) == doctest::Approx(0.3));
}

TEST_CASE("normalization check flags bad slices") {
  Distribution p({"X"}, {2});
  p.at({0}) = 0.7;
  p.at({1}) = 0.7;
  CHECK_THROWS_AS(p.check_normalized(), numeric_error);
  p.normalize();
  p.check_normalized();
}

}  // TEST_SUITE
