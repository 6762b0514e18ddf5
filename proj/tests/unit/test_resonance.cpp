#include <doctest.h>

#include <map>

#include "qnls/errors.hpp"
#include "qnls/resonance.hpp"
#include "support.hpp"

using namespace qnls;

namespace {

SixTuple tuple1(std::array<int, 6> v) {
  SixTuple t;
  for (int j = 0; j < 6; ++j) t[j] = Mode{v[j]};
  return t;
}

std::uint64_t naive_six(const std::vector<int>& set) {
  std::uint64_t n = 0;
  for (int a : set)
    for (int b : set)
      for (int c : set)
        for (int d : set)
          for (int e : set)
            for (int f : set)
              if (a - b + c - d + e - f == 0) ++n;
  return n;
}

}  // namespace

TEST_SUITE("resonance") {
  TEST_CASE("omega, psi and lambda examples") {
    auto t = tuple1({3, 1, 1, 2, 1, 2});
    CHECK(zero_sum(t));
    CHECK(omega(t) == 2);
    CHECK(psi2s(t, 1.0) == doctest::Approx(2.0));
    CHECK(psi2s(t, 2.0) == doctest::Approx(50.0));
    CHECK(lambda_factor(t) == doctest::Approx(std::sqrt(20.0)));
    auto z = tuple1({0, 0, 0, 0, 0, 0});
    CHECK(omega(z) == 0);
    CHECK(lambda_factor(z) == 0.0);
    CHECK(resonance_weight(z, 10, 0.6, Branch::Near) == 0.0);
    CHECK(resonance_weight(z, 10, 0.6, Branch::Far) == 0.0);
    auto p = tuple1({5, 5, 2, 2, 7, 7});
    CHECK(omega(p) == 0);
    CHECK(psi2s(p, 10.0) == 0.0);
    CHECK_THROWS_AS(omega(tuple1({1, 0, 0, 0, 0, 0})), ConstraintError);
    CHECK_THROWS_AS(psi2s(tuple1({1, 0, 0, 0, 0, 0}), 2.0), ConstraintError);
  }

  TEST_CASE("resonance weights") {
    // Omega = 0 kills the far branch.
    auto t0 = tuple1({2, 1, 1, 2, 0, 0});
    CHECK(omega(t0) == 0);
    CHECK(resonance_weight(t0, 10, 0.6, Branch::Far) == 0.0);
    // |Omega| >= lambda^delta0 kills the near branch.
    auto t = tuple1({3, 1, 0, 2, 0, 0});
    double lam = std::sqrt(14.0);
    REQUIRE(omega(t) == 4);
    REQUIRE(4.0 >= std::pow(lam, 0.6));
    CHECK(resonance_weight(t, 10, 0.6, Branch::Near) == 0.0);
    double chi = testing::bump(4.0 / std::pow(lam, 0.6), 0.5, 1.0);
    CHECK(resonance_weight(t, 2, 0.6, Branch::Far) == doctest::Approx((1 - chi) * 64.0 / 4.0));
    // A near-resonant tuple with both branches active.
    auto u = tuple1({5, 4, 3, 4, 1, 1});
    int om = omega(u);
    double l = lambda_factor(u);
    double c = testing::bump(std::abs(om) / std::pow(l, 0.6), 0.5, 1.0);
    double psi = psi2s(u, 3.0);
    CHECK(resonance_weight(u, 3, 0.6, Branch::Near) == doctest::Approx(c * psi));
    CHECK(resonance_weight(u, 3, 0.6, Branch::Far) == doctest::Approx((1 - c) * psi / om));
  }

  TEST_CASE("swap symmetry") {
    for (auto v : {std::array<int, 6>{3, 1, 1, 2, 1, 2}, std::array<int, 6>{4, -2, 0, 5, -3, 0}}) {
      auto t = tuple1(v);
      if (!zero_sum(t)) continue;
      auto s = tuple1({v[1], v[0], v[3], v[2], v[5], v[4]});
      CHECK(omega(s) == -omega(t));
      CHECK(psi2s(s, 10) == doctest::Approx(-psi2s(t, 10)));
      if (omega(t) != 0) CHECK(psi2s(s, 10) / omega(s) == doctest::Approx(psi2s(t, 10) / omega(t)));
    }
  }

  TEST_CASE("six-tuple enumeration") {
    CHECK(count_six_tuples(ModeSet::ball(0, 1)) == 1);
    for (int N = 1; N <= 4; ++N) {
      std::vector<int> set;
      for (int k = -N; k <= N; ++k) set.push_back(k);
      CHECK(count_six_tuples(ModeSet::ball(N, 1)) == naive_six(set));
    }
    // d=3, N=1 by a direct 7^6 scan.
    auto ms = modes_within(1, 3);
    std::uint64_t n = 0;
    for (auto& a : ms)
      for (auto& b : ms)
        for (auto& c : ms)
          for (auto& d : ms)
            for (auto& e : ms)
              for (auto& f : ms)
                if ((a - b + c - d + e - f).is_zero()) ++n;
    CHECK(count_six_tuples(ModeSet::ball(1, 3)) == n);

    // Each tuple once, all zero-sum, and the count does not depend on the order of the set.
    std::map<std::array<int, 6>, int> seen;
    enumerate_six_tuples(ModeSet::ball(2, 1), [&](const SixTuple& t) {
      CHECK(zero_sum(t));
      seen[{t[0][0], t[1][0], t[2][0], t[3][0], t[4][0], t[5][0]}]++;
    });
    for (auto& [k, v] : seen) CHECK(v == 1);
    ModeSet shuffled(1, {Mode{2}, Mode{-1}, Mode{0}, Mode{-2}, Mode{1}});
    CHECK(count_six_tuples(shuffled) == seen.size());

    Budget tiny(10);
    CHECK_THROWS_AS(count_six_tuples(ModeSet::ball(3, 1), &tiny), BudgetExceeded);
  }

  TEST_CASE("second-generation enumeration") {
    std::uint64_t zero = 0;
    enumerate_second_gen(ModeSet::ball(0, 1), Family::R1, [&](const SecondGenTuple& t) {
      ++zero;
      CHECK(t.valid());
    });
    CHECK(zero == 1);

    // 9-loop oracle on {-1,0,1}: root from the inner five, sixth outer mode solved.
    std::uint64_t oracle = 0;
    for (int p1 = -1; p1 <= 1; ++p1)
      for (int p2 = -1; p2 <= 1; ++p2)
        for (int p3 = -1; p3 <= 1; ++p3)
          for (int p4 = -1; p4 <= 1; ++p4)
            for (int p5 = -1; p5 <= 1; ++p5) {
              int k1 = p1 - p2 + p3 - p4 + p5;
              if (std::abs(k1) > 1) continue;
              for (int k2 = -1; k2 <= 1; ++k2)
                for (int k3 = -1; k3 <= 1; ++k3)
                  for (int k4 = -1; k4 <= 1; ++k4)
                    for (int k5 = -1; k5 <= 1; ++k5) {
                      int k6 = k1 - k2 + k3 - k4 + k5;
                      if (std::abs(k6) <= 1) ++oracle;
                    }
            }
    std::uint64_t r1 = 0, r2 = 0;
    auto set = ModeSet::ball(1, 1);
    enumerate_second_gen(set, Family::R1, [&](const SecondGenTuple& t) {
      ++r1;
      CHECK(t.valid());
    });
    enumerate_second_gen(set, Family::R2, [&](const SecondGenTuple& t) {
      ++r2;
      CHECK(t.valid());
    });
    CHECK(r1 == oracle);
    CHECK(r2 == r1);

    std::uint64_t a = 0, b = 0;
    auto set2 = ModeSet::ball(2, 1);
    enumerate_second_gen(set2, Family::R1, [&](const SecondGenTuple&) { ++a; });
    enumerate_second_gen(set2, Family::R2, [&](const SecondGenTuple&) { ++b; });
    CHECK(a == b);
  }

  TEST_CASE("classification examples") {
    SecondGenTuple z;
    for (auto& m : z.k) m = Mode{0};
    for (auto& m : z.inner) m = Mode{0};
    // The literal pairing conditions hold with equality, so the pairing tag wins.
    CHECK(classify(z, 0.3) == PairingClass::S11);
    CHECK(classify_remainder(z, 0.3) == PairingClass::TypeB);

    SecondGenTuple s;
    s.inner = {Mode{50}, Mode{1}, Mode{0}, Mode{0}, Mode{0}};
    s.k = tuple1({49, 50, 1, 0, 0, 0});
    REQUIRE(s.valid());
    CHECK(classify(s, 0.3) == PairingClass::S11);

    SecondGenTuple b;
    b.inner = {Mode{50}, Mode{50}, Mode{0}, Mode{0}, Mode{0}};
    b.k = tuple1({0, 0, 0, 0, 0, 0});
    REQUIRE(b.valid());
    CHECK(classify(b, 0.3) == PairingClass::TypeB);

    // Two large leaves in different generations: Type C.
    SecondGenTuple c;
    c.inner = {Mode{50}, Mode{0}, Mode{0}, Mode{0}, Mode{0}};
    c.k = tuple1({50, 0, -50, 0, 0, 0});
    REQUIRE(c.valid());
    CHECK(classify(c, 0.3) == PairingClass::TypeC);

    // Many medium leaves: Type A.
    SecondGenTuple a;
    a.inner = {Mode{50}, Mode{9}, Mode{9}, Mode{9}, Mode{9}};
    a.k = tuple1({50, 50, 9, 9, 9, 9});
    REQUIRE(a.valid());
    CHECK(classify(a, 0.3) == PairingClass::TypeA);

    // Slot 9 (inner p2 with outer k3): S12.
    SecondGenTuple t12;
    t12.inner = {Mode{0}, Mode{-40}, Mode{0}, Mode{0}, Mode{0}};
    t12.k = tuple1({40, 0, -40, 0, 0, 0});
    REQUIRE(t12.valid());
    CHECK(classify(t12, 0.3) == PairingClass::S12);
  }

  TEST_CASE("classification ignores the order of equal leaves") {
    SecondGenTuple t;
    t.inner = {Mode{3}, Mode{-3}, Mode{1}, Mode{1}, Mode{0}};
    t.k = tuple1({6, 3, 0, 0, 0, 3});
    REQUIRE(t.valid());
    auto tag = classify(t, 0.3);
    SecondGenTuple u = t;
    std::swap(u.inner[2], u.inner[4]);
    std::swap(u.inner[0], u.inner[2]);
    std::swap(u.inner[1], u.inner[3]);
    REQUIRE(u.valid());
    CHECK(classify_remainder(u, 0.3) == classify_remainder(t, 0.3));
    CHECK(classify(t, 0.3) == tag);
  }

  TEST_CASE("counting audit examples") {
    auto r = counting_audit(2, {4, 4}, {1, -1}, Mode{1, 0, 0}, 1);
    CHECK(r.count == 32);
    CHECK(r.bound == 16.0);
    CHECK(r.ratio == 2.0);

    // Oracle for the same instance: k2 = (0, y, z), k1 = k2 + e1, both in the shell (2, 4].
    std::uint64_t n = 0;
    for (int y = -4; y <= 4; ++y)
      for (int z = -4; z <= 4; ++z) {
        int a = y * y + z * z, b = 1 + a;
        if (a > 4 && a <= 16 && b > 4 && b <= 16) ++n;
      }
    CHECK(n == 32);

    CHECK(counting_audit(2, {4, 4}, {1, -1}, Mode{0, 0, 0}, 0).count == 0);

    for (int K = -6; K <= 6; ++K)
      for (long long kappa : {-4LL, 0LL, 4LL, 8LL, 12LL}) {
        std::uint64_t o = 0;
        for (int a : {-2, 2})
          for (int b : {-2, 2})
            for (int c : {-2, 2}) {
              if (a + b - c != K || a * a + b * b - c * c != kappa) continue;
              if (a + b == 0 || a - c == 0 || b - c == 0) continue;
              ++o;
            }
        CHECK(counting_audit(3, {2, 2, 2}, {1, 1, -1}, Mode{K}, kappa).count == o);
      }
    Budget tiny(5);
    CHECK_THROWS_AS(counting_audit(3, {8, 8, 8}, {1, 1, -1}, Mode{0, 0, 0}, 0, {}, &tiny), BudgetExceeded);
    CHECK_THROWS_AS(counting_audit(1, {4}, {1}, Mode{0, 0, 0}, 0), ParameterError);
  }

  TEST_CASE("dyadic shells and bound") {
    auto sh = dyadic_shell(2, 1);
    REQUIRE(sh.size() == 2);
    CHECK(counting_bound({4, 8, 2}) == 4.0 * 4.0 * 8.0);
  }

  TEST_CASE("psi bound audit") {
    auto p = tuple1({5, 5, 2, 2, 7, 7});
    CHECK(psi_bound_ratio(p, 10) == 0.0);
    auto r1 = psi_bound_audit_exhaustive(6, 1.0);
    CHECK(r1.max_ratio <= 1.0 + 1e-12);
    auto r10 = psi_bound_audit_exhaustive(6, 10.0);
    CHECK(std::isfinite(r10.max_ratio));
    CHECK(r10.tuples > 0);
    CHECK(psi_bound_audit({p}, 10).max_ratio == 0.0);
  }
}
