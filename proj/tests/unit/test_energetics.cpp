#include <doctest.h>

#include <fstream>

#include "qnls/energetics.hpp"
#include "qnls/errors.hpp"
#include "qnls/randomfield.hpp"
#include "support.hpp"

using namespace qnls;
using testing::cplx;
using testing::rel;

namespace {

ModelParams params1(int N) {
  ModelParams p;
  p.N = N;
  return p;
}

double far_oracle(const std::array<int, 6>& k, double s, double delta0) {
  int om = 0, l2 = 0;
  double psi = 0.0;
  for (int j = 0; j < 6; ++j) {
    int sg = j % 2 == 0 ? 1 : -1;
    om += sg * k[j] * k[j];
    l2 += k[j] * k[j];
    psi += sg * std::pow(static_cast<double>(k[j] * k[j]), s);
  }
  if (om == 0) return 0.0;
  double c = testing::bump(std::abs(om) / std::pow(std::sqrt(static_cast<double>(l2)), delta0), 0.5, 1.0);
  return (1.0 - c) * psi / om;
}

// d=1 weighted coefficients w_k = chi_N(k) u_k on |k| < N, indexed by k + N.
std::vector<cplx> w_dense(const SpectralField& u, int N) {
  std::vector<cplx> w(2 * N + 1);
  for (int k = -N; k <= N; ++k) w[k + N] = testing::chi_freq(k * k, N) * u.at(Mode{k});
  return w;
}

double R_oracle(const SpectralField& u, const ModelParams& p) {
  const int N = p.N;
  auto w = w_dense(u, N);
  double acc = 0.0;
  for (int a = -N; a <= N; ++a)
    for (int b = -N; b <= N; ++b)
      for (int c = -N; c <= N; ++c)
        for (int d = -N; d <= N; ++d)
          for (int e = -N; e <= N; ++e) {
            int f = a - b + c - d + e;
            if (std::abs(f) > N) continue;
            double g = far_oracle({a, b, c, d, e, f}, p.s, p.delta0);
            if (g == 0.0) continue;
            cplx P = w[a + N] * std::conj(w[b + N]) * w[c + N] * std::conj(w[d + N]) * w[e + N] * std::conj(w[f + N]);
            acc += g * P.real();
          }
  return acc / 6.0;
}

struct NineLoop {
  cplx R1, S11, S12;
};

// Direct 9-index R1 sum with the literal Lambda_{1,1} and Lambda_{1,2} filters.
NineLoop nine_loop(const SpectralField& u, const ModelParams& p) {
  const int N = p.N;
  auto w = w_dense(u, N);
  auto W = [&](int k) { return std::abs(k) <= N ? w[k + N] : cplx(0.0); };
  auto chi = [&](int k) { return testing::chi_freq(k * k, N); };
  auto tp = [&](int k) { return k == 0 ? 0.0 : std::pow(std::abs(k), p.theta); };
  NineLoop out;
  for (int p1 = -N; p1 <= N; ++p1)
    for (int p2 = -N; p2 <= N; ++p2)
      for (int p3 = -N; p3 <= N; ++p3)
        for (int p4 = -N; p4 <= N; ++p4)
          for (int p5 = -N; p5 <= N; ++p5) {
            int k1 = p1 - p2 + p3 - p4 + p5;
            if (std::abs(k1) > N || chi(k1) == 0.0) continue;
            cplx inner = W(p1) * std::conj(W(p2)) * W(p3) * std::conj(W(p4)) * W(p5);
            if (inner == cplx(0.0)) continue;
            for (int k2 = -N; k2 <= N; ++k2)
              for (int k3 = -N; k3 <= N; ++k3)
                for (int k4 = -N; k4 <= N; ++k4)
                  for (int k5 = -N; k5 <= N; ++k5) {
                    int k6 = k1 - k2 + k3 - k4 + k5;
                    if (std::abs(k6) > N) continue;
                    double g = far_oracle({k1, k2, k3, k4, k5, k6}, p.s, p.delta0);
                    if (g == 0.0) continue;
                    cplx term = g * chi(k1) * chi(k1) * inner * std::conj(W(k2)) * W(k3) * std::conj(W(k4)) * W(k5) *
                                std::conj(W(k6));
                    out.R1 += term;
                    double small_in = std::abs(p2) + std::abs(p3) + std::abs(p4) + std::abs(p5);
                    double small_out = std::abs(k3) + std::abs(k4) + std::abs(k5) + std::abs(k6);
                    double B = tp(k1) + tp(k2);
                    if (p1 == k2 && small_in <= B + 1e-9 && small_out <= B + 1e-9) out.S11 += term;
                    double small_in2 = std::abs(p1) + std::abs(p3) + std::abs(p4) + std::abs(p5);
                    double small_out2 = std::abs(k2) + std::abs(k4) + std::abs(k5) + std::abs(k6);
                    double B2 = tp(k1) + tp(k3);
                    if (p2 == k3 && small_in2 <= B2 + 1e-9 && small_out2 <= B2 + 1e-9) out.S12 += term;
                  }
          }
  return out;
}

SpectralField seed_sample(int N, std::uint64_t seed, int n_tail = 8) {
  SamplerSpec sp;
  sp.params.N = N;
  sp.n_low = std::min(3, n_tail);
  sp.n_tail = n_tail;
  sp.master_seed = seed;
  return sample_mu_s(sp);
}

}  // namespace

TEST_SUITE("energetics") {
  TEST_CASE("correction against the naive six-loop") {
    auto p = params1(3);
    auto u = seed_sample(3, 42);
    double R = correction_R_sN(u, p);
    CHECK(rel(R, R_oracle(u, p)) < 1e-12);
    for (std::uint64_t seed : {1, 2, 3}) {
      auto v = seed_sample(3, seed);
      CHECK(rel(correction_R_sN(v, p), R_oracle(v, p)) < 1e-12);
    }
    auto q = params1(4);
    auto t = testing::random_field(1, 4, 77, 2.0);
    CHECK(rel(correction_R_sN(t, q), R_oracle(t, q)) < 1e-12);
  }

  TEST_CASE("single mode and zero field") {
    auto p = params1(3);
    SpectralField z(1, 3);
    CHECK(correction_R_sN(z, p) == 0.0);
    CHECK(modified_energy(z, p) == 0.0);
    auto rep = q_total(z, p);
    CHECK(rep.Q_sN == 0.0);
    for (const auto& [k, v] : rep.parts) CHECK(v == cplx(0.0));
    for (int k : {0, 1, 2}) {
      cplx c(0.8, 0.3);
      auto u = single_mode(1, 3, Mode{k}, c);
      CHECK(correction_R_sN(u, p) == 0.0);
      CHECK(modified_energy(u, p) == doctest::Approx(0.5 * (1 + std::pow(k, 20.0)) * std::norm(c)));
      auto r = q_total(u, p);
      CHECK(r.Q_sN == 0.0);
      CHECK(r.parts.at("R0") == cplx(0.0));
      for (auto key : {"S11", "S12", "S21", "S22", "J", "I"}) CHECK(r.parts.at(key) == cplx(0.0));
      CHECK(r.parts.at("R13") == r.parts.at("R1"));
    }
  }

  TEST_CASE("modified energy is additive") {
    auto p = params1(3);
    for (unsigned seed = 0; seed < 3; ++seed) {
      auto u = testing::random_field(1, 5, seed, 3.0);
      CHECK(modified_energy(u, p) == doctest::Approx(0.5 * triple_norm_sq(u, p.s) + correction_R_sN(u, p)));
    }
  }

  TEST_CASE("R1, S11, S12 against the nine-loop filter") {
    auto p = params1(3);
    auto u = seed_sample(3, 42);
    Energetics e(p, u.cutoff());
    auto w = e.weighted(u);
    auto o = nine_loop(u, p);
    CHECK(rel(e.R1_direct(w), o.R1) < 1e-12);
    CHECK(rel(e.first_pass(w).R1, o.R1) < 1e-10);
    CHECK(rel(e.S11(w), o.S11) < 1e-12);
    CHECK(rel(e.S12(w), o.S12) < 1e-12);
  }

  TEST_CASE("S11 filter on N=4") {
    auto p = params1(4);
    auto u = seed_sample(4, 9);
    Energetics e(p, u.cutoff());
    auto w = e.weighted(u);
    auto o = nine_loop(u, p);
    CHECK(rel(e.S11(w), o.S11) < 1e-12);
    CHECK(rel(e.S12(w), o.S12) < 1e-12);
  }

  TEST_CASE("dual path for R1 and R2 at N=2") {
    auto p = params1(2);
    for (std::uint64_t seed : {42, 7}) {
      auto u = seed_sample(2, seed);
      Energetics e(p, u.cutoff());
      auto w = e.weighted(u);
      auto fp = e.first_pass(w);
      CHECK(rel(fp.R1, e.R1_direct(w)) < 1e-10);
      CHECK(rel(fp.R2, e.R2_direct(w)) < 1e-10);
    }
  }

  TEST_CASE("report identities and multiplicities") {
    auto p = params1(3);
    auto u = seed_sample(3, 5);
    auto r = q_total(u, p);
    const auto& P = r.parts;
    cplx q = -P.at("R0") / 6.0 + P.at("R1") / 2.0 - P.at("R2") / 2.0;
    CHECK(rel(r.Q_sN, q.imag()) < 1e-12);
    CHECK(rel(P.at("R1"), 9.0 * P.at("S11") + 4.0 * P.at("S12") + P.at("R13_direct")) < 1e-10);
    CHECK(rel(P.at("R2"), 9.0 * P.at("S21") + 4.0 * P.at("S22") + P.at("R23_direct")) < 1e-10);
    CHECK(rel(P.at("S22"), std::conj(P.at("S12"))) < 1e-12);
    CHECK(rel(P.at("S21"), P.at("S21_relabelled")) < 1e-12);
    CHECK(r.counts.at("R1_slot_terms_primary") == 9 * r.counts.at("R1_Lambda11_terms"));
    CHECK(r.counts.at("R1_slot_terms_secondary") == 4 * r.counts.at("R1_Lambda12_terms"));
    CHECK(r.counts.at("R2_slot_terms_primary") == 9 * r.counts.at("R2_Lambda21_terms"));
    CHECK(r.counts.at("R2_slot_terms_secondary") == 4 * r.counts.at("R2_Lambda22_terms"));
    cplx typed = P.at("R13_typeA") + P.at("R13_typeB") + P.at("R13_typeC") + P.at("R13_overlap");
    CHECK(rel(typed, P.at("R13_direct")) < 1e-10);
    for (const auto& [k, v] : r.residuals) CHECK_MESSAGE(v < 1e-10, k);
    auto j = r.to_json();
    CHECK(j["parts"]["R0"].contains("re"));
    CHECK(j["parts"]["R0"].contains("im"));
  }

  TEST_CASE("multiplicity audit at N=2") {
    auto p = params1(2);
    auto u = seed_sample(2, 11);
    Energetics e(p, u.cutoff());
    auto w = e.weighted(u);
    auto c = e.classified(w, Family::R1);
    std::uint64_t prim = 0, sec = 0;
    for (int s = 0; s < 13; ++s) (pairing_slots(Family::R1)[s].primary ? prim : sec) += c.slot_counts[s];
    CHECK(prim == 9 * c.slot_counts[0]);
    CHECK(sec == 4 * c.slot_counts[9]);
    int np = 0, ns = 0;
    for (const auto& sl : pairing_slots(Family::R1)) (sl.primary ? np : ns)++;
    CHECK(np == 9);
    CHECK(ns == 4);
  }

  TEST_CASE("cancellation identities on several fields") {
    for (int N : {2, 3, 4}) {
      auto p = params1(N);
      for (std::uint64_t seed : {1, 2}) {
        auto u = seed_sample(N, seed);
        Energetics e(p, u.cutoff());
        auto w = e.weighted(u);
        cplx s11 = e.S11(w), s12 = e.S12(w), s21 = e.S21(w), s22 = e.S22(w);
        cplx J = e.J(w), I = e.I(w);
        double sc1 = std::max({std::abs(s11), std::abs(s21), std::abs(J), 1e-300});
        CHECK(std::abs((s11 - s21).imag() - J.imag()) <= 1e-11 * sc1);
        double sc2 = std::max({std::abs(s12), std::abs(I), 1e-300});
        CHECK(std::abs(s12.imag() - I.imag()) <= 1e-11 * sc2);
        CHECK(std::abs(s22 - std::conj(s12)) <= 1e-12 * std::max(std::abs(s12), 1e-300));
        CHECK(std::abs(s21 - e.S21_relabelled(w)) <= 1e-12 * std::max(std::abs(s21), 1e-300));
        auto m1 = e.main1(w), m2 = e.main2(w);
        CHECK(std::abs(m1.value.imag()) <= 1e-12 * std::max(m1.abs_mass, 1e-300));
        CHECK(std::abs(m2.value.imag()) <= 1e-12 * std::max(m2.abs_mass, 1e-300));
      }
    }
  }

  TEST_CASE("difference quotients") {
    CHECK(difference_quotient(4, 4, 10) == doctest::Approx(10 * std::pow(4.0, 9)));
    CHECK(difference_quotient(9, 4, 2) == doctest::Approx((81.0 - 16.0) / 5.0));
    CHECK(mean_quotient(0, 0, 10) == 0.0);
    CHECK(mean_quotient(1, 4, 2) == doctest::Approx(17.0 / 5.0));
    // Near the diagonal the quotient approaches the derivative value.
    double lim = difference_quotient(10000, 10000, 3);
    double near = difference_quotient(10001, 10000, 3);
    CHECK(rel(lim, near) < 1e-3);
  }

  TEST_CASE("corrector vanishing cases") {
    ModelParams p;
    // With the eight small leaves zero, zero-sum forces k2 = k1, so Omega = 0 and both terms vanish.
    for (int k1 = -60; k1 <= 60; ++k1) {
      SixTuple z{Mode{k1}, Mode{k1}, Mode{0}, Mode{0}, Mode{0}, Mode{0}};
      CHECK(corrector_psi(z, p.s, p.delta0) == 0.0);
    }
    for (int a = -3; a <= 3; ++a) {
      SixTuple t{Mode{a}, Mode{-a}, Mode{0}, Mode{0}, Mode{0}, Mode{0}};
      if (a != 0) CHECK_THROWS_AS(corrector_psi(t, p.s, p.delta0), ConstraintError);
    }
    // Lambda_{1,2} outer shape with small leaves zero: k2 = k4 = k5 = k6 = 0 needs k1 = -k3.
    for (int k1 = 1; k1 <= 60; ++k1) {
      SixTuple t{Mode{k1}, Mode{0}, Mode{-k1}, Mode{0}, Mode{0}, Mode{0}};
      REQUIRE(zero_sum(t));
      double v = corrector_psi_tilde(t, p.s);
      double scale = std::pow(k1, 2 * p.s - 2);
      CHECK(std::abs(v) <= 1e-13 * scale);
    }
    SixTuple zero{Mode{0}, Mode{0}, Mode{0}, Mode{0}, Mode{0}, Mode{0}};
    CHECK_THROWS_AS(corrector_psi_tilde(zero, 10), ConstraintError);
    CHECK(corrector_psi_tilde_cutoff(zero, 10, 0.6) == 0.0);
  }

  TEST_CASE("corrector audits are finite") {
    ModelParams p;
    auto a = audit_psi_corrector(20, p);
    auto b = audit_psi_tilde(20, p);
    CHECK(std::isfinite(a.max_ratio));
    CHECK(std::isfinite(b.max_ratio));
    CHECK(a.tuples > 0);
    CHECK(b.tuples > 0);
    CHECK(a.vanishing_checked > 0);
    CHECK(a.vanishing_max_abs <= 1e-13);
    CHECK(b.vanishing_max_abs <= 1e-13);
  }

  TEST_CASE("fast correction matches the direct sum") {
    for (int N : {2, 3, 4, 6}) {
      auto p = params1(N);
      for (std::uint64_t seed : {42, 3}) {
        auto u = seed_sample(N, seed, std::max(N, 8));
        FastCorrection fc(p, u.cutoff());
        double fast = fc(u);
        double direct = correction_R_sN(u, p);
        CHECK(std::abs(fast - direct) <= 1e-9 * std::max(1.0, std::abs(direct)));
      }
    }
    ModelParams q;
    q.dim = 2;
    q.N = 3;
    q.sigma = 8.0;
    auto u = testing::random_field(2, 3, 4, 2.0);
    FastCorrection fc(q, 3);
    double direct = correction_R_sN(u, q);
    CHECK(std::abs(fc(u) - direct) <= 1e-9 * std::max(1.0, std::abs(direct)));
  }

  TEST_CASE("budget guard") {
    auto p = params1(3);
    auto u = seed_sample(3, 1);
    Budget tiny(100);
    CHECK_THROWS_AS(correction_R_sN(u, p, &tiny), BudgetExceeded);
    ReportOptions o;
    o.budget = 1000;
    CHECK_THROWS_AS(q_total(u, p, o), BudgetExceeded);
  }

  TEST_CASE("golden decomposition for seed 42") {
    std::ifstream in(QNLS_TEST_DATA "/decompose_seed42.json");
    REQUIRE(in.good());
    auto g = nlohmann::json::parse(in);
    auto p = params1(3);
    auto r = q_total(seed_sample(3, 42), p);
    CHECK(rel(r.E_sN, g["E_sN"].get<double>()) < 1e-12);
    CHECK(rel(r.R_sN, g["R_sN"].get<double>()) < 1e-12);
    CHECK(rel(r.Q_sN, g["Q_sN"].get<double>()) < 1e-12);
    for (auto it = g["parts"].begin(); it != g["parts"].end(); ++it) {
      cplx want(it.value()["re"].get<double>(), it.value()["im"].get<double>());
      REQUIRE(r.parts.count(it.key()) == 1);
      double sc = std::max(std::abs(want), 1e-300);
      CHECK_MESSAGE(std::abs(r.parts.at(it.key()) - want) <= 1e-12 * sc, it.key());
    }
    for (auto it = g["counts"].begin(); it != g["counts"].end(); ++it)
      CHECK(r.counts.at(it.key()) == it.value().get<std::uint64_t>());
    for (auto it = g["residuals"].begin(); it != g["residuals"].end(); ++it) CHECK(it.value().get<double>() <= 1e-10);
  }
}
