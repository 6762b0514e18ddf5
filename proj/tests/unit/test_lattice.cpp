#include <doctest.h>

#include <sstream>

#include "qnls/errors.hpp"
#include "qnls/grid.hpp"
#include "qnls/lattice.hpp"
#include "qnls/params.hpp"
#include "qnls/spectral_field.hpp"
#include "support.hpp"

using namespace qnls;
using testing::cplx;
using testing::rel;

TEST_SUITE("lattice") {
  TEST_CASE("modes_within examples") {
    auto m0 = modes_within(0, 3);
    REQUIRE(m0.size() == 1);
    CHECK(m0[0].is_zero());

    CHECK(modes_within(1, 3).size() == 7);

    auto m2 = modes_within(2, 1);
    REQUIRE(m2.size() == 5);
    for (int i = 0; i < 5; ++i) CHECK(m2[i][0] == i - 2);

    CHECK_THROWS_AS(modes_within(2, 4), ParameterError);
    CHECK_THROWS_AS(modes_within(2, 0), ParameterError);
  }

  TEST_CASE("modes_within matches a lattice scan") {
    for (int d = 1; d <= 3; ++d) {
      for (double N : {0.0, 1.0, 1.5, 2.0, 3.7}) {
        std::size_t count = 0;
        int r = static_cast<int>(N);
        int ry = d >= 2 ? r : 0, rz = d >= 3 ? r : 0;
        for (int x = -r; x <= r; ++x)
          for (int y = -ry; y <= ry; ++y)
            for (int z = -rz; z <= rz; ++z)
              if (x * x + y * y + z * z <= N * N) ++count;
        auto ms = modes_within(N, d);
        CHECK(ms.size() == count);
        for (std::size_t i = 1; i < ms.size(); ++i) CHECK(ms[i - 1] < ms[i]);
      }
    }
  }

  TEST_CASE("ModeSet lookup") {
    auto set = ModeSet::ball(3, 2);
    for (std::size_t i = 0; i < set.size(); ++i) CHECK(set.index_of(set[i]) == static_cast<std::ptrdiff_t>(i));
    CHECK_FALSE(set.contains(Mode{3, 1}));
    CHECK_FALSE(set.contains(Mode{9, 0}));
    CHECK(set.contains(Mode{-2, 2}));
  }

  TEST_CASE("smooth cutoff plateau, support and midpoint") {
    CutoffProfile p{0.5, 1.0};
    CHECK(smooth_cutoff(0.3, p) == 1.0);
    CHECK(smooth_cutoff(1.2, p) == 0.0);
    CHECK(smooth_cutoff(0.75, p) == doctest::Approx(testing::bump(0.75, 0.5, 1.0)).epsilon(1e-15));
    CHECK(smooth_cutoff(0.75, p) == doctest::Approx(0.5).epsilon(1e-15));
    for (double r = 0.0; r < 1.3; r += 0.0137) CHECK(smooth_cutoff(r, p) == doctest::Approx(testing::bump(r, 0.5, 1.0)));
  }

  TEST_CASE("smooth cutoff is monotone and C1 across the edges") {
    CutoffProfile p{0.5, 1.0};
    double prev = 1.0;
    for (double r = 0.5; r <= 1.0; r += 1e-3) {
      double v = smooth_cutoff(r, p);
      CHECK(v <= prev);
      if (r > 0.55 && r < 0.98) CHECK(v < prev);
      prev = v;
    }
    const double h = 1e-4;
    for (double edge : {0.5, 1.0}) {
      double left = (smooth_cutoff(edge, p) - smooth_cutoff(edge - h, p)) / h;
      double right = (smooth_cutoff(edge + h, p) - smooth_cutoff(edge, p)) / h;
      CHECK(std::abs(left - right) < 1e-6);
    }
    CHECK_THROWS_AS((CutoffProfile{1.0, 0.5}.validate()), ParameterError);
  }

  TEST_CASE("truncation operators") {
    auto u = testing::random_field(1, 6, 11);
    auto s4 = apply_smooth_truncation(u, 4);
    auto p4 = apply_sharp_truncation(u, 4);
    auto sp = apply_smooth_truncation(p4, 4);
    auto ps = apply_sharp_truncation(s4, 4);
    auto pp = apply_sharp_truncation(p4, 4);
    for (std::size_t i = 0; i < u.size(); ++i) {
      const Mode& k = u.modes()[i];
      CHECK(sp[i] == s4[i]);
      CHECK(ps[i] == s4[i]);
      CHECK(pp[i] == p4[i]);
      if (k.norm() <= 4 * 0.87) CHECK(s4[i] == u[i]);
      if (k.norm() >= 4) CHECK(s4[i] == cplx(0.0));
      CHECK(s4[i] == u[i] * testing::chi_freq(k.norm2(), 4));
    }
  }

  TEST_CASE("reads outside the stored ball are zero") {
    auto u = testing::random_field(2, 2, 3);
    CHECK(u.at(Mode{5, 0}) == cplx(0.0));
    CHECK_THROWS_AS(u.set(Mode{5, 0}, 1.0), ParameterError);
    auto r = u.resized(4);
    CHECK(r.at(Mode{1, 1}) == u.at(Mode{1, 1}));
    CHECK(r.at(Mode{3, 0}) == cplx(0.0));
  }

  TEST_CASE("norm examples") {
    auto u = single_mode(1, 3, Mode{2}, 1.0);
    CHECK(triple_norm_sq(u, 10) == 1048577.0);
    SpectralField z(1, 3);
    CHECK(triple_norm_sq(z, 10) == 0.0);
    CHECK(sobolev_norm_sq(z, 8.4) == 0.0);
    auto c = single_mode(3, 1, Mode{0, 0, 0}, cplx(0.6, -0.8));
    CHECK(triple_norm_sq(c, 10) == doctest::Approx(1.0));
    CHECK(sobolev_norm_sq(c, 3) == doctest::Approx(1.0));
    auto v = testing::random_field(2, 3, 5);
    double direct = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) direct += std::pow(1.0 + v.modes()[i].norm2(), 2.5) * std::norm(v[i]);
    CHECK(rel(sobolev_norm_sq(v, 2.5), direct) < 1e-14);
  }

  TEST_CASE("triple norm against the Sobolev norm at equal exponent") {
    // (1 + |k|^{2s}) / (1 + |k|^2)^s lies in [2^{1-s}, 1]; the lower end is attained at |k| = 1.
    for (double s : {1.0, 2.0, 10.0}) {
      for (unsigned seed = 0; seed < 5; ++seed) {
        auto u = testing::random_field(1, 8, seed);
        double r = triple_norm_sq(u, s) / sobolev_norm_sq(u, s);
        CHECK(r <= 1.0 + 1e-14);
        CHECK(r >= std::pow(2.0, 1.0 - s) - 1e-14);
      }
      auto one = single_mode(1, 2, Mode{1}, 1.0);
      CHECK(triple_norm_sq(one, s) / sobolev_norm_sq(one, s) == doctest::Approx(std::pow(2.0, 1.0 - s)));
    }
    // A fixed [1/2, 2] window fails once s > 2.
    auto one = single_mode(1, 2, Mode{1}, 1.0);
    CHECK(triple_norm_sq(one, 10) / sobolev_norm_sq(one, 10) < 0.5);
  }

  TEST_CASE("model parameter validation") {
    ModelParams p;
    CHECK_NOTHROW(p.validate());
    auto bad = [](auto mutate) {
      ModelParams q;
      mutate(q);
      return q;
    };
    CHECK_THROWS_AS(bad([](ModelParams& q) { q.delta0 = 0.7; }).validate(), ParameterError);
    CHECK_THROWS_AS(bad([](ModelParams& q) { q.theta = 0.31; }).validate(), ParameterError);
    CHECK_THROWS_AS(bad([](ModelParams& q) { q.sigma = 9.5; }).validate(), ParameterError);
    CHECK_THROWS_AS(bad([](ModelParams& q) { q.N = 0; }).validate(), ParameterError);
    CHECK_THROWS_AS(bad([](ModelParams& q) { q.dim = 4; }).validate(), ParameterError);
    CHECK_THROWS_AS(bad([](ModelParams& q) { q.R = -1; }).validate(), ParameterError);
    nlohmann::json j = p;
    ModelParams back = j.get<ModelParams>();
    CHECK(back.s == p.s);
    CHECK(back.frequency_cutoff.plateau == p.frequency_cutoff.plateau);
    j["bogus"] = 1;
    CHECK_THROWS(j.get<ModelParams>());
  }

  TEST_CASE("field serialization round trips") {
    auto u = testing::random_field(3, 2, 9);
    auto j = to_json(u);
    auto v = field_from_json(j);
    std::stringstream ss;
    write_binary(u, ss);
    CHECK(ss.str().substr(0, 4) == "SPF1");
    auto w = read_binary(ss);
    REQUIRE(v.size() == u.size());
    REQUIRE(w.size() == u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
      CHECK(v[i] == u[i]);
      CHECK(w[i] == u[i]);
    }
    std::stringstream junk("SPF2....");
    CHECK_THROWS(read_binary(junk));
  }
}

TEST_SUITE("grid") {
  TEST_CASE("grid round trip") {
    auto one = single_mode(2, 3, Mode{2, -1}, cplx(0.3, 0.4));
    for (int M : {7, 8, 12}) {
      auto back = from_grid(to_grid(one, M), 2, M, 3);
      for (std::size_t i = 0; i < one.size(); ++i) CHECK(std::abs(back[i] - one[i]) < 1e-15);
    }
    for (int d = 1; d <= 3; ++d) {
      int N = d == 3 ? 3 : 6;
      auto u = testing::random_field(d, N, 40 + d);
      auto back = from_grid(to_grid(u, 2 * N + 1), d, 2 * N + 1, N);
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < u.size(); ++i) {
        num += std::norm(back[i] - u[i]);
        den += std::norm(u[i]);
      }
      CHECK(std::sqrt(num / den) <= 1e-12);
    }
    CHECK_THROWS_AS(to_grid(testing::random_field(1, 4, 1), 8), AliasingError);
  }

  TEST_CASE("constant field is constant on the grid") {
    auto c = single_mode(2, 2, Mode{0, 0}, cplx(1.5, -2.0));
    for (const auto& v : to_grid(c, 9)) CHECK(std::abs(v - cplx(1.5, -2.0)) < 1e-15);
  }

  TEST_CASE("grid values follow the series convention") {
    auto u = testing::random_field(1, 3, 8);
    int M = 9;
    auto g = to_grid(u, M);
    for (int j = 0; j < M; ++j) {
      double x = 2.0 * M_PI * j / M;
      cplx s = 0.0;
      for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * std::exp(cplx(0.0, u.modes()[i][0] * x));
      CHECK(std::abs(g[j] - s) < 1e-13);
    }
  }

  TEST_CASE("Parseval") {
    for (int d = 1; d <= 3; ++d) {
      int N = d == 3 ? 2 : 5;
      auto u = testing::random_field(d, N, 70 + d);
      int M = 2 * N + 3;
      auto g = to_grid(u, M);
      double q = 0.0;
      for (const auto& v : g) q += std::norm(v);
      q *= std::pow(2.0 * M_PI / M, d);
      CHECK(rel(mass(u), q) < 1e-10);
    }
  }

  TEST_CASE("good FFT sizes") {
    CHECK(good_fft_size(19) == 20);
    CHECK(good_fft_size(37) == 40);
    CHECK(good_fft_size(1) == 1);
    CHECK(good_fft_size(11) == 12);
  }

  TEST_CASE("quintic of a single mode") {
    for (int N : {3, 5}) {
      for (int k : {0, 1, 3, 4}) {
        cplx c(0.7, -0.4);
        auto u = single_mode(1, N + 1, Mode{k}, c);
        auto F = quintic_nonlinearity(u, N);
        double chi = testing::chi_freq(k * k, N);
        cplx expect = std::pow(chi, 6) * std::norm(c) * std::norm(c) * c;
        for (std::size_t i = 0; i < F.size(); ++i) {
          cplx want = F.modes()[i][0] == k ? expect : cplx(0.0);
          CHECK(std::abs(F[i] - want) < 1e-14);
        }
      }
    }
    auto z = quintic_nonlinearity(SpectralField(2, 3), 3);
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(z[i] == cplx(0.0));
  }

  TEST_CASE("quintic against the 5-fold convolution") {
    for (int N = 1; N <= 4; ++N) {
      for (unsigned seed = 0; seed < 3; ++seed) {
        auto u = testing::random_field(1, N, 100 * N + seed, 0.5);
        auto F = quintic_nonlinearity(u, N);
        const int n = N;
        std::vector<cplx> w(2 * n + 1);
        for (int k = -n; k <= n; ++k) w[k + n] = testing::chi_freq(k * k, N) * u.at(Mode{k});
        std::vector<cplx> conv(10 * n + 1);
        for (int a = -n; a <= n; ++a)
          for (int b = -n; b <= n; ++b)
            for (int c = -n; c <= n; ++c)
              for (int d = -n; d <= n; ++d)
                for (int e = -n; e <= n; ++e)
                  conv[a - b + c - d + e + 5 * n] +=
                      w[a + n] * std::conj(w[b + n]) * w[c + n] * std::conj(w[d + n]) * w[e + n];
        double scale = 0.0;
        for (int k = -n; k <= n; ++k) scale = std::max(scale, std::abs(conv[k + 5 * n]));
        for (int k = -n; k <= n; ++k) {
          cplx want = testing::chi_freq(k * k, N) * conv[k + 5 * n];
          CHECK(std::abs(F.at(Mode{k}) - want) <= 1e-12 * scale);
        }
      }
    }
  }

  TEST_CASE("quintic in d=2 against a direct sum") {
    int N = 2;
    auto u = testing::random_field(2, N, 5);
    auto F = quintic_nonlinearity(u, N);
    auto band = modes_within(N, 2);
    std::vector<cplx> w;
    for (const auto& k : band) w.push_back(testing::chi_freq(k.norm2(), N) * u.at(k));
    std::size_t B = band.size();
    for (const auto& target : band) {
      cplx s = 0.0;
      for (std::size_t a = 0; a < B; ++a)
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t c = 0; c < B; ++c)
            for (std::size_t d = 0; d < B; ++d) {
              Mode e = target - band[a] + band[b] - band[c] + band[d];
              auto it = std::find(band.begin(), band.end(), e);
              if (it == band.end()) continue;
              s += w[a] * std::conj(w[b]) * w[c] * std::conj(w[d]) * w[it - band.begin()];
            }
      CHECK(std::abs(F.at(target) - testing::chi_freq(target.norm2(), N) * s) < 1e-12);
    }
  }

  TEST_CASE("mass and Hamiltonian") {
    auto u = single_mode(1, 2, Mode{0}, 2.0);
    CHECK(mass(u) == doctest::Approx(2 * M_PI * 4));
    SpectralField z(1, 3);
    CHECK(mass(z) == 0.0);
    CHECK(hamiltonian(z) == 0.0);
    CHECK(truncated_hamiltonian(z, 3) == 0.0);
    for (int d = 1; d <= 3; ++d) {
      Mode k(d);
      k.k[0] = 1;
      if (d > 1) k.k[1] = -1;
      cplx c(0.5, 0.9);
      auto v = single_mode(d, 2, k, c);
      double a2 = std::norm(c);
      double expect = std::pow(2 * M_PI, d) * (0.5 * k.norm2() * a2 + a2 * a2 * a2 / 6.0);
      CHECK(rel(hamiltonian(v), expect) < 1e-12);
    }
  }

  TEST_CASE("truncated Hamiltonian uses S_N u in the sextic term") {
    auto u = testing::random_field(1, 5, 21);
    auto s = apply_smooth_truncation(u, 4);
    double grad = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) grad += u.modes()[i].norm2() * std::norm(u[i]);
    double expect = 2 * M_PI * 0.5 * grad + sextic_integral(s) / 6.0;
    CHECK(rel(truncated_hamiltonian(u, 4), expect) < 1e-13);
    // Direct quadrature of |f|^6 on a fine grid.
    int M = 64;
    auto g = to_grid(s, M);
    double q = 0.0;
    for (const auto& v : g) q += std::pow(std::norm(v), 3);
    CHECK(rel(sextic_integral(s), 2 * M_PI * q / M) < 1e-12);
  }
}
