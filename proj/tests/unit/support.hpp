#pragma once

#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "qnls/lattice.hpp"
#include "qnls/params.hpp"
#include "qnls/spectral_field.hpp"

namespace testing {

using cplx = std::complex<double>;

// Bump written out from its definition, independent of the library.
inline double bump(double r, double r0, double r1) {
  auto g = [](double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; };
  double a = g(r1 - r), b = g(r - r0);
  return a / (a + b);
}

inline double chi_freq(int k2, double N) { return bump(std::sqrt(static_cast<double>(k2)) / N, 0.87, 1.0); }

inline double rel(double a, double b) {
  double s = std::max(std::abs(a), std::abs(b));
  return s == 0.0 ? 0.0 : std::abs(a - b) / s;
}
inline double rel(cplx a, cplx b) {
  double s = std::max(std::abs(a), std::abs(b));
  return s == 0.0 ? 0.0 : std::abs(a - b) / s;
}

// Gaussian coefficients with |k|^{-decay} envelope, from a test-only generator.
inline qnls::SpectralField random_field(int dim, int cutoff, unsigned seed, double decay = 1.0) {
  qnls::SpectralField u(dim, cutoff);
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (std::size_t i = 0; i < u.size(); ++i) {
    double a = 1.0 / (1.0 + std::pow(u.modes()[i].norm(), decay));
    u[i] = a * cplx(nd(gen), nd(gen));
  }
  return u;
}

// d=1 coefficients on [-n, n] as a dense vector indexed by k + n.
inline std::vector<cplx> dense_1d(const qnls::SpectralField& u, int n) {
  std::vector<cplx> v(2 * n + 1);
  for (int k = -n; k <= n; ++k) v[k + n] = u.at(qnls::Mode{k});
  return v;
}

}  // namespace testing
