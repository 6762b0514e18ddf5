#pragma once

#include <complex>
#include <span>
#include <vector>

#include "qnls/params.hpp"
#include "qnls/spectral_field.hpp"

namespace qnls {

// Smallest n' >= n whose only prime factors are 2, 3, 5, 7.
int good_fft_size(int n);

// Complex M^d grid with FFTW plans. Not copyable; one per thread.
class FftGrid {
 public:
  FftGrid(int dim, int M);
  ~FftGrid();
  FftGrid(const FftGrid&) = delete;
  FftGrid& operator=(const FftGrid&) = delete;

  int dim() const { return dim_; }
  int M() const { return M_; }
  std::size_t points() const { return points_; }
  cplx* data() { return data_; }
  const cplx* data() const { return data_; }

  // Linear grid index of each mode (wrapped modulo M).
  std::vector<std::size_t> indices(const ModeSet& modes) const;

  // data <- sum_k c_k e^{ik.x}
  void synthesize(std::span<const cplx> coeffs, std::span<const std::size_t> idx);
  // out_k <- M^{-d} sum_x data(x) e^{-ik.x}; destroys data.
  void analyze(std::span<cplx> out, std::span<const std::size_t> idx);

 private:
  int dim_;
  int M_;
  std::size_t points_;
  cplx* data_;
  void* plan_fwd_;
  void* plan_bwd_;
};

std::vector<cplx> to_grid(const SpectralField& u, int M);
SpectralField from_grid(std::span<const cplx> grid, int dim, int M, int cutoff);

// Evaluates chi_N . F(|S_N u|^4 S_N u) on the active band of the params.
class QuinticOperator {
 public:
  explicit QuinticOperator(const ModelParams& params, int M = 0);
  QuinticOperator(ModeSet band, std::vector<double> chi, int M = 0);

  const ModeSet& band() const { return band_; }
  std::span<const double> chi() const { return chi_; }
  int M() const { return grid_.M(); }

  // out_k = chi_k * [|W|^4 W]_k with W = sum_k chi_k u_k e^{ikx}.
  void apply(std::span<const cplx> u_band, std::span<cplx> out);
  // F_k = [|W|^4 W]_k with W = sum_k w_k e^{ikx}, w already weighted.
  void product(std::span<const cplx> w_band, std::span<cplx> F);

 private:
  ModeSet band_;
  std::vector<double> chi_;
  FftGrid grid_;
  std::vector<std::size_t> idx_;
  std::vector<cplx> scratch_;
};

SpectralField quintic_nonlinearity(const SpectralField& u, int N,
                                   const CutoffProfile& profile = CutoffProfile::frequency_default());

double mass(const SpectralField& u);
double hamiltonian(const SpectralField& u);
double truncated_hamiltonian(const SpectralField& u, int N,
                             const CutoffProfile& profile = CutoffProfile::frequency_default());
// (2 pi)^d mean_x |f|^6 computed exactly on a dealiased grid.
double sextic_integral(const SpectralField& f);

}  // namespace qnls
