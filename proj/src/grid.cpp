#include "qnls/grid.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <numbers>

#include "qnls/errors.hpp"
#include "qnls/summation.hpp"

namespace qnls {

namespace {
std::mutex& planner_mutex() {
  static std::mutex mu;
  return mu;
}

double two_pi_pow(int d) { return std::pow(2.0 * std::numbers::pi, d); }
}  // namespace

int good_fft_size(int n) {
  if (n < 1) return 1;
  for (int m = n;; ++m) {
    int r = m;
    for (int p : {2, 3, 5, 7}) {
      while (r % p == 0) r /= p;
    }
    if (r == 1) return m;
  }
}

FftGrid::FftGrid(int dim, int M) : dim_(dim), M_(M) {
  check_dimension(dim);
  if (M < 1) throw ParameterError("grid size must be positive");
  points_ = 1;
  for (int a = 0; a < dim; ++a) points_ *= static_cast<std::size_t>(M);
  data_ = reinterpret_cast<cplx*>(fftw_alloc_complex(points_));
  int n[3] = {M, M, M};
  auto* buf = reinterpret_cast<fftw_complex*>(data_);
  std::lock_guard<std::mutex> lock(planner_mutex());
  plan_fwd_ = fftw_plan_dft(dim, n, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
  plan_bwd_ = fftw_plan_dft(dim, n, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
}

FftGrid::~FftGrid() {
  std::lock_guard<std::mutex> lock(planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(plan_fwd_));
  fftw_destroy_plan(static_cast<fftw_plan>(plan_bwd_));
  fftw_free(data_);
}

std::vector<std::size_t> FftGrid::indices(const ModeSet& modes) const {
  std::vector<std::size_t> out;
  out.reserve(modes.size());
  for (const auto& m : modes) {
    std::size_t idx = 0;
    for (int a = 0; a < dim_; ++a) {
      int c = ((m.k[a] % M_) + M_) % M_;
      idx = idx * static_cast<std::size_t>(M_) + static_cast<std::size_t>(c);
    }
    out.push_back(idx);
  }
  return out;
}

void FftGrid::synthesize(std::span<const cplx> coeffs, std::span<const std::size_t> idx) {
  std::fill(data_, data_ + points_, cplx(0.0, 0.0));
  for (std::size_t i = 0; i < idx.size(); ++i) data_[idx[i]] += coeffs[i];
  fftw_execute(static_cast<fftw_plan>(plan_bwd_));
}

void FftGrid::analyze(std::span<cplx> out, std::span<const std::size_t> idx) {
  fftw_execute(static_cast<fftw_plan>(plan_fwd_));
  const double scale = 1.0 / static_cast<double>(points_);
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = data_[idx[i]] * scale;
}

std::vector<cplx> to_grid(const SpectralField& u, int M) {
  if (M < 2 * u.cutoff() + 1) {
    throw AliasingError("grid size " + std::to_string(M) + " < 2*cutoff+1 = " + std::to_string(2 * u.cutoff() + 1));
  }
  FftGrid g(u.dim(), M);
  auto idx = g.indices(u.modes());
  g.synthesize(u.coeffs(), idx);
  return std::vector<cplx>(g.data(), g.data() + g.points());
}

SpectralField from_grid(std::span<const cplx> grid, int dim, int M, int cutoff) {
  if (M < 2 * cutoff + 1) {
    throw AliasingError("grid size " + std::to_string(M) + " < 2*cutoff+1 = " + std::to_string(2 * cutoff + 1));
  }
  FftGrid g(dim, M);
  if (grid.size() != g.points()) throw ParameterError("grid value count does not match M^d");
  std::copy(grid.begin(), grid.end(), g.data());
  SpectralField u(dim, cutoff);
  auto idx = g.indices(u.modes());
  g.analyze(u.coeffs(), idx);
  return u;
}

namespace {
std::vector<double> band_chi(const ModelParams& params, const ModeSet& band) {
  std::vector<double> chi;
  chi.reserve(band.size());
  for (const auto& m : band) chi.push_back(params.chi_N(m));
  return chi;
}
}  // namespace

QuinticOperator::QuinticOperator(const ModelParams& params, int M)
    : QuinticOperator(params.active_band(), band_chi(params, params.active_band()), M) {}

QuinticOperator::QuinticOperator(ModeSet band, std::vector<double> chi, int M)
    : band_(std::move(band)),
      chi_(std::move(chi)),
      grid_(band_.dim(), M > 0 ? M : good_fft_size(6 * band_.box_radius() + 1)) {
  if (grid_.M() < 6 * band_.box_radius() + 1) {
    throw AliasingError("dealias grid M=" + std::to_string(grid_.M()) + " below 6N+1");
  }
  if (chi_.size() != band_.size()) throw ParameterError("cutoff weights do not match band");
  idx_ = grid_.indices(band_);
  scratch_.resize(band_.size());
}

void QuinticOperator::product(std::span<const cplx> w_band, std::span<cplx> F) {
  grid_.synthesize(w_band, idx_);
  cplx* d = grid_.data();
  for (std::size_t j = 0; j < grid_.points(); ++j) {
    double a = std::norm(d[j]);
    d[j] *= a * a;
  }
  grid_.analyze(F, idx_);
}

void QuinticOperator::apply(std::span<const cplx> u_band, std::span<cplx> out) {
  for (std::size_t i = 0; i < band_.size(); ++i) scratch_[i] = chi_[i] * u_band[i];
  product(scratch_, out);
  for (std::size_t i = 0; i < band_.size(); ++i) out[i] *= chi_[i];
}

SpectralField quintic_nonlinearity(const SpectralField& u, int N, const CutoffProfile& profile) {
  ModelParams p;
  p.dim = u.dim();
  p.N = N;
  p.frequency_cutoff = profile;
  QuinticOperator op(p);
  const ModeSet& band = op.band();
  std::vector<cplx> in(band.size()), out(band.size());
  for (std::size_t i = 0; i < band.size(); ++i) in[i] = u.at(band[i]);
  op.apply(in, out);
  SpectralField res(u.dim(), N);
  for (std::size_t i = 0; i < band.size(); ++i) res.set(band[i], out[i]);
  return res;
}

double mass(const SpectralField& u) {
  CompensatedSum acc;
  for (const auto& c : u.coeffs()) acc += std::norm(c);
  return two_pi_pow(u.dim()) * acc.value();
}

double sextic_integral(const SpectralField& f) {
  int M = good_fft_size(6 * f.cutoff() + 1);
  FftGrid g(f.dim(), M);
  auto idx = g.indices(f.modes());
  g.synthesize(f.coeffs(), idx);
  CompensatedSum acc;
  for (std::size_t j = 0; j < g.points(); ++j) {
    double a = std::norm(g.data()[j]);
    acc += a * a * a;
  }
  return two_pi_pow(f.dim()) * acc.value() / static_cast<double>(g.points());
}

double hamiltonian(const SpectralField& u) {
  CompensatedSum grad;
  for (std::size_t i = 0; i < u.size(); ++i) grad += u.modes()[i].norm2() * std::norm(u[i]);
  return two_pi_pow(u.dim()) * 0.5 * grad.value() + sextic_integral(u) / 6.0;
}

double truncated_hamiltonian(const SpectralField& u, int N, const CutoffProfile& profile) {
  CompensatedSum grad;
  for (std::size_t i = 0; i < u.size(); ++i) grad += u.modes()[i].norm2() * std::norm(u[i]);
  SpectralField su = apply_smooth_truncation(u, N, profile);
  return two_pi_pow(u.dim()) * 0.5 * grad.value() + sextic_integral(su.resized(std::min(u.cutoff(), N))) / 6.0;
}

}  // namespace qnls
