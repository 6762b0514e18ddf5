#pragma once

#include <complex>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include <json.hpp>

#include "qnls/lattice.hpp"

namespace qnls {

using cplx = std::complex<double>;

// Shared, cached ModeSet::ball(cutoff, d).
std::shared_ptr<const ModeSet> shared_ball(int cutoff, int d);

// Fourier coefficients on {|k| <= cutoff}; reads outside return zero.
class SpectralField {
 public:
  SpectralField() : SpectralField(1, 0) {}
  SpectralField(int dim, int cutoff);

  int dim() const { return modes_->dim(); }
  int cutoff() const { return cutoff_; }
  const ModeSet& modes() const { return *modes_; }
  std::size_t size() const { return coeffs_.size(); }

  std::span<cplx> coeffs() { return coeffs_; }
  std::span<const cplx> coeffs() const { return coeffs_; }
  cplx& operator[](std::size_t i) { return coeffs_[i]; }
  const cplx& operator[](std::size_t i) const { return coeffs_[i]; }

  cplx at(const Mode& k) const;
  // Throws ParameterError outside the stored ball.
  void set(const Mode& k, cplx v);

  // Copy onto a different storage level (drops or zero-fills).
  SpectralField resized(int new_cutoff) const;
  bool all_finite() const;

 private:
  int cutoff_;
  std::shared_ptr<const ModeSet> modes_;
  std::vector<cplx> coeffs_;
};

SpectralField single_mode(int dim, int cutoff, const Mode& k, cplx amplitude);

SpectralField apply_smooth_truncation(const SpectralField& u, double N,
                                      const CutoffProfile& profile = CutoffProfile::frequency_default());
SpectralField apply_sharp_truncation(const SpectralField& u, double N);

double sobolev_norm_sq(const SpectralField& u, double sigma);
double triple_norm_sq(const SpectralField& u, double s);

nlohmann::json to_json(const SpectralField& u);
SpectralField field_from_json(const nlohmann::json& j);
void write_binary(const SpectralField& u, std::ostream& os);
SpectralField read_binary(std::istream& is);
void save_field(const SpectralField& u, const std::string& path);
// Dispatches on extension: .json or binary.
SpectralField load_field(const std::string& path);

}  // namespace qnls
