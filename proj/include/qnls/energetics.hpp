#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "qnls/errors.hpp"
#include "qnls/grid.hpp"
#include "qnls/params.hpp"
#include "qnls/resonance.hpp"
#include "qnls/spectral_field.hpp"

namespace qnls {

// Evaluation context for one parameter pack: the active band, cached
// weights and the dealiased quintic product.
class Energetics {
 public:
  explicit Energetics(const ModelParams& params, int store_cutoff = -1);

  const ModelParams& params() const { return params_; }
  const ModeSet& band() const { return band_; }
  std::span<const double> chi() const { return chi_; }
  const ResonanceWeights& weights() const { return weights_; }

  // w_k = chi_N(k) u_k on the band.
  std::vector<cplx> weighted(const SpectralField& u) const;

  double correction(const std::vector<cplx>& w, Budget* budget = nullptr) const;
  // E = 1/2 |||u|||^2 + R_{s,N}(u).
  double modified_energy(const SpectralField& u, Budget* budget = nullptr) const;

  struct FirstPass {
    cplx R0;
    cplx R0_inner_paired;  // part of R0 from six-tuples with an odd/even coincidence
    cplx R1;
    cplx R2;
    double R_sN = 0.0;
    std::uint64_t tuples = 0;
  };
  // R0, R1, R2 (accelerated: the inner generation through the grid product) and R_sN.
  FirstPass first_pass(const std::vector<cplx>& w, Budget* budget = nullptr);

  cplx R1_direct(const std::vector<cplx>& w, Budget* budget = nullptr) const;
  cplx R2_direct(const std::vector<cplx>& w, Budget* budget = nullptr) const;

  struct Classified {
    cplx total;
    std::map<std::string, cplx> by_tag;       // S11/S12 (or S21/S22), TypeA, TypeB, TypeC
    std::map<std::string, std::uint64_t> counts;
    cplx remainder_typeA, remainder_typeB, remainder_typeC;
    cplx overlap;  // sum over tuples in >= 2 slots of (1 - m) f
    std::array<std::uint64_t, 13> slot_counts{};
    std::array<cplx, 13> slot_sums{};
    std::uint64_t tuples = 0;
    std::uint64_t overlap_tuples = 0;
    cplx remainder_direct() const { return remainder_typeA + remainder_typeB + remainder_typeC + overlap; }
  };
  // Full 9-index enumeration with per-tuple classification.
  Classified classified(const std::vector<cplx>& w, Family family, Budget* budget = nullptr) const;

  enum class PairingWeight { Resonant, Psi, PsiTildeCutoff, Main1, Main2 };
  enum class PairingCoef { Root, Swapped, Difference };

  struct PairingSum {
    cplx value;
    double abs_mass = 0.0;
    std::uint64_t terms = 0;
  };
  // Sum over the Lambda set of one slot, factorised per (root, paired).
  PairingSum pairing_sum(const std::vector<cplx>& w, Family family, int slot, PairingWeight weight,
                         PairingCoef coef) const;

  cplx S11(const std::vector<cplx>& w) const;
  cplx S12(const std::vector<cplx>& w) const;
  cplx S21(const std::vector<cplx>& w) const;
  cplx S22(const std::vector<cplx>& w) const;
  // S21 through the Lambda_{1,1} enumeration with weight chi(k2)^2 |w_{k1}|^2.
  cplx S21_relabelled(const std::vector<cplx>& w) const;
  cplx J(const std::vector<cplx>& w) const;
  cplx I(const std::vector<cplx>& w) const;
  PairingSum main1(const std::vector<cplx>& w) const;
  PairingSum main2(const std::vector<cplx>& w) const;

  // Outer-weight helpers on a six-tuple given by norms.
  double far_weight(const std::array<int, 6>& n2, int lambda2) const;

 private:
  ModelParams params_;
  ModeSet band_;
  std::vector<double> chi_;
  std::vector<int> n2_;
  ResonanceWeights weights_;
  std::unique_ptr<QuinticOperator> quintic_;
};

// Difference quotient (|a|^{2s} - |b|^{2s}) / (|a|^2 - |b|^2) with the derivative limit.
double difference_quotient(int a2, int b2, double s);
// (|a|^{2s} + |b|^{2s}) / (|a|^2 + |b|^2); 0 at a = b = 0.
double mean_quotient(int a2, int b2, double s);

double corrector_psi(const SixTuple& t, double s, double delta0,
                     const CutoffProfile& profile = CutoffProfile::resonance_default());
// psi/Omega - M2(k1,k3); ConstraintError at Omega = 0.
double corrector_psi_tilde(const SixTuple& t, double s);
// Far weight minus M2(k1,k3): defined everywhere.
double corrector_psi_tilde_cutoff(const SixTuple& t, double s, double delta0,
                                  const CutoffProfile& profile = CutoffProfile::resonance_default());

struct CorrectorAudit {
  double max_ratio = 0.0;             // over all tuples with Omega != 0 and k_(3) != 0
  double max_ratio_far = 0.0;         // restricted to |Omega| >= |k_(1)|^delta0
  double max_ratio_upper_half = 0.0;  // restricted to |k_(1)| > kmax/2
  std::uint64_t tuples = 0;
  std::uint64_t nonzero_near_band = 0;  // Psi != 0 with |Omega| < |k_(1)|^delta0
  std::uint64_t omega_zero = 0;
  std::uint64_t vanishing_checked = 0;
  double vanishing_max_abs = 0.0;  // max |value| over tuples with all small leaves zero
  SixTuple argmax;
  std::vector<std::pair<int, double>> dyadic_max;  // (upper edge of |k_(1)| bin, max ratio)
};

// Exhaustive d=1 scans of the outer six-tuples of Lambda_{1,1} (Psi) and Lambda_{1,2} (Psi tilde).
CorrectorAudit audit_psi_corrector(int kmax, const ModelParams& params);
CorrectorAudit audit_psi_tilde(int kmax, const ModelParams& params);

struct EnergyReport {
  nlohmann::json params;
  double E_sN = 0.0;
  double R_sN = 0.0;
  double Q_sN = 0.0;
  std::map<std::string, cplx> parts;
  std::map<std::string, double> residuals;
  std::map<std::string, std::uint64_t> counts;
  double wall_seconds = 0.0;
  bool direct = false;

  nlohmann::json to_json() const;
};

struct ReportOptions {
  bool direct = true;  // include 9-index enumerations and classified sums
  unsigned long long budget = Budget::kDefault;
};

EnergyReport q_total(const SpectralField& u, const ModelParams& params, const ReportOptions& opts = {});
double correction_R_sN(const SpectralField& u, const ModelParams& params, Budget* budget = nullptr);
double modified_energy(const SpectralField& u, const ModelParams& params, Budget* budget = nullptr);

// R_{s,N} through a time-grid Hilbert sum plus an exact near-resonant band
// correction over triple aggregates; matches the direct sum to rounding.
class FastCorrection {
 public:
  explicit FastCorrection(const ModelParams& params, int store_cutoff = -1);
  double operator()(const SpectralField& u);
  double evaluate_weighted(const std::vector<cplx>& w);
  const ModeSet& band() const { return band_; }
  int time_samples() const { return L_; }

 private:
  ModelParams params_;
  ModeSet band_;
  std::vector<double> chi_;
  std::vector<int> n2_;
  std::vector<double> pw_;
  int omega_max_ = 0;
  int L_ = 0;
  std::vector<double> hilbert_;  // sum_{n=1}^{Omega_max} sin(n t_j) / n
  std::unique_ptr<FftGrid> gridW_;
  std::unique_ptr<FftGrid> gridA_;
  std::vector<std::size_t> idx_;
  std::vector<cplx> wt_, at_;
  ModeSet triple_box_;
  int qmax_ = 0;
  int halfwidth_ = 0;
  std::vector<double> band_weight_;  // chi(|d| / (q+q')^{delta0/2}) / d at [q * (2h+1) + d + h]
  std::vector<cplx> V_, U_;
};

}  // namespace qnls
