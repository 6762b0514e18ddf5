#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "qnls/errors.hpp"
#include "qnls/lattice.hpp"

namespace qnls {

using SixTuple = std::array<Mode, 6>;

bool zero_sum(const SixTuple& t);
int omega(const SixTuple& t);
double psi2s(const SixTuple& t, double s);
double lambda_factor(const SixTuple& t);

enum class Branch { Near, Far };

double resonance_weight(const SixTuple& t, double s, double delta0, Branch branch,
                        const CutoffProfile& profile = CutoffProfile::resonance_default());

// Cached |k|^{2s} and resonance-cutoff factors keyed by integer (Omega, lambda^2).
class ResonanceWeights {
 public:
  ResonanceWeights(double s, double delta0, CutoffProfile profile, int max_norm2);

  double s() const { return s_; }
  double delta0() const { return delta0_; }
  // (n2)^s, i.e. |k|^{2s} for |k|^2 = n2.
  double pow_s(int n2) const { return n2 < static_cast<int>(pow_.size()) ? pow_[n2] : compute_pow(n2); }
  // chi(|Omega| / lambda^delta0); 0 for the all-zero tuple.
  double near_factor(int omega, int lambda2) const;
  // (1 - chi(|Omega| / lambda^delta0)) / Omega; 0 at Omega = 0.
  double far_factor(int omega, int lambda2) const;
  // Both factors for a six-tuple given as norms.
  double psi(const std::array<int, 6>& n2) const {
    return pow_s(n2[0]) - pow_s(n2[1]) + pow_s(n2[2]) - pow_s(n2[3]) + pow_s(n2[4]) - pow_s(n2[5]);
  }

 private:
  double compute_pow(int n2) const;
  double compute_near(int omega, int lambda2) const;
  double s_;
  double delta0_;
  CutoffProfile profile_;
  std::vector<double> pow_;
  int om_max_ = 0;
  int l2_max_ = -1;
  std::vector<double> near_;
  std::vector<double> far_;
};

// Calls fn(tuple) for each zero-sum six-tuple over the set: five indices
// are free and the sixth is solved.
void enumerate_six_tuples(const ModeSet& modes, const std::function<void(const SixTuple&)>& fn,
                          Budget* budget = nullptr);
std::uint64_t count_six_tuples(const ModeSet& modes, Budget* budget = nullptr);

// First-generation pairing between an odd and an even slot.
bool inner_pair(const SixTuple& t);

enum class Family { R1, R2 };

// Outer modes k[0..5] (root included) and inner modes (p or q).
struct SecondGenTuple {
  Family family = Family::R1;
  SixTuple k;
  std::array<Mode, 5> inner;

  int root_index() const { return family == Family::R1 ? 0 : 1; }
  bool valid() const;
};

void enumerate_second_gen(const ModeSet& modes, Family family,
                          const std::function<void(const SecondGenTuple&)>& fn, Budget* budget = nullptr);

enum class PairingClass { S11, S12, S21, S22, TypeA, TypeB, TypeC, InnerPairReduction };
const char* to_string(PairingClass c);

// One inner/outer pairing position: inner leaf `inner` equals outer mode `outer`.
struct PairingSlot {
  int inner;
  int outer;
  bool primary;  // the 11/21 kind (multiplicity 9) versus 12/22 (multiplicity 4)
};

// The 13 slots of a family; slot 0 and slot 9 are the literal Lambda sets.
const std::array<PairingSlot, 13>& pairing_slots(Family family);
bool in_slot(const SecondGenTuple& t, const PairingSlot& slot, double theta);
int slot_multiplicity(const SecondGenTuple& t, double theta);

// Pairing tags first (any admissible slot), then Types A, B, C.
PairingClass classify(const SecondGenTuple& t, double theta);
// Type A/B/C rule alone on the ten visible leaves.
PairingClass classify_remainder(const SecondGenTuple& t, double theta);

struct CountResult {
  std::uint64_t count = 0;
  double bound = 0.0;
  double ratio = 0.0;
};

// Number of (k_1..k_n), |k_j| in (N_j/2, N_j], with sum iota_j k_j = K,
// sum quad_j |k_j|^2 = kappa and iota_i k_i + iota_j k_j != 0.
CountResult counting_audit(int n, const std::vector<int>& shells, const std::vector<int>& iota, const Mode& K,
                           long long kappa, const std::vector<int>& quad_signs = {}, Budget* budget = nullptr);

struct FamilyMax {
  std::uint64_t max_count = 0;
  Mode argmax_K;
  long long argmax_kappa = 0;
  double bound = 0.0;
  double ratio = 0.0;
  std::uint64_t tuples = 0;
};

// Max over all (K, kappa) of the count, by exhaustive histogram.
FamilyMax counting_family_max(int dim, const std::vector<int>& shells, const std::vector<int>& iota,
                              Budget* budget = nullptr);
double counting_bound(const std::vector<int>& shells);
std::vector<Mode> dyadic_shell(int N, int dim);

struct PsiBoundResult {
  double max_ratio = 0.0;
  SixTuple argmax;
  std::uint64_t tuples = 0;
};

double psi_bound_ratio(const SixTuple& t, double s);
PsiBoundResult psi_bound_audit(const std::vector<SixTuple>& sample, double s);
// All zero-sum tuples in d=1 with |k_j| <= kmax.
PsiBoundResult psi_bound_audit_exhaustive(int kmax, double s, Budget* budget = nullptr);

}  // namespace qnls
