#include "qnls/energetics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numbers>
#include <unordered_map>

#include "qnls/summation.hpp"

namespace qnls {

namespace {
constexpr int kSign[6] = {1, -1, 1, -1, 1, -1};
constexpr int kInnerSign[5] = {1, -1, 1, -1, 1};

inline cplx cj(cplx z) { return std::conj(z); }

double rel(double diff, double scale) { return scale > 0.0 ? diff / scale : diff; }

ModeSet band_for(const ModelParams& p, int store_cutoff) {
  return p.untruncated ? p.active_band(store_cutoff >= 0 ? store_cutoff : p.N) : p.active_band();
}
}  // namespace

double difference_quotient(int a2, int b2, double s) {
  if (a2 == b2) return a2 == 0 ? 0.0 : s * std::pow(static_cast<double>(a2), s - 1.0);
  double pa = a2 == 0 ? 0.0 : std::pow(static_cast<double>(a2), s);
  double pb = b2 == 0 ? 0.0 : std::pow(static_cast<double>(b2), s);
  return (pa - pb) / static_cast<double>(a2 - b2);
}

double mean_quotient(int a2, int b2, double s) {
  if (a2 == 0 && b2 == 0) return 0.0;
  double pa = a2 == 0 ? 0.0 : std::pow(static_cast<double>(a2), s);
  double pb = b2 == 0 ? 0.0 : std::pow(static_cast<double>(b2), s);
  return (pa + pb) / static_cast<double>(a2 + b2);
}

namespace {
// (1 - chi((|a|^2 - |b|^2) / (|a|^2 + |b|^2)^{delta0/2})); 0 when both vanish.
double pair_far(int a2, int b2, double delta0, const CutoffProfile& prof) {
  if (a2 + b2 == 0) return 0.0;
  double x = std::abs(static_cast<double>(a2 - b2)) / std::pow(static_cast<double>(a2 + b2), 0.5 * delta0);
  return 1.0 - prof(x);
}

std::array<int, 6> norms(const SixTuple& t) {
  std::array<int, 6> n2;
  for (int j = 0; j < 6; ++j) n2[j] = t[j].norm2();
  return n2;
}

int lambda2_of(const std::array<int, 6>& n2) { return n2[0] + n2[1] + n2[2] + n2[3] + n2[4] + n2[5]; }
int omega_of(const std::array<int, 6>& n2) { return n2[0] - n2[1] + n2[2] - n2[3] + n2[4] - n2[5]; }
}  // namespace

double corrector_psi(const SixTuple& t, double s, double delta0, const CutoffProfile& profile) {
  if (!zero_sum(t)) throw ConstraintError("six-tuple violates the zero-sum constraint");
  auto n2 = norms(t);
  ResonanceWeights w(s, delta0, profile, 0);
  double a = w.far_factor(omega_of(n2), lambda2_of(n2)) * w.psi(n2);
  return a - difference_quotient(n2[0], n2[1], s) * pair_far(n2[0], n2[1], delta0, profile);
}

double corrector_psi_tilde(const SixTuple& t, double s) {
  if (!zero_sum(t)) throw ConstraintError("six-tuple violates the zero-sum constraint");
  auto n2 = norms(t);
  int om = omega_of(n2);
  if (om == 0) throw ConstraintError("psi tilde is undefined at Omega = 0");
  ResonanceWeights w(s, 0.5, CutoffProfile::resonance_default(), 0);
  return w.psi(n2) / om - mean_quotient(n2[0], n2[2], s);
}

double corrector_psi_tilde_cutoff(const SixTuple& t, double s, double delta0, const CutoffProfile& profile) {
  if (!zero_sum(t)) throw ConstraintError("six-tuple violates the zero-sum constraint");
  auto n2 = norms(t);
  ResonanceWeights w(s, delta0, profile, 0);
  return w.far_factor(omega_of(n2), lambda2_of(n2)) * w.psi(n2) - mean_quotient(n2[0], n2[2], s);
}

Energetics::Energetics(const ModelParams& params, int store_cutoff)
    : params_(params),
      band_(band_for(params, store_cutoff)),
      weights_(params.s, params.delta0, params.resonance_cutoff, band_.max_norm2()) {
  params_.validate();
  for (const auto& m : band_) {
    chi_.push_back(params_.untruncated ? 1.0 : params_.chi_N(m));
    n2_.push_back(m.norm2());
  }
  quintic_ = std::make_unique<QuinticOperator>(band_, chi_);
}

std::vector<cplx> Energetics::weighted(const SpectralField& u) const {
  if (u.dim() != params_.dim) throw ParameterError("field dimension does not match model.dim");
  std::vector<cplx> w(band_.size());
  for (std::size_t i = 0; i < band_.size(); ++i) w[i] = chi_[i] * u.at(band_[i]);
  return w;
}

double Energetics::far_weight(const std::array<int, 6>& n2, int lambda2) const {
  return weights_.far_factor(omega_of(n2), lambda2) * weights_.psi(n2);
}

namespace {
// Calls fn(idx) for all zero-sum six-tuples of band indices.
template <class Fn>
void for_each_six(const ModeSet& band, Budget* budget, Fn&& fn) {
  const std::size_t n = band.size();
  std::array<std::size_t, 6> idx{};
  for (idx[0] = 0; idx[0] < n; ++idx[0]) {
    if (budget) budget->charge(static_cast<unsigned long long>(n) * n * n * n);
    const Mode& a = band[idx[0]];
    for (idx[1] = 0; idx[1] < n; ++idx[1]) {
      Mode ab = a - band[idx[1]];
      for (idx[2] = 0; idx[2] < n; ++idx[2]) {
        Mode abc = ab + band[idx[2]];
        for (idx[3] = 0; idx[3] < n; ++idx[3]) {
          Mode abcd = abc - band[idx[3]];
          for (idx[4] = 0; idx[4] < n; ++idx[4]) {
            auto f = band.index_of(abcd + band[idx[4]]);
            if (f < 0) continue;
            idx[5] = static_cast<std::size_t>(f);
            fn(idx);
          }
        }
      }
    }
  }
}
}  // namespace

double Energetics::correction(const std::vector<cplx>& w, Budget* budget) const {
  CompensatedSum acc;
  for_each_six(band_, budget, [&](const std::array<std::size_t, 6>& i) {
    std::array<int, 6> n2{n2_[i[0]], n2_[i[1]], n2_[i[2]], n2_[i[3]], n2_[i[4]], n2_[i[5]]};
    int om = omega_of(n2);
    if (om == 0) return;
    double a = weights_.far_factor(om, lambda2_of(n2));
    if (a == 0.0) return;
    a *= weights_.psi(n2);
    cplx P = w[i[0]] * cj(w[i[1]]) * w[i[2]] * cj(w[i[3]]) * w[i[4]] * cj(w[i[5]]);
    acc += a * P.real();
  });
  return acc.value() / 6.0;
}

double Energetics::modified_energy(const SpectralField& u, Budget* budget) const {
  return 0.5 * triple_norm_sq(u, params_.s) + correction(weighted(u), budget);
}

Energetics::FirstPass Energetics::first_pass(const std::vector<cplx>& w, Budget* budget) {
  std::vector<cplx> F(band_.size());
  quintic_->product(w, F);
  CompensatedComplexSum r0, r0p, r1, r2;
  CompensatedSum rs;
  FirstPass out;
  for_each_six(band_, budget, [&](const std::array<std::size_t, 6>& i) {
    ++out.tuples;
    std::array<int, 6> n2{n2_[i[0]], n2_[i[1]], n2_[i[2]], n2_[i[3]], n2_[i[4]], n2_[i[5]]};
    int om = omega_of(n2);
    int l2 = lambda2_of(n2);
    double psi = weights_.psi(n2);
    if (psi == 0.0) return;
    double nearw = weights_.near_factor(om, l2) * psi;
    double farw = weights_.far_factor(om, l2) * psi;
    cplx tail = w[i[2]] * cj(w[i[3]]) * w[i[4]] * cj(w[i[5]]);
    if (nearw != 0.0) {
      cplx P = w[i[0]] * cj(w[i[1]]) * tail;
      r0 += nearw * P;
      bool paired = false;
      for (int a = 0; a < 6 && !paired; a += 2)
        for (int b = 1; b < 6; b += 2)
          if (i[a] == i[b]) {
            paired = true;
            break;
          }
      if (paired) r0p += nearw * P;
    }
    if (farw != 0.0) {
      cplx P = w[i[0]] * cj(w[i[1]]) * tail;
      rs += farw * P.real();
      r1 += farw * chi_[i[0]] * chi_[i[0]] * F[i[0]] * cj(w[i[1]]) * tail;
      r2 += farw * w[i[0]] * chi_[i[1]] * chi_[i[1]] * cj(F[i[1]]) * tail;
    }
  });
  out.R0 = r0.value();
  out.R0_inner_paired = r0p.value();
  out.R1 = r1.value();
  out.R2 = r2.value();
  out.R_sN = rs.value() / 6.0;
  return out;
}

namespace {
// Visits every second-generation tuple of band indices: inner[5], outer[6].
template <class Fn>
void for_each_second_gen(const ModeSet& band, Family family, Budget* budget, Fn&& fn) {
  const std::size_t n = band.size();
  const int root = family == Family::R1 ? 0 : 1;
  const std::array<int, 4> free_outer =
      family == Family::R1 ? std::array<int, 4>{1, 2, 3, 4} : std::array<int, 4>{0, 2, 3, 4};
  std::array<std::size_t, 5> in{};
  std::array<std::size_t, 6> out{};
  const unsigned long long block = static_cast<unsigned long long>(n) * n * n * n;
  for (in[0] = 0; in[0] < n; ++in[0])
    for (in[1] = 0; in[1] < n; ++in[1])
      for (in[2] = 0; in[2] < n; ++in[2])
        for (in[3] = 0; in[3] < n; ++in[3])
          for (in[4] = 0; in[4] < n; ++in[4]) {
            if (budget) budget->charge(block);
            Mode r = band[in[0]] - band[in[1]] + band[in[2]] - band[in[3]] + band[in[4]];
            auto ri = band.index_of(r);
            if (ri < 0) continue;
            out[root] = static_cast<std::size_t>(ri);
            std::array<std::size_t, 4> f{};
            for (f[0] = 0; f[0] < n; ++f[0])
              for (f[1] = 0; f[1] < n; ++f[1])
                for (f[2] = 0; f[2] < n; ++f[2])
                  for (f[3] = 0; f[3] < n; ++f[3]) {
                    for (int j = 0; j < 4; ++j) out[free_outer[j]] = f[j];
                    Mode k6 = band[out[0]] - band[out[1]] + band[out[2]] - band[out[3]] + band[out[4]];
                    auto i6 = band.index_of(k6);
                    if (i6 < 0) continue;
                    out[5] = static_cast<std::size_t>(i6);
                    fn(in, out);
                  }
          }
}
}  // namespace

cplx Energetics::R1_direct(const std::vector<cplx>& w, Budget* budget) const {
  CompensatedComplexSum acc;
  for_each_second_gen(band_, Family::R1, budget, [&](const auto& in, const auto& out) {
    std::array<int, 6> n2{n2_[out[0]], n2_[out[1]], n2_[out[2]], n2_[out[3]], n2_[out[4]], n2_[out[5]]};
    double a = far_weight(n2, lambda2_of(n2));
    if (a == 0.0) return;
    cplx v = w[in[0]] * cj(w[in[1]]) * w[in[2]] * cj(w[in[3]]) * w[in[4]];
    v *= cj(w[out[1]]) * w[out[2]] * cj(w[out[3]]) * w[out[4]] * cj(w[out[5]]);
    acc += a * chi_[out[0]] * chi_[out[0]] * v;
  });
  return acc.value();
}

cplx Energetics::R2_direct(const std::vector<cplx>& w, Budget* budget) const {
  CompensatedComplexSum acc;
  for_each_second_gen(band_, Family::R2, budget, [&](const auto& in, const auto& out) {
    std::array<int, 6> n2{n2_[out[0]], n2_[out[1]], n2_[out[2]], n2_[out[3]], n2_[out[4]], n2_[out[5]]};
    double a = far_weight(n2, lambda2_of(n2));
    if (a == 0.0) return;
    cplx v = cj(w[in[0]]) * w[in[1]] * cj(w[in[2]]) * w[in[3]] * cj(w[in[4]]);
    v *= w[out[0]] * w[out[2]] * cj(w[out[3]]) * w[out[4]] * cj(w[out[5]]);
    acc += a * chi_[out[1]] * chi_[out[1]] * v;
  });
  return acc.value();
}

Energetics::Classified Energetics::classified(const std::vector<cplx>& w, Family family, Budget* budget) const {
  Classified res;
  const bool r1 = family == Family::R1;
  const auto& slots = pairing_slots(family);
  std::map<std::string, CompensatedComplexSum> by_tag;
  CompensatedComplexSum total, ta, tb, tc, ov;
  std::array<CompensatedComplexSum, 13> slot_sums;
  SecondGenTuple t;
  t.family = family;
  const int root = t.root_index();
  const double theta = params_.theta;
  for_each_second_gen(band_, family, budget, [&](const auto& in, const auto& out) {
    ++res.tuples;
    std::array<int, 6> n2{n2_[out[0]], n2_[out[1]], n2_[out[2]], n2_[out[3]], n2_[out[4]], n2_[out[5]]};
    double a = far_weight(n2, lambda2_of(n2));
    cplx f;
    if (r1) {
      cplx v = w[in[0]] * cj(w[in[1]]) * w[in[2]] * cj(w[in[3]]) * w[in[4]];
      v *= cj(w[out[1]]) * w[out[2]] * cj(w[out[3]]) * w[out[4]] * cj(w[out[5]]);
      f = a * chi_[out[0]] * chi_[out[0]] * v;
    } else {
      cplx v = cj(w[in[0]]) * w[in[1]] * cj(w[in[2]]) * w[in[3]] * cj(w[in[4]]);
      v *= w[out[0]] * w[out[2]] * cj(w[out[3]]) * w[out[4]] * cj(w[out[5]]);
      f = a * chi_[out[1]] * chi_[out[1]] * v;
    }
    for (int j = 0; j < 5; ++j) t.inner[j] = band_[in[j]];
    for (int j = 0; j < 6; ++j) t.k[j] = band_[out[j]];
    (void)root;
    total += f;
    int m = 0;
    for (std::size_t s = 0; s < slots.size(); ++s) {
      if (in_slot(t, slots[s], theta)) {
        ++m;
        ++res.slot_counts[s];
        slot_sums[s] += f;
      }
    }
    PairingClass tag = classify(t, theta);
    std::string name = to_string(tag);
    by_tag[name] += f;
    ++res.counts[name];
    if (m == 0) {
      switch (tag) {
        case PairingClass::TypeA: ta += f; break;
        case PairingClass::TypeB: tb += f; break;
        default: tc += f; break;
      }
    } else if (m >= 2) {
      ++res.overlap_tuples;
      ov += static_cast<double>(1 - m) * f;
    }
  });
  res.total = total.value();
  for (auto& [k, v] : by_tag) res.by_tag[k] = v.value();
  res.remainder_typeA = ta.value();
  res.remainder_typeB = tb.value();
  res.remainder_typeC = tc.value();
  res.overlap = ov.value();
  for (std::size_t s = 0; s < 13; ++s) res.slot_sums[s] = slot_sums[s].value();
  return res;
}

Energetics::PairingSum Energetics::pairing_sum(const std::vector<cplx>& w, Family family, int slot_index,
                                               PairingWeight weight, PairingCoef coef) const {
  const auto& slot = pairing_slots(family)[static_cast<std::size_t>(slot_index)];
  const int root = family == Family::R1 ? 0 : 1;
  const int paired = slot.outer;
  std::array<int, 4> oth_out{};
  {
    int n = 0;
    for (int j = 0; j < 6; ++j)
      if (j != root && j != paired) oth_out[n++] = j;
  }
  std::array<int, 4> oth_in{};
  {
    int n = 0;
    for (int j = 0; j < 5; ++j)
      if (j != slot.inner) oth_in[n++] = j;
  }
  // Outer positions 0,2,4 enter unconjugated; inner conjugation depends on the family.
  auto outer_factor = [&](int pos, std::size_t i) { return pos % 2 == 0 ? w[i] : cj(w[i]); };
  auto inner_factor = [&](int pos, std::size_t i) {
    bool plain = (kInnerSign[pos] > 0) == (family == Family::R1);
    return plain ? w[i] : cj(w[i]);
  };

  // Band indices sorted by norm for early exit.
  std::vector<std::size_t> by_norm(band_.size());
  for (std::size_t i = 0; i < by_norm.size(); ++i) by_norm[i] = i;
  std::stable_sort(by_norm.begin(), by_norm.end(), [&](std::size_t a, std::size_t b) { return n2_[a] < n2_[b]; });
  std::vector<double> nrm(band_.size());
  for (std::size_t i = 0; i < nrm.size(); ++i) nrm[i] = std::sqrt(static_cast<double>(n2_[i]));

  const double theta = params_.theta;
  const double s = params_.s;
  const double d0 = params_.delta0;
  const auto& prof = params_.resonance_cutoff;
  auto tpow = [&](std::size_t i) { return n2_[i] == 0 ? 0.0 : std::pow(nrm[i], theta); };

  CompensatedComplexSum total;
  CompensatedSum mass;
  PairingSum res;
  const std::size_t n = band_.size();

  for (std::size_t ri = 0; ri < n; ++ri) {
    for (std::size_t pi = 0; pi < n; ++pi) {
      double c = 0.0;
      double c_root = chi_[ri] * chi_[ri] * std::norm(w[pi]);
      double c_swap = chi_[pi] * chi_[pi] * std::norm(w[ri]);
      switch (coef) {
        case PairingCoef::Root: c = c_root; break;
        case PairingCoef::Swapped: c = c_swap; break;
        case PairingCoef::Difference: c = c_root - c_swap; break;
      }
      const double B = tpow(ri) + tpow(pi);
      std::size_t nsmall = 0;
      while (nsmall < n && nrm[by_norm[nsmall]] <= B + 1e-9) ++nsmall;

      // Outer: sum_{o in oth_out} sgn_o k_o = -(sgn_root k_root + sgn_paired k_paired).
      Mode target_out = Mode(band_.dim()) - (kSign[root] > 0 ? band_[ri] : -band_[ri]) -
                        (kSign[paired] > 0 ? band_[pi] : -band_[pi]);
      // Inner: sum_{q in oth_in} eps_q q = root - eps_paired * paired.
      Mode target_in = band_[ri] - (kInnerSign[slot.inner] > 0 ? band_[pi] : -band_[pi]);

      CompensatedComplexSum outer_sum;
      double outer_abs = 0.0;
      std::array<std::size_t, 6> six{};
      six[root] = ri;
      six[paired] = pi;
      for (std::size_t a = 0; a < nsmall; ++a) {
        std::size_t ia = by_norm[a];
        double sa = nrm[ia];
        Mode ma = kSign[oth_out[0]] > 0 ? band_[ia] : -band_[ia];
        for (std::size_t b = 0; b < nsmall; ++b) {
          std::size_t ib = by_norm[b];
          double sb = sa + nrm[ib];
          if (sb > B + 1e-9) break;
          Mode mb = ma + (kSign[oth_out[1]] > 0 ? band_[ib] : -band_[ib]);
          for (std::size_t cc = 0; cc < nsmall; ++cc) {
            std::size_t ic = by_norm[cc];
            double sc = sb + nrm[ic];
            if (sc > B + 1e-9) break;
            Mode mc = mb + (kSign[oth_out[2]] > 0 ? band_[ic] : -band_[ic]);
            Mode md = target_out - mc;
            if (kSign[oth_out[3]] < 0) md = -md;
            auto id = band_.index_of(md);
            if (id < 0) continue;
            if (sc + nrm[static_cast<std::size_t>(id)] > B + 1e-9) continue;
            six[oth_out[0]] = ia;
            six[oth_out[1]] = ib;
            six[oth_out[2]] = ic;
            six[oth_out[3]] = static_cast<std::size_t>(id);
            std::array<int, 6> n2{n2_[six[0]], n2_[six[1]], n2_[six[2]], n2_[six[3]], n2_[six[4]], n2_[six[5]]};
            double wt = 0.0;
            switch (weight) {
              case PairingWeight::Resonant: wt = far_weight(n2, lambda2_of(n2)); break;
              case PairingWeight::Psi:
                wt = far_weight(n2, lambda2_of(n2)) -
                     difference_quotient(n2[0], n2[1], s) * pair_far(n2[0], n2[1], d0, prof);
                break;
              case PairingWeight::PsiTildeCutoff:
                wt = far_weight(n2, lambda2_of(n2)) - mean_quotient(n2[0], n2[2], s);
                break;
              case PairingWeight::Main1:
                wt = difference_quotient(n2[0], n2[1], s) * pair_far(n2[0], n2[1], d0, prof);
                break;
              case PairingWeight::Main2: wt = mean_quotient(n2[0], n2[2], s); break;
            }
            cplx prod = outer_factor(oth_out[0], ia) * outer_factor(oth_out[1], ib) * outer_factor(oth_out[2], ic) *
                        outer_factor(oth_out[3], static_cast<std::size_t>(id));
            outer_sum += wt * prod;
            outer_abs += std::abs(wt) * std::abs(prod);
          }
        }
      }

      CompensatedComplexSum inner_sum;
      double inner_abs = 0.0;
      std::uint64_t inner_terms = 0;
      for (std::size_t a = 0; a < nsmall; ++a) {
        std::size_t ia = by_norm[a];
        double sa = nrm[ia];
        Mode ma = kInnerSign[oth_in[0]] > 0 ? band_[ia] : -band_[ia];
        for (std::size_t b = 0; b < nsmall; ++b) {
          std::size_t ib = by_norm[b];
          double sb = sa + nrm[ib];
          if (sb > B + 1e-9) break;
          Mode mb = ma + (kInnerSign[oth_in[1]] > 0 ? band_[ib] : -band_[ib]);
          for (std::size_t cc = 0; cc < nsmall; ++cc) {
            std::size_t ic = by_norm[cc];
            double sc = sb + nrm[ic];
            if (sc > B + 1e-9) break;
            Mode mc = mb + (kInnerSign[oth_in[2]] > 0 ? band_[ic] : -band_[ic]);
            Mode md = target_in - mc;
            if (kInnerSign[oth_in[3]] < 0) md = -md;
            auto id = band_.index_of(md);
            if (id < 0) continue;
            if (sc + nrm[static_cast<std::size_t>(id)] > B + 1e-9) continue;
            cplx prod = inner_factor(oth_in[0], ia) * inner_factor(oth_in[1], ib) * inner_factor(oth_in[2], ic) *
                        inner_factor(oth_in[3], static_cast<std::size_t>(id));
            inner_sum += prod;
            inner_abs += std::abs(prod);
            ++inner_terms;
          }
        }
      }
      if (inner_terms == 0) continue;
      res.terms += inner_terms;
      total += c * outer_sum.value() * inner_sum.value();
      mass += std::abs(c) * outer_abs * inner_abs;
    }
  }
  res.value = total.value();
  res.abs_mass = mass.value();
  return res;
}

cplx Energetics::S11(const std::vector<cplx>& w) const {
  return pairing_sum(w, Family::R1, 0, PairingWeight::Resonant, PairingCoef::Root).value;
}
cplx Energetics::S12(const std::vector<cplx>& w) const {
  return pairing_sum(w, Family::R1, 9, PairingWeight::Resonant, PairingCoef::Root).value;
}
cplx Energetics::S21(const std::vector<cplx>& w) const {
  return pairing_sum(w, Family::R2, 0, PairingWeight::Resonant, PairingCoef::Root).value;
}
cplx Energetics::S22(const std::vector<cplx>& w) const {
  return pairing_sum(w, Family::R2, 9, PairingWeight::Resonant, PairingCoef::Root).value;
}
cplx Energetics::S21_relabelled(const std::vector<cplx>& w) const {
  return pairing_sum(w, Family::R1, 0, PairingWeight::Resonant, PairingCoef::Swapped).value;
}
cplx Energetics::J(const std::vector<cplx>& w) const {
  return pairing_sum(w, Family::R1, 0, PairingWeight::Psi, PairingCoef::Difference).value;
}
cplx Energetics::I(const std::vector<cplx>& w) const {
  return pairing_sum(w, Family::R1, 9, PairingWeight::PsiTildeCutoff, PairingCoef::Root).value;
}
Energetics::PairingSum Energetics::main1(const std::vector<cplx>& w) const {
  return pairing_sum(w, Family::R1, 0, PairingWeight::Main1, PairingCoef::Difference);
}
Energetics::PairingSum Energetics::main2(const std::vector<cplx>& w) const {
  return pairing_sum(w, Family::R1, 9, PairingWeight::Main2, PairingCoef::Root);
}

double correction_R_sN(const SpectralField& u, const ModelParams& params, Budget* budget) {
  Energetics e(params, u.cutoff());
  return e.correction(e.weighted(u), budget);
}

double modified_energy(const SpectralField& u, const ModelParams& params, Budget* budget) {
  Energetics e(params, u.cutoff());
  return e.modified_energy(u, budget);
}

namespace {
nlohmann::json cjson(cplx z) { return {{"re", z.real()}, {"im", z.imag()}}; }
}  // namespace

nlohmann::json EnergyReport::to_json() const {
  nlohmann::json j;
  j["params"] = params;
  j["E_sN"] = E_sN;
  j["R_sN"] = R_sN;
  j["Q_sN"] = Q_sN;
  j["direct"] = direct;
  nlohmann::json p = nlohmann::json::object();
  for (const auto& [k, v] : parts) p[k] = cjson(v);
  j["parts"] = p;
  j["residuals"] = residuals;
  j["counts"] = counts;
  j["wall_seconds"] = wall_seconds;
  return j;
}

EnergyReport q_total(const SpectralField& u, const ModelParams& params, const ReportOptions& opts) {
  auto t0 = std::chrono::steady_clock::now();
  params.validate();
  Energetics e(params, u.cutoff());
  Budget budget(opts.budget);
  auto w = e.weighted(u);
  auto fp = e.first_pass(w, &budget);

  EnergyReport rep;
  rep.params = params;
  rep.direct = opts.direct;
  rep.R_sN = fp.R_sN;
  rep.E_sN = 0.5 * triple_norm_sq(u, params.s) + fp.R_sN;
  rep.Q_sN = (-fp.R0 / 6.0 + fp.R1 / 2.0 - fp.R2 / 2.0).imag();
  rep.counts["six_tuples"] = fp.tuples;

  cplx s11 = e.S11(w), s12 = e.S12(w), s21 = e.S21(w), s22 = e.S22(w);
  cplx s21r = e.S21_relabelled(w);
  cplx J = e.J(w), I = e.I(w);
  auto m1 = e.main1(w);
  auto m2 = e.main2(w);
  cplx r13 = fp.R1 - 9.0 * s11 - 4.0 * s12;
  cplx r23 = fp.R2 - 9.0 * s21 - 4.0 * s22;

  auto& P = rep.parts;
  P["R0"] = fp.R0;
  P["R0_inner_paired"] = fp.R0_inner_paired;
  P["R0_unpaired"] = fp.R0 - fp.R0_inner_paired;
  P["R1"] = fp.R1;
  P["R2"] = fp.R2;
  P["S11"] = s11;
  P["S12"] = s12;
  P["S21"] = s21;
  P["S22"] = s22;
  P["S21_relabelled"] = s21r;
  P["R13"] = r13;
  P["R23"] = r23;
  P["J"] = J;
  P["I"] = I;
  P["main1"] = m1.value;
  P["main2"] = m2.value;

  auto& Rz = rep.residuals;
  auto mx = [](std::initializer_list<double> v) { return std::max(v); };
  Rz["S22_conj_S12"] = rel(std::abs(s22 - std::conj(s12)), mx({std::abs(s12), std::abs(s22)}));
  Rz["S21_relabel"] = rel(std::abs(s21 - s21r), mx({std::abs(s21), std::abs(s21r)}));
  Rz["ImS11_minus_ImS21_vs_ImJ"] =
      rel(std::abs((s11 - s21).imag() - J.imag()), mx({std::abs(s11), std::abs(s21), std::abs(J)}));
  Rz["ImS12_vs_ImI"] = rel(std::abs(s12.imag() - I.imag()), mx({std::abs(s12), std::abs(I)}));
  Rz["main1_imag_over_mass"] = rel(std::abs(m1.value.imag()), m1.abs_mass);
  Rz["main2_imag_over_mass"] = rel(std::abs(m2.value.imag()), m2.abs_mass);

  if (opts.direct) {
    cplx r1d = e.R1_direct(w, &budget);
    cplx r2d = e.R2_direct(w, &budget);
    auto c1 = e.classified(w, Family::R1, &budget);
    auto c2 = e.classified(w, Family::R2, &budget);
    P["R1_direct"] = r1d;
    P["R2_direct"] = r2d;
    P["R13_typeA"] = c1.remainder_typeA;
    P["R13_typeB"] = c1.remainder_typeB;
    P["R13_typeC"] = c1.remainder_typeC;
    P["R13_overlap"] = c1.overlap;
    P["R13_direct"] = c1.remainder_direct();
    P["R23_typeA"] = c2.remainder_typeA;
    P["R23_typeB"] = c2.remainder_typeB;
    P["R23_typeC"] = c2.remainder_typeC;
    P["R23_overlap"] = c2.overlap;
    P["R23_direct"] = c2.remainder_direct();
    for (const auto& [k, v] : c1.by_tag) P["R1_tag_" + k] = v;
    for (const auto& [k, v] : c2.by_tag) P["R2_tag_" + k] = v;

    double q_direct = (-fp.R0 / 6.0 + r1d / 2.0 - r2d / 2.0).imag();
    Rz["Q_fast_vs_direct"] = rel(std::abs(rep.Q_sN - q_direct), std::abs(q_direct));
    Rz["R1_dual_path"] = rel(std::abs(fp.R1 - r1d), std::abs(r1d));
    Rz["R2_dual_path"] = rel(std::abs(fp.R2 - r2d), std::abs(r2d));
    double sc1 = mx({std::abs(r1d), 9.0 * std::abs(s11), 4.0 * std::abs(s12), std::abs(c1.remainder_direct())});
    double sc2 = mx({std::abs(r2d), 9.0 * std::abs(s21), 4.0 * std::abs(s22), std::abs(c2.remainder_direct())});
    Rz["R1_decomposition"] = rel(std::abs(r1d - 9.0 * s11 - 4.0 * s12 - c1.remainder_direct()), sc1);
    Rz["R2_decomposition"] = rel(std::abs(r2d - 9.0 * s21 - 4.0 * s22 - c2.remainder_direct()), sc2);

    cplx prim1 = 0.0, sec1 = 0.0, prim2 = 0.0, sec2 = 0.0;
    std::uint64_t pc1 = 0, scn1 = 0, pc2 = 0, scn2 = 0;
    for (std::size_t s = 0; s < 13; ++s) {
      bool prim = s < 9;
      (prim ? prim1 : sec1) += c1.slot_sums[s];
      (prim ? prim2 : sec2) += c2.slot_sums[s];
      (prim ? pc1 : scn1) += c1.slot_counts[s];
      (prim ? pc2 : scn2) += c2.slot_counts[s];
    }
    Rz["R1_slot_sum_vs_9S11"] = rel(std::abs(prim1 - 9.0 * s11), 9.0 * std::abs(s11));
    Rz["R1_slot_sum_vs_4S12"] = rel(std::abs(sec1 - 4.0 * s12), 4.0 * std::abs(s12));
    Rz["R2_slot_sum_vs_9S21"] = rel(std::abs(prim2 - 9.0 * s21), 9.0 * std::abs(s21));
    Rz["R2_slot_sum_vs_4S22"] = rel(std::abs(sec2 - 4.0 * s22), 4.0 * std::abs(s22));
    auto& C = rep.counts;
    C["R1_tuples"] = c1.tuples;
    C["R2_tuples"] = c2.tuples;
    C["R1_overlap_tuples"] = c1.overlap_tuples;
    C["R2_overlap_tuples"] = c2.overlap_tuples;
    C["R1_slot_terms_primary"] = pc1;
    C["R1_slot_terms_secondary"] = scn1;
    C["R1_Lambda11_terms"] = c1.slot_counts[0];
    C["R1_Lambda12_terms"] = c1.slot_counts[9];
    C["R2_slot_terms_primary"] = pc2;
    C["R2_slot_terms_secondary"] = scn2;
    C["R2_Lambda21_terms"] = c2.slot_counts[0];
    C["R2_Lambda22_terms"] = c2.slot_counts[9];
    for (const auto& [k, v] : c1.counts) C["R1_tag_" + k] = v;
    for (const auto& [k, v] : c2.counts) C["R2_tag_" + k] = v;
  }
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

namespace {
double theta_pow_int(int x, double theta) { return x == 0 ? 0.0 : std::pow(std::abs(static_cast<double>(x)), theta); }
}  // namespace

namespace {
CorrectorAudit run_corrector_audit(int kmax, const ModelParams& params, bool tilde) {
  if (params.dim != 1) throw ParameterError("corrector audits scan d = 1");
  const double s = params.s, d0 = params.delta0, th = params.theta;
  CorrectorAudit out;
  int nbins = 0;
  while ((1 << nbins) < kmax) ++nbins;
  std::vector<double> bins(static_cast<std::size_t>(nbins) + 1, 0.0);
  auto bin_of = [](int k) {
    int b = 0;
    while ((1 << b) < k) ++b;
    return b;
  };
  SixTuple t;
  for (int j = 0; j < 6; ++j) t[j] = Mode{0};
  for (int k1 = -kmax; k1 <= kmax; ++k1) {
    for (int kp = -kmax; kp <= kmax; ++kp) {
      double B = theta_pow_int(k1, th) + theta_pow_int(kp, th);
      int L = static_cast<int>(std::floor(B + 1e-9));
      // tilde: paired k3 with k2+k4-k5+k6 = k1+k3; otherwise paired k2 with k3-k4+k5-k6 = k2-k1.
      int target = tilde ? k1 + kp : kp - k1;
      if (std::abs(target) > L) continue;
      for (int a = -L; a <= L; ++a)
        for (int b = -(L - std::abs(a)); b <= L - std::abs(a); ++b)
          for (int c = -(L - std::abs(a) - std::abs(b)); c <= L - std::abs(a) - std::abs(b); ++c) {
            int d;
            std::array<int, 6> k;
            if (!tilde) {
              d = a - b + c - target;  // k6 = k3 - k4 + k5 - target
              k = {k1, kp, a, b, c, d};
            } else {
              d = target - a - b + c;  // k6 = k1 + k3 - k2 - k4 + k5
              k = {k1, a, kp, b, c, d};
            }
            double small = std::abs(a) + std::abs(b) + std::abs(c) + std::abs(d);
            if (small > B + 1e-9) continue;
            ++out.tuples;
            for (int j = 0; j < 6; ++j) t[j].k[0] = k[j];
            int om = k[0] * k[0] - k[1] * k[1] + k[2] * k[2] - k[3] * k[3] + k[4] * k[4] - k[5] * k[5];
            bool all_small_zero = a == 0 && b == 0 && c == 0 && d == 0;
            double v;
            if (tilde) {
              if (om == 0) {
                ++out.omega_zero;
                if (all_small_zero) {
                  ++out.vanishing_checked;
                  out.vanishing_max_abs = std::max(out.vanishing_max_abs,
                                                   std::abs(corrector_psi_tilde_cutoff(t, s, d0, params.resonance_cutoff)));
                }
                continue;
              }
              v = corrector_psi_tilde(t, s);
            } else {
              v = corrector_psi(t, s, d0, params.resonance_cutoff);
            }
            if (all_small_zero) {
              ++out.vanishing_checked;
              double scale = tilde ? mean_quotient(k1 * k1, kp * kp, s) : 1.0;
              out.vanishing_max_abs = std::max(out.vanishing_max_abs, std::abs(v) / std::max(scale, 1.0));
            }
            std::array<int, 6> mags;
            for (int j = 0; j < 6; ++j) mags[j] = std::abs(k[j]);
            std::sort(mags.begin(), mags.end(), std::greater<>());
            double k1m = mags[0];
            if (!tilde && v != 0.0 && std::abs(om) < std::pow(k1m, d0)) ++out.nonzero_near_band;
            if (om == 0 || mags[2] == 0) continue;
            double ratio = std::abs(v) * std::abs(om) / (std::pow(k1m, 2.0 * s - 2.0) * mags[2] * mags[2]);
            if (ratio > out.max_ratio) {
              out.max_ratio = ratio;
              out.argmax = t;
            }
            if (std::abs(om) >= std::pow(k1m, d0)) out.max_ratio_far = std::max(out.max_ratio_far, ratio);
            if (2 * mags[0] > kmax) out.max_ratio_upper_half = std::max(out.max_ratio_upper_half, ratio);
            int bi = std::min(bin_of(mags[0]), nbins);
            bins[static_cast<std::size_t>(bi)] = std::max(bins[static_cast<std::size_t>(bi)], ratio);
          }
    }
  }
  for (int b = 0; b <= nbins; ++b) out.dyadic_max.emplace_back(1 << b, bins[static_cast<std::size_t>(b)]);
  return out;
}
}  // namespace

CorrectorAudit audit_psi_corrector(int kmax, const ModelParams& params) {
  return run_corrector_audit(kmax, params, false);
}

CorrectorAudit audit_psi_tilde(int kmax, const ModelParams& params) { return run_corrector_audit(kmax, params, true); }

}  // namespace qnls

namespace qnls {

namespace {
constexpr std::size_t kDenseTripleLimit = 4'000'000;
}

FastCorrection::FastCorrection(const ModelParams& params, int store_cutoff)
    : params_(params), band_(band_for(params, store_cutoff)) {
  params_.validate();
  ResonanceWeights rw(params_.s, params_.delta0, params_.resonance_cutoff, band_.max_norm2());
  for (const auto& m : band_) {
    chi_.push_back(params_.untruncated ? 1.0 : params_.chi_N(m));
    n2_.push_back(m.norm2());
    pw_.push_back(rw.pow_s(m.norm2()));
  }
  const int r = band_.box_radius();
  omega_max_ = std::max(1, 3 * band_.max_norm2());
  L_ = 2 * omega_max_ + 1;
  hilbert_.assign(static_cast<std::size_t>(L_), 0.0);
  for (int j = 0; j < L_; ++j) {
    double t = 2.0 * std::numbers::pi * j / L_;
    double acc = 0.0;
    for (int n = 1; n <= omega_max_; ++n) acc += std::sin(n * t) / n;
    hilbert_[static_cast<std::size_t>(j)] = acc;
  }
  const int M = good_fft_size(6 * r + 1);
  gridW_ = std::make_unique<FftGrid>(params_.dim, M);
  gridA_ = std::make_unique<FftGrid>(params_.dim, M);
  idx_ = gridW_->indices(band_);
  wt_.resize(band_.size());
  at_.resize(band_.size());

  triple_box_ = ModeSet::ball(3.0 * std::sqrt(static_cast<double>(band_.max_norm2())), params_.dim);
  qmax_ = 3 * band_.max_norm2();
  halfwidth_ = static_cast<int>(std::ceil(std::pow(2.0 * qmax_, 0.5 * params_.delta0))) + 1;
  const int h = halfwidth_;
  band_weight_.assign(static_cast<std::size_t>(qmax_ + 1) * (2 * h + 1), 0.0);
  for (int q = 0; q <= qmax_; ++q)
    for (int d = -h; d <= h; ++d) {
      int qp = q - d;
      if (d == 0 || qp < 0 || qp > qmax_) continue;
      double x = std::abs(d) / std::pow(static_cast<double>(q + qp), 0.5 * params_.delta0);
      band_weight_[static_cast<std::size_t>(q) * (2 * h + 1) + (d + h)] = params_.resonance_cutoff(x) / d;
    }
}

double FastCorrection::operator()(const SpectralField& u) {
  std::vector<cplx> w(band_.size());
  for (std::size_t i = 0; i < band_.size(); ++i) w[i] = chi_[i] * u.at(band_[i]);
  return evaluate_weighted(w);
}

double FastCorrection::evaluate_weighted(const std::vector<cplx>& w) {
  // Full Hilbert part: sum_{Omega != 0} psi P / Omega on the time grid.
  CompensatedSum H;
  for (int j = 0; j < L_; ++j) {
    double eta = hilbert_[static_cast<std::size_t>(j)];
    if (std::abs(eta) < 1e-300) continue;
    for (std::size_t i = 0; i < band_.size(); ++i) {
      // Phases n t mod 2 pi computed exactly in integers.
      long long ph = (static_cast<long long>(n2_[i]) * j) % L_;
      cplx e = std::polar(1.0, 2.0 * std::numbers::pi * static_cast<double>(ph) / L_);
      wt_[i] = w[i] * e;
      at_[i] = pw_[i] * wt_[i];
    }
    gridW_->synthesize(wt_, idx_);
    gridA_->synthesize(at_, idx_);
    const cplx* W = gridW_->data();
    const cplx* A = gridA_->data();
    CompensatedSum g;
    for (std::size_t x = 0; x < gridW_->points(); ++x) {
      double m = std::norm(W[x]);
      g += m * m * (A[x] * std::conj(W[x])).imag();
    }
    H += eta * g.value() / static_cast<double>(gridW_->points());
  }
  const double full = 12.0 / L_ * H.value();

  // Near-resonant band over triple aggregates (K, q).
  const std::size_t nq = static_cast<std::size_t>(qmax_ + 1);
  const std::size_t nK = triple_box_.size();
  const std::size_t n = band_.size();
  const bool dense = nK * nq <= kDenseTripleLimit;
  std::unordered_map<std::uint64_t, std::pair<cplx, cplx>> sparse;
  if (dense) {
    V_.assign(nK * nq, 0.0);
    U_.assign(nK * nq, 0.0);
  }
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      Mode kab = band_[a] + band_[b];
      cplx wab = w[a] * w[b];
      double pab = pw_[a] + pw_[b];
      int qab = n2_[a] + n2_[b];
      for (std::size_t c = 0; c < n; ++c) {
        auto K = triple_box_.index_of(kab + band_[c]);
        std::size_t q = static_cast<std::size_t>(qab + n2_[c]);
        cplx v = wab * w[c];
        cplx uu = (pab + pw_[c]) * v;
        if (dense) {
          std::size_t at = static_cast<std::size_t>(K) * nq + q;
          V_[at] += v;
          U_[at] += uu;
        } else {
          auto& e = sparse[static_cast<std::uint64_t>(K) * nq + q];
          e.first += v;
          e.second += uu;
        }
      }
    }
  }
  const int h = halfwidth_;
  CompensatedComplexSum band;
  auto pair_term = [&](std::size_t q, std::size_t qp, cplx Vq, cplx Uq, cplx Vp, cplx Up) {
    int d = static_cast<int>(q) - static_cast<int>(qp);
    double bw = band_weight_[q * static_cast<std::size_t>(2 * h + 1) + static_cast<std::size_t>(d + h)];
    if (bw != 0.0) band += bw * (Uq * std::conj(Vp) - Vq * std::conj(Up));
  };
  if (dense) {
    for (std::size_t K = 0; K < nK; ++K) {
      const cplx* V = &V_[K * nq];
      const cplx* U = &U_[K * nq];
      for (std::size_t q = 0; q < nq; ++q) {
        if (V[q] == cplx(0.0) && U[q] == cplx(0.0)) continue;
        std::size_t lo = q > static_cast<std::size_t>(h) ? q - h : 0;
        std::size_t hi = std::min(nq - 1, q + h);
        for (std::size_t qp = lo; qp <= hi; ++qp) pair_term(q, qp, V[q], U[q], V[qp], U[qp]);
      }
    }
  } else {
    for (const auto& [key, e] : sparse) {
      std::uint64_t K = key / nq;
      std::size_t q = key % nq;
      std::size_t lo = q > static_cast<std::size_t>(h) ? q - h : 0;
      std::size_t hi = std::min(nq - 1, q + h);
      for (std::size_t qp = lo; qp <= hi; ++qp) {
        auto it = sparse.find(K * nq + qp);
        if (it == sparse.end()) continue;
        pair_term(q, qp, e.first, e.second, it->second.first, it->second.second);
      }
    }
  }
  return (full - band.value().real()) / 6.0;
}

}  // namespace qnls
