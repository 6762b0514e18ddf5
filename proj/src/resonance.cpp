#include "qnls/resonance.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace qnls {

namespace {
constexpr int kSign[6] = {1, -1, 1, -1, 1, -1};

void check_zero_sum(const SixTuple& t) {
  if (!zero_sum(t)) throw ConstraintError("six-tuple violates k1-k2+k3-k4+k5-k6=0");
}
}  // namespace

bool zero_sum(const SixTuple& t) {
  for (int a = 0; a < 3; ++a) {
    int acc = 0;
    for (int j = 0; j < 6; ++j) acc += kSign[j] * t[j].k[a];
    if (acc != 0) return false;
  }
  return true;
}

int omega(const SixTuple& t) {
  check_zero_sum(t);
  int acc = 0;
  for (int j = 0; j < 6; ++j) acc += kSign[j] * t[j].norm2();
  return acc;
}

double psi2s(const SixTuple& t, double s) {
  check_zero_sum(t);
  double acc = 0.0;
  for (int j = 0; j < 6; ++j) acc += kSign[j] * std::pow(static_cast<double>(t[j].norm2()), s);
  return acc;
}

double lambda_factor(const SixTuple& t) {
  int acc = 0;
  for (const auto& m : t) acc += m.norm2();
  return std::sqrt(static_cast<double>(acc));
}

double resonance_weight(const SixTuple& t, double s, double delta0, Branch branch, const CutoffProfile& profile) {
  int om = omega(t);
  int l2 = 0;
  for (const auto& m : t) l2 += m.norm2();
  ResonanceWeights w(s, delta0, profile, 0);
  double psi = psi2s(t, s);
  return branch == Branch::Near ? w.near_factor(om, l2) * psi : w.far_factor(om, l2) * psi;
}

ResonanceWeights::ResonanceWeights(double s, double delta0, CutoffProfile profile, int max_norm2)
    : s_(s), delta0_(delta0), profile_(profile) {
  pow_.resize(static_cast<std::size_t>(std::max(0, max_norm2)) + 1);
  for (std::size_t n = 0; n < pow_.size(); ++n) pow_[n] = compute_pow(static_cast<int>(n));
  const long long l2 = 6LL * max_norm2;
  const long long om = 3LL * max_norm2;
  if ((l2 + 1) * (2 * om + 1) <= 4000000LL && max_norm2 > 0) {
    l2_max_ = static_cast<int>(l2);
    om_max_ = static_cast<int>(om);
    const std::size_t width = static_cast<std::size_t>(2 * om_max_ + 1);
    near_.resize(static_cast<std::size_t>(l2_max_ + 1) * width);
    far_.resize(near_.size());
    for (int L = 0; L <= l2_max_; ++L) {
      for (int o = -om_max_; o <= om_max_; ++o) {
        std::size_t at = static_cast<std::size_t>(L) * width + static_cast<std::size_t>(o + om_max_);
        double nf = compute_near(o, L);
        near_[at] = nf;
        far_[at] = o == 0 ? 0.0 : (1.0 - nf) / o;
      }
    }
  }
}

double ResonanceWeights::compute_pow(int n2) const {
  return n2 == 0 ? 0.0 : std::pow(static_cast<double>(n2), s_);
}

double ResonanceWeights::compute_near(int om, int lambda2) const {
  if (lambda2 == 0) return 0.0;
  double lam_d = std::pow(static_cast<double>(lambda2), 0.5 * delta0_);
  return profile_(std::abs(static_cast<double>(om)) / lam_d);
}

double ResonanceWeights::near_factor(int om, int lambda2) const {
  if (lambda2 <= l2_max_ && std::abs(om) <= om_max_) {
    return near_[static_cast<std::size_t>(lambda2) * static_cast<std::size_t>(2 * om_max_ + 1) +
                 static_cast<std::size_t>(om + om_max_)];
  }
  return compute_near(om, lambda2);
}

double ResonanceWeights::far_factor(int om, int lambda2) const {
  if (om == 0) return 0.0;
  if (lambda2 <= l2_max_ && std::abs(om) <= om_max_) {
    return far_[static_cast<std::size_t>(lambda2) * static_cast<std::size_t>(2 * om_max_ + 1) +
                static_cast<std::size_t>(om + om_max_)];
  }
  return (1.0 - compute_near(om, lambda2)) / om;
}

void enumerate_six_tuples(const ModeSet& modes, const std::function<void(const SixTuple&)>& fn, Budget* budget) {
  const std::size_t n = modes.size();
  SixTuple t;
  for (std::size_t a = 0; a < n; ++a) {
    t[0] = modes[a];
    if (budget) budget->charge(static_cast<unsigned long long>(n) * n * n * n);
    for (std::size_t b = 0; b < n; ++b) {
      t[1] = modes[b];
      for (std::size_t c = 0; c < n; ++c) {
        t[2] = modes[c];
        for (std::size_t d = 0; d < n; ++d) {
          t[3] = modes[d];
          for (std::size_t e = 0; e < n; ++e) {
            t[4] = modes[e];
            Mode k6 = t[0] - t[1] + t[2] - t[3] + t[4];
            if (!modes.contains(k6)) continue;
            t[5] = k6;
            fn(t);
          }
        }
      }
    }
  }
}

std::uint64_t count_six_tuples(const ModeSet& modes, Budget* budget) {
  std::uint64_t c = 0;
  enumerate_six_tuples(modes, [&](const SixTuple&) { ++c; }, budget);
  return c;
}

bool inner_pair(const SixTuple& t) {
  for (int i = 0; i < 6; i += 2)
    for (int j = 1; j < 6; j += 2)
      if (t[i] == t[j]) return true;
  return false;
}

bool SecondGenTuple::valid() const {
  if (!zero_sum(k)) return false;
  Mode acc = inner[0] - inner[1] + inner[2] - inner[3] + inner[4];
  return acc == k[root_index()];
}

void enumerate_second_gen(const ModeSet& modes, Family family, const std::function<void(const SecondGenTuple&)>& fn,
                          Budget* budget) {
  const std::size_t n = modes.size();
  SecondGenTuple t;
  t.family = family;
  // Free outer slots besides the root and k6.
  const std::array<int, 4> free_outer = family == Family::R1 ? std::array<int, 4>{1, 2, 3, 4}
                                                              : std::array<int, 4>{0, 2, 3, 4};
  const int root = t.root_index();
  std::array<std::size_t, 9> idx{};
  const unsigned long long inner_block = static_cast<unsigned long long>(n) * n * n * n;
  for (;;) {
    if (idx[5] == 0 && idx[6] == 0 && idx[7] == 0 && idx[8] == 0 && budget) budget->charge(inner_block);
    for (int j = 0; j < 5; ++j) t.inner[j] = modes[idx[j]];
    Mode r = t.inner[0] - t.inner[1] + t.inner[2] - t.inner[3] + t.inner[4];
    if (modes.contains(r)) {
      t.k[root] = r;
      for (int j = 0; j < 4; ++j) t.k[free_outer[j]] = modes[idx[5 + j]];
      Mode k6 = t.k[0] - t.k[1] + t.k[2] - t.k[3] + t.k[4];
      if (modes.contains(k6)) {
        t.k[5] = k6;
        fn(t);
      }
    }
    int pos = 8;
    while (pos >= 0 && ++idx[pos] == n) idx[pos--] = 0;
    if (pos < 0) break;
  }
}

const char* to_string(PairingClass c) {
  switch (c) {
    case PairingClass::S11: return "S11";
    case PairingClass::S12: return "S12";
    case PairingClass::S21: return "S21";
    case PairingClass::S22: return "S22";
    case PairingClass::TypeA: return "TypeA";
    case PairingClass::TypeB: return "TypeB";
    case PairingClass::TypeC: return "TypeC";
    case PairingClass::InnerPairReduction: return "InnerPairReduction";
  }
  return "?";
}

namespace {
std::array<PairingSlot, 13> make_slots(Family f) {
  std::array<PairingSlot, 13> out{};
  int n = 0;
  const std::array<int, 3> prim_outer = f == Family::R1 ? std::array<int, 3>{1, 3, 5} : std::array<int, 3>{0, 2, 4};
  const std::array<int, 2> sec_outer = f == Family::R1 ? std::array<int, 2>{2, 4} : std::array<int, 2>{3, 5};
  for (int i : {0, 2, 4})
    for (int j : prim_outer) out[n++] = {i, j, true};
  for (int i : {1, 3})
    for (int j : sec_outer) out[n++] = {i, j, false};
  return out;
}

double theta_pow(const Mode& m, double theta) { return m.is_zero() ? 0.0 : std::pow(m.norm(), theta); }
}  // namespace

const std::array<PairingSlot, 13>& pairing_slots(Family family) {
  static const auto r1 = make_slots(Family::R1);
  static const auto r2 = make_slots(Family::R2);
  return family == Family::R1 ? r1 : r2;
}

bool small_within(double sum, double bound) { return sum <= bound + 1e-9; }

bool in_slot(const SecondGenTuple& t, const PairingSlot& slot, double theta) {
  if (!(t.inner[slot.inner] == t.k[slot.outer])) return false;
  const int root = t.root_index();
  const double B = theta_pow(t.k[root], theta) + theta_pow(t.k[slot.outer], theta);
  double so = 0.0;
  for (int j = 0; j < 6; ++j)
    if (j != root && j != slot.outer) so += t.k[j].norm();
  if (!small_within(so, B)) return false;
  double si = 0.0;
  for (int j = 0; j < 5; ++j)
    if (j != slot.inner) si += t.inner[j].norm();
  return small_within(si, B);
}

int slot_multiplicity(const SecondGenTuple& t, double theta) {
  int m = 0;
  for (const auto& sl : pairing_slots(t.family)) m += in_slot(t, sl, theta) ? 1 : 0;
  return m;
}

PairingClass classify_remainder(const SecondGenTuple& t, double theta) {
  struct Leaf {
    Mode m;
    bool inner;
    int pos;
  };
  std::array<Leaf, 10> leaves;
  int n = 0;
  for (int j = 0; j < 5; ++j) leaves[n++] = {t.inner[j], true, j};
  for (int j = 0; j < 6; ++j)
    if (j != t.root_index()) leaves[n++] = {t.k[j], false, j};
  // Descending magnitude; ties by lexicographic mode (descending), inner first, position.
  auto before = [](const Leaf& a, const Leaf& b) {
    if (a.m.norm2() != b.m.norm2()) return a.m.norm2() > b.m.norm2();
    if (a.m != b.m) return a.m > b.m;
    if (a.inner != b.inner) return a.inner;
    return a.pos < b.pos;
  };
  std::sort(leaves.begin(), leaves.end(), before);
  double rest = 0.0;
  for (int j = 2; j < 10; ++j) rest += leaves[j].m.norm();
  double B = theta_pow(leaves[0].m, theta) + theta_pow(leaves[1].m, theta);
  if (rest > B + 1e-9) return PairingClass::TypeA;
  return leaves[0].inner == leaves[1].inner ? PairingClass::TypeB : PairingClass::TypeC;
}

PairingClass classify(const SecondGenTuple& t, double theta) {
  const auto& slots = pairing_slots(t.family);
  const bool r1 = t.family == Family::R1;
  for (const auto& sl : slots) {
    if (sl.primary && in_slot(t, sl, theta)) return r1 ? PairingClass::S11 : PairingClass::S21;
  }
  for (const auto& sl : slots) {
    if (!sl.primary && in_slot(t, sl, theta)) return r1 ? PairingClass::S12 : PairingClass::S22;
  }
  return classify_remainder(t, theta);
}

std::vector<Mode> dyadic_shell(int N, int dim) {
  if (N < 1) throw ParameterError("dyadic shell level must be >= 1");
  std::vector<Mode> out;
  for (const auto& m : modes_within(N, dim)) {
    if (4 * m.norm2() > N * N) out.push_back(m);
  }
  return out;
}

double counting_bound(const std::vector<int>& shells) {
  std::vector<int> s = shells;
  std::sort(s.begin(), s.end(), std::greater<>());
  double b = static_cast<double>(s[1]) * s[1];
  for (std::size_t j = 2; j < s.size(); ++j) b *= static_cast<double>(s[j]) * s[j] * s[j];
  return b;
}

namespace {
void check_counting_args(int n, const std::vector<int>& shells, const std::vector<int>& iota) {
  if (n < 2 || n > 6) throw ParameterError("counting audit needs 2 <= n <= 6");
  if (static_cast<int>(shells.size()) != n || static_cast<int>(iota.size()) != n) {
    throw ParameterError("counting audit: shells and signs must have length n");
  }
  for (int s : iota)
    if (s != 1 && s != -1) throw ParameterError("counting audit: signs must be +1 or -1");
}

bool pair_ok(const Mode& a, int ia, const Mode& b, int ib) {
  for (int x = 0; x < 3; ++x)
    if (ia * a.k[x] + ib * b.k[x] != 0) return true;
  return false;
}
}  // namespace

CountResult counting_audit(int n, const std::vector<int>& shells, const std::vector<int>& iota, const Mode& K,
                           long long kappa, const std::vector<int>& quad_signs, Budget* budget) {
  check_counting_args(n, shells, iota);
  const std::vector<int>& quad = quad_signs.empty() ? iota : quad_signs;
  if (static_cast<int>(quad.size()) != n) throw ParameterError("counting audit: quadratic signs must have length n");
  const int dim = K.dim;
  std::vector<std::vector<Mode>> sets;
  for (int N : shells) sets.push_back(dyadic_shell(N, dim));
  std::vector<Mode> cur(n, Mode(dim));
  CountResult res;
  // Recursive scan; the last vector is solved from the linear constraint.
  std::function<void(int, Mode, long long)> rec = [&](int j, Mode sum, long long q) {
    if (j == n - 1) {
      if (budget) budget->charge(1);
      Mode last = K - sum;
      if (iota[j] < 0) last = -last;
      int n2 = last.norm2();
      if (!(4 * n2 > shells[j] * shells[j] && n2 <= shells[j] * shells[j])) return;
      if (q + static_cast<long long>(quad[j]) * n2 != kappa) return;
      cur[j] = last;
      for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b)
          if (!pair_ok(cur[a], iota[a], cur[b], iota[b])) return;
      ++res.count;
      return;
    }
    for (const auto& m : sets[j]) {
      cur[j] = m;
      Mode next = iota[j] > 0 ? sum + m : sum - m;
      rec(j + 1, next, q + static_cast<long long>(quad[j]) * m.norm2());
    }
  };
  rec(0, Mode(dim), 0);
  res.bound = counting_bound(shells);
  res.ratio = static_cast<double>(res.count) / res.bound;
  return res;
}

FamilyMax counting_family_max(int dim, const std::vector<int>& shells_in, const std::vector<int>& iota_in,
                              Budget* budget) {
  const int n = static_cast<int>(shells_in.size());
  check_counting_args(n, shells_in, iota_in);
  check_dimension(dim);
  // Put the largest shell last: it is bucketed, the rest are enumerated.
  std::vector<int> order(n);
  for (int j = 0; j < n; ++j) order[j] = j;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return shells_in[a] < shells_in[b]; });
  std::vector<int> shells(n), iota(n);
  for (int j = 0; j < n; ++j) {
    shells[j] = shells_in[order[j]];
    iota[j] = iota_in[order[j]];
  }
  std::vector<std::vector<Mode>> sets;
  double total = 1.0;
  for (int N : shells) {
    sets.push_back(dyadic_shell(N, dim));
    total *= static_cast<double>(sets.back().size());
  }
  if (budget) {
    if (total > 1.8e19) throw BudgetExceeded("counting family too large");
    budget->charge(static_cast<unsigned long long>(total));
  }

  struct Partial {
    std::array<int, 3> sum;
    long long q;
    std::array<Mode, 5> members;
  };
  std::vector<Partial> partials;
  {
    Partial p{{0, 0, 0}, 0, {}};
    std::function<void(int)> rec = [&](int j) {
      if (j == n - 1) {
        partials.push_back(p);
        return;
      }
      for (const auto& m : sets[j]) {
        bool ok = true;
        for (int a = 0; a < j && ok; ++a) ok = pair_ok(p.members[a], iota[a], m, iota[j]);
        if (!ok) continue;
        Partial saved = p;
        p.members[j] = m;
        for (int x = 0; x < 3; ++x) p.sum[x] += iota[j] * m.k[x];
        p.q += iota[j] * static_cast<long long>(m.norm2());
        rec(j + 1);
        p = saved;
      }
    };
    rec(0);
  }

  int R = 0;
  long long Q = 0;
  for (int N : shells) {
    R += N;
    Q += static_cast<long long>(N) * N;
  }
  const int W = 2 * R + 1;
  const int wy = dim >= 2 ? W : 1;
  const int wz = dim >= 3 ? W : 1;
  const std::size_t kw = static_cast<std::size_t>(2 * Q + 1);
  std::vector<std::uint32_t> hist(static_cast<std::size_t>(wy) * wz * kw);

  const auto& last = sets[n - 1];
  const int il = iota[n - 1];
  std::map<int, std::vector<Mode>> bucket;
  for (const auto& m : last) bucket[m.k[0]].push_back(m);

  FamilyMax best;
  best.argmax_K = Mode(dim);
  best.tuples = static_cast<std::uint64_t>(total);
  for (int Kx = -R; Kx <= R; ++Kx) {
    std::fill(hist.begin(), hist.end(), 0u);
    for (const auto& p : partials) {
      int x = il * (Kx - p.sum[0]);
      auto it = bucket.find(x);
      if (it == bucket.end()) continue;
      for (const auto& m : it->second) {
        bool ok = true;
        for (int a = 0; a < n - 1 && ok; ++a) ok = pair_ok(p.members[a], iota[a], m, il);
        if (!ok) continue;
        int ky = dim >= 2 ? p.sum[1] + il * m.k[1] + R : 0;
        int kz = dim >= 3 ? p.sum[2] + il * m.k[2] + R : 0;
        long long kap = p.q + il * static_cast<long long>(m.norm2());
        std::size_t at = (static_cast<std::size_t>(ky) * wz + kz) * kw + static_cast<std::size_t>(kap + Q);
        std::uint32_t c = ++hist[at];
        if (c > best.max_count) {
          best.max_count = c;
          best.argmax_K = Mode(dim);
          best.argmax_K.k = {Kx, dim >= 2 ? ky - R : 0, dim >= 3 ? kz - R : 0};
          best.argmax_kappa = kap;
        }
      }
    }
  }
  best.bound = counting_bound(shells);
  best.ratio = static_cast<double>(best.max_count) / best.bound;
  return best;
}

double psi_bound_ratio(const SixTuple& t, double s) {
  std::array<int, 6> n2;
  for (int j = 0; j < 6; ++j) n2[j] = t[j].norm2();
  double psi = psi2s(t, s);
  std::array<int, 6> sorted = n2;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  if (sorted[0] == 0) return 0.0;
  double den = std::pow(static_cast<double>(sorted[0]), s - 1.0) * (std::abs(omega(t)) + sorted[2]);
  if (den == 0.0) return 0.0;
  return std::abs(psi) / den;
}

PsiBoundResult psi_bound_audit(const std::vector<SixTuple>& sample, double s) {
  PsiBoundResult r;
  for (const auto& t : sample) {
    double q = psi_bound_ratio(t, s);
    ++r.tuples;
    if (q > r.max_ratio) {
      r.max_ratio = q;
      r.argmax = t;
    }
  }
  return r;
}

PsiBoundResult psi_bound_audit_exhaustive(int kmax, double s, Budget* budget) {
  const int w = 2 * kmax + 1;
  std::vector<double> pw(static_cast<std::size_t>(kmax) * kmax + 1), pw1(pw.size());
  for (std::size_t n = 0; n < pw.size(); ++n) {
    pw[n] = n == 0 ? 0.0 : std::pow(static_cast<double>(n), s);
    pw1[n] = n == 0 ? 0.0 : std::pow(static_cast<double>(n), s - 1.0);
  }
  PsiBoundResult r;
  std::array<int, 6> best{};
  for (int a = -kmax; a <= kmax; ++a) {
    if (budget) budget->charge(static_cast<unsigned long long>(w) * w * w * w);
    for (int b = -kmax; b <= kmax; ++b)
      for (int c = -kmax; c <= kmax; ++c)
        for (int d = -kmax; d <= kmax; ++d)
          for (int e = -kmax; e <= kmax; ++e) {
            int f = a - b + c - d + e;
            if (f < -kmax || f > kmax) continue;
            ++r.tuples;
            std::array<int, 6> n2{a * a, b * b, c * c, d * d, e * e, f * f};
            int om = n2[0] - n2[1] + n2[2] - n2[3] + n2[4] - n2[5];
            double psi = pw[n2[0]] - pw[n2[1]] + pw[n2[2]] - pw[n2[3]] + pw[n2[4]] - pw[n2[5]];
            std::array<int, 6> srt = n2;
            std::partial_sort(srt.begin(), srt.begin() + 3, srt.end(), std::greater<>());
            if (srt[0] == 0) continue;
            double den = pw1[srt[0]] * (std::abs(om) + srt[2]);
            if (den == 0.0) continue;
            double q = std::abs(psi) / den;
            if (q > r.max_ratio) {
              r.max_ratio = q;
              best = {a, b, c, d, e, f};
            }
          }
  }
  for (int j = 0; j < 6; ++j) r.argmax[j] = Mode{best[j]};
  return r;
}

}  // namespace qnls
