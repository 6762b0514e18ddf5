#include "qnls/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "qnls/energetics.hpp"
#include "qnls/errors.hpp"
#include "qnls/parallel.hpp"
#include "qnls/rng.hpp"

namespace qnls {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// std:: distributions on top of a Philox stream.
class PhiloxEngine {
 public:
  using result_type = std::uint32_t;
  PhiloxEngine(std::uint64_t seed, std::uint64_t stream, std::uint32_t lane = 0) : s_(seed, stream, lane) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return 0xffffffffu; }
  result_type operator()() {
    if (pos_ == 4) {
      buf_ = s_.next_block();
      pos_ = 0;
    }
    return buf_[static_cast<std::size_t>(pos_++)];
  }

 private:
  Stream s_;
  std::array<std::uint32_t, 4> buf_{};
  int pos_ = 4;
};

double log_sum_exp(const std::vector<double>& a) {
  double m = kNegInf;
  for (double x : a) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double x : a) acc += std::exp(x - m);
  return m + std::log(acc);
}

// Runs fn(begin, end) on contiguous chunks so each worker can own its own state.
template <class Fn>
void parallel_chunks(std::size_t n, int threads, Fn&& fn) {
  std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads))));
  parallel_for(workers, static_cast<int>(workers), [&](std::size_t w) {
    std::size_t b = n * w / workers, e = n * (w + 1) / workers;
    fn(b, e);
  });
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  double pos = q * static_cast<double>(v.size() - 1);
  std::size_t i = static_cast<std::size_t>(std::floor(pos));
  std::size_t j = std::min(i + 1, v.size() - 1);
  return v[i] + (pos - static_cast<double>(i)) * (v[j] - v[i]);
}

SamplerSpec sampler_for(const ModelParams& params, const MCConfig& mc, int min_tail) {
  SamplerSpec sp;
  sp.params = params;
  sp.n_tail = std::max({mc.n_tail, params.N, min_tail});
  sp.n_low = std::min(mc.n_low > 0 ? mc.n_low : params.N, sp.n_tail);
  sp.master_seed = mc.seed;
  return sp;
}

double ball_cutoff(double norm, double R) { return smooth_cutoff(norm / R, CutoffProfile::resonance_default()); }

}  // namespace

void MCConfig::validate() const {
  if (ensemble_size < 2) throw ParameterError("mc.ensemble_size: must be >= 2");
  if (!std::is_sorted(p_grid.begin(), p_grid.end())) throw ParameterError("mc.p_grid: must be sorted");
  for (double p : p_grid)
    if (!(p >= 2.0)) throw ParameterError("mc.p_grid: entries must be >= 2");
  if (!(R > 0.0)) throw ParameterError("mc.R: must be > 0");
  if (bootstrap < 0) throw ParameterError("mc.bootstrap: must be >= 0");
  if (threads < 1) throw ParameterError("mc.threads: must be >= 1");
  if (n_low < 0 || n_tail < 0) throw ParameterError("mc.n_low/n_tail: must be >= 0");
  for (double r : set_radii)
    if (!(r > 0.0)) throw ParameterError("mc.set_radii: entries must be > 0");
  for (int N : N_list)
    if (N < 1) throw ParameterError("mc.N_list: entries must be >= 1");
  if (N_ref < 1) throw ParameterError("mc.N_ref: must be >= 1");
  if (histogram_bins < 1) throw ParameterError("mc.histogram_bins: must be >= 1");
  if (trajectories < 1) throw ParameterError("mc.trajectories: must be >= 1");
}

void to_json(nlohmann::json& j, const MCConfig& c) {
  j = {{"ensemble_size", c.ensemble_size}, {"p_grid", c.p_grid},       {"t_grid", c.t_grid},
       {"R", c.R},                         {"seed", c.seed},           {"n_low", c.n_low},
       {"n_tail", c.n_tail},               {"bootstrap", c.bootstrap}, {"threads", c.threads},
       {"set_mode", c.set_mode},           {"set_radii", c.set_radii}, {"N_list", c.N_list},
       {"N_ref", c.N_ref},                 {"tail_levels", c.tail_levels}, {"t0", c.t0},
       {"x0", c.x0},                       {"histogram_bins", c.histogram_bins},
       {"trajectories", c.trajectories}};
}

void from_json(const nlohmann::json& j, MCConfig& c) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const auto& v = it.value();
    try {
      if (k == "ensemble_size") c.ensemble_size = v.get<std::size_t>();
      else if (k == "p_grid") c.p_grid = v.get<std::vector<double>>();
      else if (k == "t_grid") c.t_grid = v.get<std::vector<double>>();
      else if (k == "R") c.R = v.get<double>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "n_low") c.n_low = v.get<int>();
      else if (k == "n_tail") c.n_tail = v.get<int>();
      else if (k == "bootstrap") c.bootstrap = v.get<int>();
      else if (k == "threads") c.threads = v.get<int>();
      else if (k == "set_mode") c.set_mode = v.get<std::vector<int>>();
      else if (k == "set_radii") c.set_radii = v.get<std::vector<double>>();
      else if (k == "N_list") c.N_list = v.get<std::vector<int>>();
      else if (k == "N_ref") c.N_ref = v.get<int>();
      else if (k == "tail_levels") c.tail_levels = v.get<std::vector<int>>();
      else if (k == "t0") c.t0 = v.get<double>();
      else if (k == "x0") c.x0 = v.get<std::vector<double>>();
      else if (k == "histogram_bins") c.histogram_bins = v.get<int>();
      else if (k == "trajectories") c.trajectories = v.get<int>();
      else throw ParameterError("mc." + k + ": unknown key");
    } catch (const nlohmann::json::exception& e) {
      throw ParameterError("mc." + k + ": " + e.what());
    }
  }
}

const ResultTable::Row* ResultTable::find(const std::string& quantity, std::optional<double> N,
                                          std::optional<double> p, std::optional<double> t,
                                          std::optional<double> r) const {
  auto eq = [](const std::optional<double>& want, const std::optional<double>& have) {
    return !want || (have && std::abs(*want - *have) < 1e-12);
  };
  for (const auto& row : rows_) {
    if (row.quantity == quantity && eq(N, row.N) && eq(p, row.p) && eq(t, row.t) && eq(r, row.r)) return &row;
  }
  return nullptr;
}

CsvTable ResultTable::to_csv() const {
  CsvTable t({"experiment", "quantity", "N", "p", "t", "r", "value", "ci_lo", "ci_hi", "note"});
  auto opt = [&](const std::optional<double>& v) {
    if (v) t.cell(*v);
    else t.cell(std::string());
  };
  for (const auto& r : rows_) {
    t.row().cell(r.experiment).cell(r.quantity);
    opt(r.N);
    opt(r.p);
    opt(r.t);
    opt(r.r);
    t.cell(r.value);
    opt(r.ci_lo);
    opt(r.ci_hi);
    t.cell(r.note);
  }
  return t;
}

double kish_ess(const std::vector<double>& w) {
  double s = 0.0, s2 = 0.0;
  for (double x : w) {
    s += x;
    s2 += x * x;
  }
  return s2 > 0.0 ? s * s / s2 : 0.0;
}

double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ParameterError("slope fit needs at least two points");
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw ParameterError("slope fit needs distinct abscissae");
  return sxy / sxx;
}

double log_mean_exp(const std::vector<double>& a, const std::vector<bool>& mask) {
  std::vector<double> v;
  v.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v.push_back(mask.empty() || mask[i] ? a[i] : kNegInf);
  return log_sum_exp(v) - std::log(static_cast<double>(a.size()));
}

namespace {
// log of (mean |v|^p)^{1/p} over all entries, masked entries counting as 0.
double log_lp(const std::vector<double>& logabs, double p, const std::vector<std::size_t>* idx) {
  std::vector<double> a;
  if (idx) {
    a.reserve(idx->size());
    for (auto i : *idx) a.push_back(p * logabs[i]);
  } else {
    a.reserve(logabs.size());
    for (double x : logabs) a.push_back(p * x);
  }
  double n = static_cast<double>(a.size());
  double lse = log_sum_exp(a);
  return lse == kNegInf ? kNegInf : (lse - std::log(n)) / p;
}
}  // namespace

MomentTable moment_table(const std::vector<double>& values, const std::vector<bool>& mask,
                         const std::vector<double>& p_grid, int bootstrap, std::uint64_t seed) {
  if (values.size() < 2) throw ParameterError("moment table needs at least two samples");
  if (p_grid.empty()) throw ParameterError("mc.p_grid: must not be empty");
  MomentTable t;
  t.p = p_grid;
  std::vector<double> logabs(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    bool in = mask.empty() || mask[i];
    t.inside += in ? 1 : 0;
    logabs[i] = (in && values[i] != 0.0) ? std::log(std::abs(values[i])) : kNegInf;
  }
  t.empty_ball = t.inside == 0;
  const std::size_t np = p_grid.size();
  t.norm.assign(np, 0.0);
  t.ci_lo.assign(np, 0.0);
  t.ci_hi.assign(np, 0.0);
  t.kish_ess.assign(np, 0.0);
  t.reliable.assign(np, false);
  if (t.empty_ball) return t;

  std::vector<double> lp(np);
  for (std::size_t j = 0; j < np; ++j) {
    lp[j] = log_lp(logabs, p_grid[j], nullptr);
    t.norm[j] = std::exp(lp[j]);
    // Kish ESS of the weights |v|^p, computed relative to the largest.
    double m = *std::max_element(logabs.begin(), logabs.end());
    std::vector<double> w;
    for (double x : logabs)
      if (x != kNegInf) w.push_back(std::exp(p_grid[j] * (x - m)));
    t.kish_ess[j] = kish_ess(w);
    t.reliable[j] = t.kish_ess[j] >= 50.0;
  }
  // Slope over the upper half of the grid, or all of it when short.
  const std::size_t j0 = np >= 4 ? np / 2 : 0;
  std::vector<double> lx, ly;
  for (std::size_t j = j0; j < np; ++j) {
    lx.push_back(std::log(p_grid[j]));
    ly.push_back(lp[j]);
  }
  const bool fit = lx.size() >= 2;
  bool finite_fit = fit && std::all_of(ly.begin(), ly.end(), [](double y) { return std::isfinite(y); });
  t.beta = finite_fit ? ls_slope(lx, ly) : std::nan("");

  if (bootstrap > 0) {
    PhiloxEngine eng(seed, 0x626f6f74ull);
    std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
    std::vector<std::vector<double>> bnorm(np);
    std::vector<double> bbeta;
    std::vector<std::size_t> idx(values.size());
    for (int b = 0; b < bootstrap; ++b) {
      for (auto& i : idx) i = pick(eng);
      std::vector<double> by;
      for (std::size_t j = 0; j < np; ++j) {
        double l = log_lp(logabs, p_grid[j], &idx);
        bnorm[j].push_back(std::exp(l));
        if (j >= j0) by.push_back(l);
      }
      if (fit && std::all_of(by.begin(), by.end(), [](double y) { return std::isfinite(y); })) bbeta.push_back(ls_slope(lx, by));
    }
    for (std::size_t j = 0; j < np; ++j) {
      t.ci_lo[j] = quantile(bnorm[j], 0.025);
      t.ci_hi[j] = quantile(bnorm[j], 0.975);
    }
    t.beta_lo = bbeta.empty() ? std::nan("") : quantile(bbeta, 0.025);
    t.beta_hi = bbeta.empty() ? std::nan("") : quantile(bbeta, 0.975);
  } else {
    t.ci_lo = t.norm;
    t.ci_hi = t.norm;
    t.beta_lo = t.beta_hi = t.beta;
  }
  return t;
}

std::pair<double, double> wilson_interval(std::size_t k, std::size_t n, double z) {
  if (n == 0) return {0.0, 1.0};
  double nn = static_cast<double>(n);
  double ph = static_cast<double>(k) / nn;
  double z2 = z * z;
  double den = 1.0 + z2 / nn;
  double c = (ph + z2 / (2.0 * nn)) / den;
  double h = z * std::sqrt(ph * (1.0 - ph) / nn + z2 / (4.0 * nn * nn)) / den;
  double lo = k == 0 ? 0.0 : std::max(0.0, c - h);
  double hi = k == n ? 1.0 : std::min(1.0, c + h);
  return {lo, hi};
}

double kolmogorov_q(double lambda) {
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 200; ++k) {
    double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

KsResult ks_one_sample_normal(std::vector<double> x, double variance) {
  if (x.size() < 2) throw ParameterError("KS test needs at least two samples");
  if (!(variance > 0.0)) throw ParameterError("KS reference variance must be > 0");
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  const double sd = std::sqrt(variance);
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double F = 0.5 * std::erfc(-x[i] / (sd * std::sqrt(2.0)));
    d = std::max({d, F - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - F});
  }
  double sn = std::sqrt(n);
  return {d, kolmogorov_q((sn + 0.12 + 0.11 / sn) * d)};
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.size() < 2 || b.size() < 2) throw ParameterError("KS test needs at least two samples per side");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  double ne = std::sqrt(na * nb / (na + nb));
  return {d, kolmogorov_q((ne + 0.12 + 0.11 / ne) * d)};
}

double pointwise_real_variance(int dim, int cutoff, double s) {
  double acc = 0.0;
  for (const auto& m : modes_within(cutoff, dim)) acc += 1.0 / (1.0 + std::pow(static_cast<double>(m.norm2()), s));
  return 0.5 * acc;
}

ExperimentResult moment_growth(const ModelParams& params, const MCConfig& mc) {
  params.validate();
  mc.validate();
  const std::size_t n = mc.ensemble_size;
  SamplerSpec sp = sampler_for(params, mc, 0);
  std::vector<double> Q(n), h(n);
  parallel_chunks(n, mc.threads, [&](std::size_t b, std::size_t e) {
    Energetics en(params, sp.n_tail);
    for (std::size_t i = b; i < e; ++i) {
      auto u = sample_mu_s(sp.with_stream(i));
      h[i] = std::sqrt(sobolev_norm_sq(u, params.sigma));
      auto w = en.weighted(u);
      auto fp = en.first_pass(w);
      Q[i] = (-fp.R0 / 6.0 + fp.R1 / 2.0 - fp.R2 / 2.0).imag();
    }
  });
  std::vector<bool> mask(n);
  for (std::size_t i = 0; i < n; ++i) mask[i] = h[i] <= mc.R;
  auto mt = moment_table(Q, mask, mc.p_grid, mc.bootstrap, mc.seed);

  ExperimentResult res;
  const double N = params.N;
  for (std::size_t j = 0; j < mt.p.size(); ++j) {
    res.table.add({"moments", "lp_norm", N, mt.p[j], {}, {}, mt.norm[j], mt.ci_lo[j], mt.ci_hi[j],
                   mt.reliable[j] ? "" : "unreliable_kish"});
    res.table.add({"moments", "kish_ess", N, mt.p[j], {}, {}, mt.kish_ess[j], {}, {}, ""});
  }
  res.table.add({"moments", "beta_hat", N, {}, {}, {}, mt.beta, mt.beta_lo, mt.beta_hi, mt.empty_ball ? "empty_ball" : ""});
  res.table.add({"moments", "inside_ball_fraction", N, {}, {}, {}, static_cast<double>(mt.inside) / n, {}, {}, ""});
  bool mono = true;
  for (std::size_t j = 1; j < mt.norm.size(); ++j) mono = mono && mt.norm[j] >= mt.norm[j - 1] * (1.0 - 1e-12);
  res.summary = {{"beta_hat", mt.beta},
                 {"beta_ci", {mt.beta_lo, mt.beta_hi}},
                 {"empty_ball", mt.empty_ball},
                 {"inside", mt.inside},
                 {"samples", n},
                 {"monotone_in_p", mono}};
  return res;
}

void to_json(nlohmann::json& j, const ChaosSpec& c) {
  j = {{"form", c.form},       {"degree", c.degree}, {"coordinates", c.coordinates}, {"p_grid", c.p_grid},
       {"samples", c.samples}, {"temper", c.temper}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ChaosSpec& c) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const auto& v = it.value();
    try {
      if (k == "form") c.form = v.get<std::string>();
      else if (k == "degree") c.degree = v.get<int>();
      else if (k == "coordinates") c.coordinates = v.get<int>();
      else if (k == "p_grid") c.p_grid = v.get<std::vector<double>>();
      else if (k == "samples") c.samples = v.get<std::size_t>();
      else if (k == "temper") c.temper = v.get<double>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else throw ParameterError("chaos." + k + ": unknown key");
    } catch (const nlohmann::json::exception& e) {
      throw ParameterError("chaos." + k + ": " + e.what());
    }
  }
}

ChaosResult chaos_audit(const ChaosSpec& spec) {
  if (spec.form != "monomial" && spec.form != "linear" && spec.form != "constant") {
    throw ParameterError("chaos.form: must be monomial, linear or constant");
  }
  if (spec.samples < 2) throw ParameterError("chaos.samples: must be >= 2");
  if (spec.p_grid.size() < 2 || !std::is_sorted(spec.p_grid.begin(), spec.p_grid.end())) {
    throw ParameterError("chaos.p_grid: needs two or more sorted entries");
  }
  if (!(spec.temper >= 0.0 && spec.temper <= 1.0)) throw ParameterError("chaos.temper: must be in [0, 1]");
  const bool constant = spec.form == "constant";
  const int degree = spec.form == "linear" ? 1 : (constant ? 0 : spec.degree);
  if (spec.form == "monomial" && degree < 1) throw ParameterError("chaos.degree: must be >= 1");
  const int m = spec.form == "linear" ? (spec.coordinates > 0 ? spec.coordinates : 8) : std::max(degree, 1);
  std::vector<double> coef(static_cast<std::size_t>(m), 1.0);
  if (spec.form == "linear") {
    double nn = 0.0;
    for (int j = 0; j < m; ++j) nn += 1.0 / ((j + 1.0) * (j + 1.0));
    for (int j = 0; j < m; ++j) coef[static_cast<std::size_t>(j)] = 1.0 / ((j + 1.0) * std::sqrt(nn));
  }

  ChaosResult res;
  const double cnorm = std::sqrt(std::inner_product(coef.begin(), coef.end(), coef.begin(), 0.0));
  auto log_i0 = [](double x) {
    if (x < 500.0) return std::log(std::cyl_bessel_i(0.0, x));
    return x - 0.5 * std::log(2.0 * std::numbers::pi * x) + std::log1p(1.0 / (8.0 * x) + 9.0 / (128.0 * x * x));
  };
  auto log_norm = [&](double p, std::uint64_t stream, double* ess) {
    PhiloxEngine eng(spec.seed, stream);
    std::vector<double> terms(spec.samples);
    if (spec.form == "linear") {
      // Mean shift mu e^{i phi} c/|c| with phi uniform; the phase-averaged weight
      // is e^{mu^2} / I0(2 mu |<c/|c|, g>|).
      const double mu = std::sqrt(spec.temper * p / 2.0);
      std::normal_distribution<double> nd(0.0, std::sqrt(0.5));
      std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
      for (std::size_t i = 0; i < spec.samples; ++i) {
        cplx shift = std::polar(mu, phase(eng));
        cplx z = 0.0;
        for (int j = 0; j < m; ++j) {
          double cj = coef[static_cast<std::size_t>(j)] / cnorm;
          cplx g = cplx(nd(eng), nd(eng)) + shift * cj;
          z += cj * g;
        }
        double az = std::abs(z);
        terms[i] = mu * mu - log_i0(2.0 * mu * az) + p * std::log(cnorm * az);
      }
    } else {
      // Radial proposal |g_j|^2 ~ Gamma(a, 1), uniform phase; weight Gamma(a) x^{1-a}.
      const double a = constant ? 1.0 : 1.0 + spec.temper * p / 2.0;
      std::gamma_distribution<double> gam(a, 1.0);
      const double lga = std::lgamma(a);
      for (std::size_t i = 0; i < spec.samples; ++i) {
        double logw = 0.0, lf = 0.0;
        for (int j = 0; j < m; ++j) {
          double x = gam(eng);
          logw += lga - (a - 1.0) * std::log(x);
          lf += 0.5 * std::log(x);
        }
        terms[i] = logw + (constant ? 0.0 : p * lf);
      }
    }
    double mx = *std::max_element(terms.begin(), terms.end());
    std::vector<double> w;
    w.reserve(terms.size());
    for (double t : terms) w.push_back(std::exp(t - mx));
    *ess = kish_ess(w);
    return (log_sum_exp(terms) - std::log(static_cast<double>(spec.samples))) / p;
  };

  double ess2 = 0.0;
  double l2 = log_norm(2.0, 0x6332ull, &ess2);
  std::vector<double> lx, ly;
  for (std::size_t j = 0; j < spec.p_grid.size(); ++j) {
    double p = spec.p_grid[j];
    double ess = 0.0;
    double l = log_norm(p, 0x6300ull + j, &ess);
    res.p.push_back(p);
    res.norm.push_back(std::exp(l));
    res.ratio.push_back(std::exp(l - l2));
    res.ess.push_back(ess);
    if (j >= spec.p_grid.size() / 2) {
      lx.push_back(std::log(p));
      ly.push_back(l - l2);
    }
  }
  res.exponent = ls_slope(lx, ly);
  double e4 = 0.0;
  res.ratio_4_2 = std::exp(log_norm(4.0, 0x6334ull, &e4) - l2);
  return res;
}

ExperimentResult weight_integrability(const ModelParams& params, const MCConfig& mc) {
  params.validate();
  mc.validate();
  std::vector<int> levels = mc.N_list;
  levels.push_back(mc.N_ref);
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  const std::size_t n = mc.ensemble_size;
  SamplerSpec sp = sampler_for(params, mc, levels.back());
  const std::size_t L = levels.size();
  std::vector<std::vector<double>> Rv(L, std::vector<double>(n));
  std::vector<double> cut(n), hn(n);
  parallel_chunks(n, mc.threads, [&](std::size_t b, std::size_t e) {
    std::vector<std::unique_ptr<FastCorrection>> fc;
    for (int N : levels) {
      ModelParams p = params;
      p.N = N;
      fc.push_back(std::make_unique<FastCorrection>(p, sp.n_tail));
    }
    for (std::size_t i = b; i < e; ++i) {
      auto u = sample_mu_s(sp.with_stream(i));
      hn[i] = std::sqrt(sobolev_norm_sq(u, params.sigma));
      cut[i] = ball_cutoff(hn[i], mc.R);
      for (std::size_t l = 0; l < L; ++l) Rv[l][i] = (*fc[l])(u);
    }
  });

  ExperimentResult res;
  std::vector<bool> mask(n);
  for (std::size_t i = 0; i < n; ++i) mask[i] = cut[i] > 0.0;
  auto log_estimate = [&](const std::vector<double>& R, const std::vector<std::size_t>* idx) {
    std::vector<double> a;
    std::size_t cnt = idx ? idx->size() : n;
    for (std::size_t q = 0; q < cnt; ++q) {
      std::size_t i = idx ? (*idx)[q] : q;
      a.push_back(cut[i] > 0.0 ? std::log(cut[i]) + std::abs(R[i]) : kNegInf);
    }
    return log_sum_exp(a) - std::log(static_cast<double>(cnt));
  };
  PhiloxEngine eng(mc.seed, 0x77656967ull);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::vector<std::size_t>> boot(static_cast<std::size_t>(mc.bootstrap), std::vector<std::size_t>(n));
  for (auto& bidx : boot)
    for (auto& i : bidx) i = pick(eng);

  nlohmann::json est = nlohmann::json::object();
  std::vector<double> log_est(L);
  for (std::size_t l = 0; l < L; ++l) {
    log_est[l] = log_estimate(Rv[l], nullptr);
    std::vector<double> bl;
    for (const auto& bidx : boot) bl.push_back(log_estimate(Rv[l], &bidx));
    double lo = boot.empty() ? log_est[l] : quantile(bl, 0.025);
    double hi = boot.empty() ? log_est[l] : quantile(bl, 0.975);
    res.table.add({"weights", "log_mean_weight", static_cast<double>(levels[l]), {}, {}, {}, log_est[l], lo, hi, ""});
    double m = 0.0;
    std::vector<double> absR;
    for (std::size_t i = 0; i < n; ++i)
      if (mask[i]) absR.push_back(std::abs(Rv[l][i]));
    if (!absR.empty()) m = *std::max_element(absR.begin(), absR.end());
    res.table.add({"weights", "max_abs_R", static_cast<double>(levels[l]), {}, {}, {}, m, {}, {}, ""});
    est[std::to_string(levels[l])] = log_est[l];
  }
  // Spread across the studied N (N_ref excluded).
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t l = 0; l < L; ++l) {
    if (std::find(mc.N_list.begin(), mc.N_list.end(), levels[l]) == mc.N_list.end()) continue;
    lo = std::min(lo, log_est[l]);
    hi = std::max(hi, log_est[l]);
  }
  double spread = std::exp(hi - lo) - 1.0;
  res.table.add({"weights", "relative_spread", {}, {}, {}, {}, spread, {}, {}, ""});

  // ||chi_R (e^{-R_N} - e^{-R_ref})||_p in log space.
  const auto& Rref = Rv[L - 1];
  std::vector<double> ps = mc.p_grid;
  nlohmann::json dist = nlohmann::json::object();
  for (double p : ps) {
    std::vector<double> series;
    for (int N : mc.N_list) {
      if (N == mc.N_ref) continue;
      std::size_t l = static_cast<std::size_t>(std::find(levels.begin(), levels.end(), N) - levels.begin());
      std::vector<double> a(n);
      for (std::size_t i = 0; i < n; ++i) {
        double x = -Rv[l][i], y = -Rref[i];
        double gap = std::abs(x - y);
        a[i] = (cut[i] > 0.0 && gap != 0.0)
                   ? p * (std::log(cut[i]) + std::max(x, y) + std::log(-std::expm1(-gap)))
                   : kNegInf;
      }
      double ld = (log_sum_exp(a) - std::log(static_cast<double>(n))) / p;
      res.table.add({"weights", "log_lp_distance_to_ref", static_cast<double>(N), p, {}, {}, ld, {}, {},
                     "N_ref=" + std::to_string(mc.N_ref)});
      series.push_back(ld);
      dist[std::to_string(static_cast<int>(p))][std::to_string(N)] = ld;
    }
    bool mono = true;
    for (std::size_t k = 1; k < series.size(); ++k) mono = mono && series[k] < series[k - 1];
    dist[std::to_string(static_cast<int>(p))]["monotone"] = mono;
  }
  res.summary = {{"log_mean_weight", est},
                 {"relative_spread", spread},
                 {"log_lp_distance", dist},
                 {"inside", std::count(mask.begin(), mask.end(), true)},
                 {"samples", n},
                 {"N_ref", mc.N_ref}};
  return res;
}

namespace {
Mode set_mode_of(const MCConfig& mc, int dim) {
  Mode k(dim);
  for (int a = 0; a < dim; ++a) k.k[a] = a < static_cast<int>(mc.set_mode.size()) ? mc.set_mode[a] : 0;
  return k;
}
}  // namespace

ExperimentResult measure_transport(const ModelParams& params, const MCConfig& mc, const FlowConfig& flow) {
  params.validate();
  mc.validate();
  const std::size_t n = mc.ensemble_size;
  SamplerSpec sp = sampler_for(params, mc, 0);
  const Mode k = set_mode_of(mc, params.dim);
  if (k.norm2() > sp.n_tail * sp.n_tail) throw ParameterError("mc.set_mode: outside the stored modes");
  const std::size_t nr = mc.set_radii.size(), nt = mc.t_grid.size();
  // hits[t][r] for base and image
  std::vector<std::vector<std::vector<char>>> base(nt, std::vector<std::vector<char>>(nr, std::vector<char>(n))),
      image = base;
  parallel_chunks(n, mc.threads, [&](std::size_t b, std::size_t e) {
    TruncatedFlow fl(params, sp.n_tail, flow.integrator, flow.dealias_M);
    for (std::size_t i = b; i < e; ++i) {
      auto u = sample_mu_s(sp.with_stream(i));
      auto member = [&](const SpectralField& f, double r) {
        return std::abs(f.at(k)) <= r && std::sqrt(sobolev_norm_sq(f, params.sigma)) <= mc.R;
      };
      for (std::size_t ti = 0; ti < nt; ++ti) {
        SpectralField v = u;
        if (mc.t_grid[ti] != 0.0) fl.advance(v, -mc.t_grid[ti], flow.dt);
        for (std::size_t ri = 0; ri < nr; ++ri) {
          base[ti][ri][i] = member(u, mc.set_radii[ri]);
          image[ti][ri][i] = member(v, mc.set_radii[ri]);
        }
      }
    }
  });
  ExperimentResult res;
  nlohmann::json per_t = nlohmann::json::array();
  for (std::size_t ti = 0; ti < nt; ++ti) {
    double t = mc.t_grid[ti];
    std::vector<double> lx, ly;
    nlohmann::json counts = nlohmann::json::array();
    for (std::size_t ri = 0; ri < nr; ++ri) {
      double r = mc.set_radii[ri];
      std::size_t kb = static_cast<std::size_t>(std::count(base[ti][ri].begin(), base[ti][ri].end(), 1));
      std::size_t ki = static_cast<std::size_t>(std::count(image[ti][ri].begin(), image[ti][ri].end(), 1));
      auto wb = wilson_interval(kb, n), wi = wilson_interval(ki, n);
      res.table.add({"transport", "mu_A", static_cast<double>(params.N), {}, t, r, static_cast<double>(kb) / n, wb.first,
                     wb.second, kb == 0 ? "zero_hits_upper_bound_only" : ""});
      res.table.add({"transport", "mu_image", static_cast<double>(params.N), {}, t, r, static_cast<double>(ki) / n,
                     wi.first, wi.second, ki == 0 ? "zero_hits_upper_bound_only" : ""});
      counts.push_back({{"r", r}, {"base", kb}, {"image", ki}});
      if (kb > 0 && ki > 0) {
        lx.push_back(std::log(static_cast<double>(kb) / n));
        ly.push_back(std::log(static_cast<double>(ki) / n));
      }
    }
    nlohmann::json entry = {{"t", t}, {"counts", counts}};
    if (lx.size() >= 2) {
      double slope = ls_slope(lx, ly);
      res.table.add({"transport", "loglog_slope", static_cast<double>(params.N), {}, t, {}, slope, {}, {}, "descriptive"});
      entry["slope"] = slope;
    } else {
      entry["slope"] = nullptr;
    }
    per_t.push_back(entry);
  }
  res.summary = {{"per_t", per_t}, {"samples", n}, {"set_mode", mc.set_mode}, {"R", mc.R}};
  return res;
}

namespace {
cplx point_value(const SpectralField& u, const std::vector<double>& x0) {
  cplx acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const Mode& m = u.modes()[i];
    double ph = 0.0;
    for (int a = 0; a < m.dim; ++a) ph += m.k[a] * (a < static_cast<int>(x0.size()) ? x0[a] : 0.0);
    acc += u[i] * std::polar(1.0, ph);
  }
  return acc;
}

double max_atom(std::vector<cplx> v) {
  std::sort(v.begin(), v.end(), [](cplx a, cplx b) { return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag(); });
  std::size_t best = v.empty() ? 0 : 1, run = 1;
  for (std::size_t i = 1; i < v.size(); ++i) {
    run = v[i] == v[i - 1] ? run + 1 : 1;
    best = std::max(best, run);
  }
  return v.empty() ? 0.0 : static_cast<double>(best) / static_cast<double>(v.size());
}
}  // namespace

ExperimentResult pointwise_law(const ModelParams& params, const MCConfig& mc, const FlowConfig& flow) {
  params.validate();
  mc.validate();
  if (mc.tail_levels.size() < 2) throw ParameterError("mc.tail_levels: needs two tail levels");
  const std::size_t n = mc.ensemble_size;
  const double t0 = mc.t0;
  std::vector<std::vector<cplx>> vals(mc.tail_levels.size(), std::vector<cplx>(n));
  for (std::size_t l = 0; l < mc.tail_levels.size(); ++l) {
    SamplerSpec sp = sampler_for(params, mc, 0);
    sp.n_tail = std::max(mc.tail_levels[l], params.N);
    sp.n_low = std::min(sp.n_low, sp.n_tail);
    // Independent streams per level keep the two-sample test honest.
    const std::uint64_t offset = static_cast<std::uint64_t>(l) << 40;
    parallel_chunks(n, mc.threads, [&](std::size_t b, std::size_t e) {
      std::unique_ptr<TruncatedFlow> fl;
      if (t0 != 0.0) fl = std::make_unique<TruncatedFlow>(params, sp.n_tail, flow.integrator, flow.dealias_M);
      for (std::size_t i = b; i < e; ++i) {
        auto u = sample_mu_s(sp.with_stream(offset + i));
        if (fl) fl->advance(u, t0, flow.dt);
        vals[l][i] = point_value(u, mc.x0);
      }
    });
  }
  ExperimentResult res;
  auto parts = [](const std::vector<cplx>& v, bool im) {
    std::vector<double> out;
    for (auto z : v) out.push_back(im ? z.imag() : z.real());
    return out;
  };
  nlohmann::json s = {{"t0", t0}, {"samples", n}, {"tail_levels", mc.tail_levels}};
  for (std::size_t l = 0; l < vals.size(); ++l) {
    double atom = max_atom(vals[l]);
    res.table.add({"pointwise_law", "max_atom", static_cast<double>(params.N), {}, t0,
                   static_cast<double>(mc.tail_levels[l]), atom, {}, {}, "r=tail level"});
    s["max_atom"].push_back(atom);
  }
  if (t0 == 0.0) {
    for (std::size_t l = 0; l < vals.size(); ++l) {
      int tail = std::max(mc.tail_levels[l], params.N);
      double var = pointwise_real_variance(params.dim, tail, params.s);
      auto kr = ks_one_sample_normal(parts(vals[l], false), var);
      auto ki = ks_one_sample_normal(parts(vals[l], true), var);
      res.table.add({"pointwise_law", "ks_closed_form_re", static_cast<double>(params.N), {}, t0, static_cast<double>(tail),
                     kr.statistic, {}, {}, "p=" + format_double(kr.p_value)});
      res.table.add({"pointwise_law", "ks_closed_form_im", static_cast<double>(params.N), {}, t0, static_cast<double>(tail),
                     ki.statistic, {}, {}, "p=" + format_double(ki.p_value)});
      s["closed_form"].push_back({{"tail", tail}, {"variance", var}, {"re", {kr.statistic, kr.p_value}}, {"im", {ki.statistic, ki.p_value}}});
    }
  }
  auto kr = ks_two_sample(parts(vals[0], false), parts(vals[1], false));
  auto ki = ks_two_sample(parts(vals[0], true), parts(vals[1], true));
  res.table.add({"pointwise_law", "ks_two_sample_re", static_cast<double>(params.N), {}, t0, {}, kr.statistic, {}, {},
                 "p=" + format_double(kr.p_value)});
  res.table.add({"pointwise_law", "ks_two_sample_im", static_cast<double>(params.N), {}, t0, {}, ki.statistic, {}, {},
                 "p=" + format_double(ki.p_value)});
  s["two_sample"] = {{"re", {kr.statistic, kr.p_value}}, {"im", {ki.statistic, ki.p_value}}};

  // 2-d histogram of the first level on a symmetric box.
  double ext = 0.0;
  for (auto z : vals[0]) ext = std::max({ext, std::abs(z.real()), std::abs(z.imag())});
  ext = ext > 0.0 ? ext * (1.0 + 1e-9) : 1.0;
  const int B = mc.histogram_bins;
  std::vector<std::size_t> hist(static_cast<std::size_t>(B * B), 0);
  for (auto z : vals[0]) {
    int bx = std::clamp(static_cast<int>((z.real() + ext) / (2.0 * ext) * B), 0, B - 1);
    int by = std::clamp(static_cast<int>((z.imag() + ext) / (2.0 * ext) * B), 0, B - 1);
    ++hist[static_cast<std::size_t>(bx * B + by)];
  }
  CsvTable h({"re_lo", "re_hi", "im_lo", "im_hi", "count", "density"});
  const double w = 2.0 * ext / B;
  for (int bx = 0; bx < B; ++bx)
    for (int by = 0; by < B; ++by) {
      std::size_t c = hist[static_cast<std::size_t>(bx * B + by)];
      h.row().cell(-ext + bx * w).cell(-ext + (bx + 1) * w).cell(-ext + by * w).cell(-ext + (by + 1) * w).cell(c).cell(
          static_cast<double>(c) / (static_cast<double>(n) * w * w));
    }
  res.extra.emplace_back("histogram2d.csv", std::move(h));
  res.summary = s;
  return res;
}

ExperimentResult convergence_experiment(const ModelParams& params, const MCConfig& mc, const FlowConfig& flow) {
  params.validate();
  mc.validate();
  std::vector<int> Ns = mc.N_list;
  if (std::find(Ns.begin(), Ns.end(), mc.N_ref) == Ns.end()) Ns.push_back(mc.N_ref);
  int Nref = *std::max_element(Ns.begin(), Ns.end());
  SamplerSpec sp = sampler_for(params, mc, Nref);
  const std::size_t n = static_cast<std::size_t>(mc.trajectories);
  std::vector<ConvergenceResult> runs(n);
  double t = mc.t_grid.empty() ? 1.0 : mc.t_grid.back();
  parallel_for(n, mc.threads, [&](std::size_t i) {
    auto u = sample_mu_s(sp.with_stream(i));
    runs[i] = convergence_study(u, params, Ns, t, params.sigma, flow);
  });
  ExperimentResult res;
  nlohmann::json per_seed = nlohmann::json::array();
  bool all_mono = true;
  CsvTable series({"seed_index", "N", "time", "h_sigma_distance"});
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> d;
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < runs[i].rows.size(); ++r) {
      const auto& row = runs[i].rows[r];
      res.table.add({"convergence", "sup_distance", static_cast<double>(row.N), {}, t, {}, row.sup_distance, {}, {},
                     "seed_index=" + std::to_string(i)});
      res.table.add({"convergence", "sup_h_sigma", static_cast<double>(row.N), {}, t, {}, row.sup_h_sigma, {}, {},
                     "seed_index=" + std::to_string(i)});
      rows.push_back({{"N", row.N}, {"sup_distance", row.sup_distance}, {"sup_h_sigma", row.sup_h_sigma}});
      if (row.N != runs[i].N_ref) d.push_back(row.sup_distance);
      for (std::size_t k = 0; k < runs[i].times.size(); ++k) {
        series.row().cell(i).cell(row.N).cell(runs[i].times[k]).cell(runs[i].distance_series[r][k]);
      }
    }
    bool mono = true;
    for (std::size_t k = 1; k < d.size(); ++k) mono = mono && d[k] < d[k - 1];
    all_mono = all_mono && mono;
    per_seed.push_back({{"rows", rows}, {"monotone", mono}, {"N_ref", runs[i].N_ref}});
  }
  res.extra.emplace_back("convergence_series.csv", std::move(series));
  res.summary = {{"per_seed", per_seed}, {"monotone", all_mono}, {"t", t}, {"N_ref", Nref}};
  return res;
}

}  // namespace qnls
