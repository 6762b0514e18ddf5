#include "qnls/dynamics.hpp"

#include <algorithm>
#include <cmath>

#include "qnls/energetics.hpp"
#include "qnls/errors.hpp"

namespace qnls {

const char* to_string(Integrator i) { return i == Integrator::IFRK4 ? "IFRK4" : "StrangSplit"; }

Integrator integrator_from_string(const std::string& s) {
  if (s == "IFRK4") return Integrator::IFRK4;
  if (s == "StrangSplit") return Integrator::StrangSplit;
  throw ParameterError("flow.integrator: unknown integrator '" + s + "' (IFRK4 or StrangSplit)");
}

void FlowConfig::validate(int band_radius) const {
  if (!(std::isfinite(dt) && dt > 0.0)) throw ParameterError("flow.dt: must be > 0");
  if (!std::isfinite(t_end)) throw ParameterError("flow.t_end: must be finite");
  if (monitor_every < 1) throw ParameterError("flow.monitor_every: must be >= 1");
  if (checkpoint_every < 0) throw ParameterError("flow.checkpoint_every: must be >= 0");
  if (dealias_M != 0 && dealias_M < 6 * band_radius + 1) {
    throw ParameterError("flow.dealias_M: must be >= 6N+1 = " + std::to_string(6 * band_radius + 1));
  }
}

void to_json(nlohmann::json& j, const FlowConfig& c) {
  j = {{"dt", c.dt},
       {"t_end", c.t_end},
       {"integrator", to_string(c.integrator)},
       {"dealias_M", c.dealias_M},
       {"monitor_every", c.monitor_every},
       {"record_energy", c.record_energy},
       {"checkpoint_every", c.checkpoint_every}};
}

void from_json(const nlohmann::json& j, FlowConfig& c) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const auto& v = it.value();
    try {
      if (k == "dt") c.dt = v.get<double>();
      else if (k == "t_end") c.t_end = v.get<double>();
      else if (k == "integrator") c.integrator = integrator_from_string(v.get<std::string>());
      else if (k == "dealias_M") c.dealias_M = v.get<int>();
      else if (k == "monitor_every") c.monitor_every = v.get<int>();
      else if (k == "record_energy") c.record_energy = v.get<bool>();
      else if (k == "checkpoint_every") c.checkpoint_every = v.get<int>();
      else throw ParameterError("flow." + k + ": unknown key");
    } catch (const nlohmann::json::exception& e) {
      throw ParameterError("flow." + k + ": " + e.what());
    }
  }
}

CsvTable TrajectoryRecord::to_csv() const {
  bool energy = !e_sN.empty();
  std::vector<std::string> head{"time", "mass", "hamiltonian_N", "h_sigma_norm"};
  if (energy) head.push_back("e_sN");
  CsvTable t(head);
  for (std::size_t i = 0; i < times.size(); ++i) {
    t.row().cell(times[i]).cell(mass[i]).cell(hamiltonian_N[i]).cell(h_sigma_norm[i]);
    if (energy) t.cell(e_sN[i]);
  }
  return t;
}

SpectralField linear_flow(const SpectralField& u, double t) {
  SpectralField out = u;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] *= std::polar(1.0, -static_cast<double>(out.modes()[i].norm2()) * t);
  }
  return out;
}

TruncatedFlow::TruncatedFlow(const ModelParams& params, int store_cutoff, Integrator integrator, int dealias_M)
    : params_(params), integrator_(integrator) {
  params_.validate();
  band_ = params_.active_band(store_cutoff);
  if (params_.untruncated) {
    op_ = std::make_unique<QuinticOperator>(band_, std::vector<double>(band_.size(), 1.0), dealias_M);
  } else {
    std::vector<double> chi;
    for (const auto& m : band_) chi.push_back(params_.chi_N(m));
    op_ = std::make_unique<QuinticOperator>(band_, std::move(chi), dealias_M);
  }
  for (const auto& m : band_) n2_.push_back(m.norm2());
  for (auto* v : {&k1_, &k2_, &k3_, &k4_, &tmp_, &base_}) v->resize(band_.size());
}

std::vector<cplx> TruncatedFlow::gather(const SpectralField& u) const {
  std::vector<cplx> v(band_.size());
  for (std::size_t i = 0; i < band_.size(); ++i) v[i] = u.at(band_[i]);
  return v;
}

void TruncatedFlow::scatter(const std::vector<cplx>& v, SpectralField& u) const {
  for (std::size_t i = 0; i < band_.size(); ++i) u.set(band_[i], v[i]);
}

// out = -i chi F(chi v)
void TruncatedFlow::rhs(const std::vector<cplx>& v, std::vector<cplx>& out) {
  op_->apply(v, out);
  for (auto& z : out) z = cplx(z.imag(), -z.real());
}

void TruncatedFlow::rotate(std::vector<cplx>& v, double t) const {
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= std::polar(1.0, -static_cast<double>(n2_[i]) * t);
}

void TruncatedFlow::step(std::vector<cplx>& v, double dt) {
  const std::size_t n = v.size();
  if (integrator_ == Integrator::IFRK4) {
    // Lawson RK4 in the interaction picture.
    rhs(v, k1_);
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = v[i] + 0.5 * dt * k1_[i];
    rotate(tmp_, 0.5 * dt);
    rhs(tmp_, k2_);
    base_ = v;
    rotate(base_, 0.5 * dt);
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = base_[i] + 0.5 * dt * k2_[i];
    rhs(tmp_, k3_);
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = base_[i] + dt * k3_[i];
    rotate(tmp_, 0.5 * dt);
    rhs(tmp_, k4_);
    // v <- E v + dt/6 (E k1 + 2 E_h k2 + 2 E_h k3 + k4)
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = v[i] + dt / 6.0 * k1_[i];
    rotate(tmp_, 0.5 * dt);
    for (std::size_t i = 0; i < n; ++i) tmp_[i] += dt / 3.0 * (k2_[i] + k3_[i]);
    rotate(tmp_, 0.5 * dt);
    for (std::size_t i = 0; i < n; ++i) v[i] = tmp_[i] + dt / 6.0 * k4_[i];
  } else {
    rotate(v, 0.5 * dt);
    const double h = dt / 4.0;
    for (int m = 0; m < 4; ++m) {
      rhs(v, k1_);
      for (std::size_t i = 0; i < n; ++i) tmp_[i] = v[i] + 0.5 * h * k1_[i];
      rhs(tmp_, k2_);
      for (std::size_t i = 0; i < n; ++i) tmp_[i] = v[i] + 0.5 * h * k2_[i];
      rhs(tmp_, k3_);
      for (std::size_t i = 0; i < n; ++i) tmp_[i] = v[i] + h * k3_[i];
      rhs(tmp_, k4_);
      for (std::size_t i = 0; i < n; ++i) v[i] += h / 6.0 * (k1_[i] + 2.0 * k2_[i] + 2.0 * k3_[i] + k4_[i]);
    }
    rotate(v, 0.5 * dt);
  }
}

namespace {
long long step_count(double t, double dt) {
  double r = std::abs(t) / dt;
  long long n = static_cast<long long>(std::ceil(r - 1e-9));
  return std::max<long long>(n, t == 0.0 ? 0 : 1);
}

bool finite(const std::vector<cplx>& v) {
  for (const auto& z : v)
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
  return true;
}
}  // namespace

void TruncatedFlow::advance(SpectralField& u, double t, double dt) {
  long long n = step_count(t, dt);
  if (n == 0) return;
  double h = t / static_cast<double>(n);
  auto v = gather(u);
  for (long long j = 0; j < n; ++j) {
    step(v, h);
    if (!finite(v)) throw IntegrationError("non-finite state in truncated flow", h * (j + 1));
  }
  SpectralField out = linear_flow(u, t);
  scatter(v, out);
  u = std::move(out);
}

TrajectoryRecord evolve(const SpectralField& u, const ModelParams& params, const FlowConfig& cfg,
                        const CheckpointFn& checkpoint) {
  params.validate();
  TruncatedFlow flow(params, u.cutoff(), cfg.integrator, cfg.dealias_M);
  cfg.validate(flow.band().box_radius());
  std::unique_ptr<FastCorrection> fast;
  if (cfg.record_energy) fast = std::make_unique<FastCorrection>(params, u.cutoff());

  TrajectoryRecord rec;
  const SpectralField u0 = u;
  auto v = flow.gather(u);
  SpectralField cur = u;
  auto monitor = [&](double t) {
    SpectralField s = linear_flow(u0, t);
    flow.scatter(v, s);
    cur = std::move(s);
    rec.times.push_back(t);
    rec.mass.push_back(mass(cur));
    rec.hamiltonian_N.push_back(params.untruncated ? hamiltonian(cur)
                                                   : truncated_hamiltonian(cur, params.N, params.frequency_cutoff));
    rec.h_sigma_norm.push_back(std::sqrt(sobolev_norm_sq(cur, params.sigma)));
    if (fast) rec.e_sN.push_back(0.5 * triple_norm_sq(cur, params.s) + (*fast)(cur));
    for (double x : {rec.mass.back(), rec.hamiltonian_N.back(), rec.h_sigma_norm.back()}) {
      if (!std::isfinite(x)) throw IntegrationError("non-finite monitor value", t);
    }
  };
  long long n = step_count(cfg.t_end, cfg.dt);
  double h = n > 0 ? cfg.t_end / static_cast<double>(n) : 0.0;
  monitor(0.0);
  for (long long j = 1; j <= n; ++j) {
    flow.step(v, h);
    double t = h * static_cast<double>(j);
    if (!finite(v)) throw IntegrationError("non-finite state in truncated flow", t);
    bool last = j == n;
    bool ck = checkpoint && cfg.checkpoint_every > 0 && j % cfg.checkpoint_every == 0;
    if (last || j % cfg.monitor_every == 0 || ck) monitor(t);
    if (ck) checkpoint(t, cur);
  }
  if (n == 0) cur = u;
  rec.final_state = cur;
  return rec;
}

SpectralField flow(const SpectralField& u, const ModelParams& params, double t, double dt, Integrator integrator) {
  TruncatedFlow f(params, u.cutoff(), integrator);
  SpectralField out = u;
  f.advance(out, t, dt);
  return out;
}

double finite_difference_q(const SpectralField& u, const ModelParams& params, double h) {
  if (!(h > 0.0)) throw ParameterError("finite difference step must be > 0");
  Energetics e(params, u.cutoff());
  TruncatedFlow f(params, u.cutoff(), Integrator::IFRK4);
  auto energy_at = [&](double t) {
    SpectralField v = u;
    f.advance(v, t, std::abs(t) / 4.0);
    return e.modified_energy(v);
  };
  auto central = [&](double step) { return (energy_at(step) - energy_at(-step)) / (2.0 * step); };
  return (4.0 * central(0.5 * h) - central(h)) / 3.0;
}

ConvergenceResult convergence_study(const SpectralField& u, const ModelParams& params, const std::vector<int>& N_list,
                                    double t, double sigma, const FlowConfig& cfg) {
  if (N_list.empty()) throw ParameterError("convergence.N_list: must not be empty");
  ConvergenceResult res;
  res.N_ref = *std::max_element(N_list.begin(), N_list.end());
  if (u.cutoff() < res.N_ref) throw ParameterError("convergence: state must be stored to at least N_ref");
  long long n = step_count(t, cfg.dt);
  double h = n > 0 ? t / static_cast<double>(n) : 0.0;
  std::vector<long long> marks;
  for (long long j = 0; j <= n; ++j)
    if (j == 0 || j == n || j % cfg.monitor_every == 0) marks.push_back(j);
  for (long long j : marks) res.times.push_back(h * static_cast<double>(j));

  auto run = [&](int N) {
    ModelParams p = params;
    p.N = N;
    TruncatedFlow f(p, u.cutoff(), cfg.integrator, 0);
    std::vector<SpectralField> traj;
    auto v = f.gather(u);
    std::size_t m = 0;
    for (long long j = 0; j <= n; ++j) {
      if (j > 0) {
        f.step(v, h);
        if (!finite(v)) throw IntegrationError("non-finite state in truncated flow", h * static_cast<double>(j));
      }
      if (m < marks.size() && marks[m] == j) {
        SpectralField s = linear_flow(u, h * static_cast<double>(j));
        f.scatter(v, s);
        traj.push_back(std::move(s));
        ++m;
      }
    }
    return traj;
  };
  auto ref = run(res.N_ref);
  for (const auto& s : ref) res.sup_h_sigma_ref = std::max(res.sup_h_sigma_ref, std::sqrt(sobolev_norm_sq(s, sigma)));
  for (int N : N_list) {
    auto traj = N == res.N_ref ? ref : run(N);
    ConvergenceRow row;
    row.N = N;
    std::vector<double> series;
    for (std::size_t i = 0; i < traj.size(); ++i) {
      SpectralField d = traj[i];
      for (std::size_t k = 0; k < d.size(); ++k) d[k] -= ref[i][k];
      double dist = std::sqrt(sobolev_norm_sq(d, sigma));
      series.push_back(dist);
      row.sup_distance = std::max(row.sup_distance, dist);
      row.sup_h_sigma = std::max(row.sup_h_sigma, std::sqrt(sobolev_norm_sq(traj[i], sigma)));
    }
    res.distance_series.push_back(std::move(series));
    res.rows.push_back(row);
  }
  return res;
}

}  // namespace qnls
