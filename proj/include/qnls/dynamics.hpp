#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "qnls/grid.hpp"
#include "qnls/io.hpp"
#include "qnls/params.hpp"
#include "qnls/spectral_field.hpp"

namespace qnls {

enum class Integrator { IFRK4, StrangSplit };

const char* to_string(Integrator i);
Integrator integrator_from_string(const std::string& s);

struct FlowConfig {
  double dt = 1e-3;
  double t_end = 1.0;  // negative runs the flow backwards
  Integrator integrator = Integrator::IFRK4;
  int dealias_M = 0;  // 0 picks the smallest FFT-friendly size >= 6N+1
  int monitor_every = 100;
  bool record_energy = false;
  int checkpoint_every = 0;  // steps; 0 disables

  // Throws ParameterError; band_radius is the largest coordinate of the active band.
  void validate(int band_radius) const;
};

void to_json(nlohmann::json& j, const FlowConfig& c);
void from_json(const nlohmann::json& j, FlowConfig& c);

struct TrajectoryRecord {
  std::vector<double> times;
  std::vector<double> mass;
  std::vector<double> hamiltonian_N;
  std::vector<double> h_sigma_norm;
  std::vector<double> e_sN;  // empty unless requested
  SpectralField final_state;

  CsvTable to_csv() const;
};

// u_k -> e^{-i|k|^2 t} u_k
SpectralField linear_flow(const SpectralField& u, double t);

// Stepper for the truncated flow on one storage level.
class TruncatedFlow {
 public:
  TruncatedFlow(const ModelParams& params, int store_cutoff, Integrator integrator, int dealias_M = 0);

  const ModeSet& band() const { return band_; }
  // Advances the band coefficients by dt (may be negative).
  void step(std::vector<cplx>& v, double dt);
  // Advances a stored field by t using steps of at most |dt|. Tail modes move exactly.
  void advance(SpectralField& u, double t, double dt);

  std::vector<cplx> gather(const SpectralField& u) const;
  void scatter(const std::vector<cplx>& v, SpectralField& u) const;

 private:
  void rhs(const std::vector<cplx>& v, std::vector<cplx>& out);
  void rotate(std::vector<cplx>& v, double t) const;

  ModelParams params_;
  ModeSet band_;
  std::vector<int> n2_;
  std::vector<std::size_t> store_index_;
  Integrator integrator_;
  std::unique_ptr<QuinticOperator> op_;
  std::vector<cplx> k1_, k2_, k3_, k4_, tmp_, base_;
};

using CheckpointFn = std::function<void(double, const SpectralField&)>;

TrajectoryRecord evolve(const SpectralField& u, const ModelParams& params, const FlowConfig& cfg,
                        const CheckpointFn& checkpoint = {});

// Phi_N(t) u without monitors.
SpectralField flow(const SpectralField& u, const ModelParams& params, double t, double dt = 1e-3,
                   Integrator integrator = Integrator::IFRK4);

// Richardson-extrapolated central difference of E_{s,N} along the truncated flow.
double finite_difference_q(const SpectralField& u, const ModelParams& params, double h = 1e-3);

struct ConvergenceRow {
  int N = 0;
  double sup_distance = 0.0;
  double sup_h_sigma = 0.0;
};

struct ConvergenceResult {
  int N_ref = 0;
  double sup_h_sigma_ref = 0.0;
  std::vector<double> times;
  std::vector<ConvergenceRow> rows;
  std::vector<std::vector<double>> distance_series;  // per N, per time
};

// Sup over a shared time grid of H^sigma distances to the N_ref = max(N_list) trajectory.
ConvergenceResult convergence_study(const SpectralField& u, const ModelParams& params, const std::vector<int>& N_list,
                                    double t, double sigma, const FlowConfig& cfg);

}  // namespace qnls
