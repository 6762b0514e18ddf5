#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qnls/dynamics.hpp"
#include "qnls/io.hpp"
#include "qnls/params.hpp"
#include "qnls/randomfield.hpp"

namespace qnls {

struct MCConfig {
  std::size_t ensemble_size = 1000;
  std::vector<double> p_grid{2, 4, 8, 16, 32, 64};
  std::vector<double> t_grid{0.5};
  double R = 10.0;
  std::uint64_t seed = 42;
  int n_low = 0;   // 0 means N
  int n_tail = 0;  // 0 means N
  int bootstrap = 200;
  int threads = 1;
  // Transport set: {|u_k| <= r} for k = set_mode, intersected with the H^sigma ball of radius R.
  std::vector<int> set_mode{1};
  std::vector<double> set_radii{0.2, 0.1, 0.05};
  std::vector<int> N_list{2, 4, 8, 16};
  int N_ref = 32;
  std::vector<int> tail_levels{8, 16};
  double t0 = 0.5;
  std::vector<double> x0{0.0};
  int histogram_bins = 40;
  // Independent initial data in the convergence study.
  int trajectories = 3;

  void validate() const;
};

void to_json(nlohmann::json& j, const MCConfig& c);
void from_json(const nlohmann::json& j, MCConfig& c);

// Long-format rows: experiment, quantity, N, p, t, r, value, ci_lo, ci_hi, note.
class ResultTable {
 public:
  struct Row {
    std::string experiment;
    std::string quantity;
    std::optional<double> N, p, t, r;
    double value = 0.0;
    std::optional<double> ci_lo, ci_hi;
    std::string note;
  };
  void add(Row r) { rows_.push_back(std::move(r)); }
  const std::vector<Row>& rows() const { return rows_; }
  // First row matching experiment/quantity and the given coordinates.
  const Row* find(const std::string& quantity, std::optional<double> N = {}, std::optional<double> p = {},
                  std::optional<double> t = {}, std::optional<double> r = {}) const;
  CsvTable to_csv() const;

 private:
  std::vector<Row> rows_;
};

struct ExperimentResult {
  ResultTable table;
  nlohmann::json summary = nlohmann::json::object();
  // Extra CSV outputs keyed by file name (e.g. histograms).
  std::vector<std::pair<std::string, CsvTable>> extra;
};

// Per-p L^p norms of masked samples with bootstrap CIs and the fitted slope of
// log norm against log p over the upper half of the grid.
struct MomentTable {
  std::vector<double> p;
  std::vector<double> norm, ci_lo, ci_hi;
  std::vector<double> kish_ess;
  std::vector<bool> reliable;
  double beta = 0.0, beta_lo = 0.0, beta_hi = 0.0;
  std::size_t inside = 0;
  bool empty_ball = false;
};

MomentTable moment_table(const std::vector<double>& values, const std::vector<bool>& mask,
                         const std::vector<double>& p_grid, int bootstrap, std::uint64_t seed);

double kish_ess(const std::vector<double>& weights);
// Least-squares slope of y against x.
double ls_slope(const std::vector<double>& x, const std::vector<double>& y);

// Wilson score interval for k successes in n trials.
std::pair<double, double> wilson_interval(std::size_t k, std::size_t n, double z = 1.959963984540054);

// Kolmogorov-Smirnov statistics and asymptotic p-values.
struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};
double kolmogorov_q(double lambda);
KsResult ks_one_sample_normal(std::vector<double> x, double variance);
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

ExperimentResult moment_growth(const ModelParams& params, const MCConfig& mc);

struct ChaosSpec {
  std::string form = "monomial";  // monomial | linear | constant
  int degree = 1;
  int coordinates = 0;  // linear forms: number of Gaussians (0 means 8)
  std::vector<double> p_grid{2, 4, 8, 16, 32, 64, 128, 256, 512};
  std::size_t samples = 100000;
  double temper = 0.9;   // fraction of the optimal radial tilt in the proposal
  std::uint64_t seed = 42;
};
void to_json(nlohmann::json& j, const ChaosSpec& c);
void from_json(const nlohmann::json& j, ChaosSpec& c);

struct ChaosResult {
  std::vector<double> p, norm, ratio, ess;
  double exponent = 0.0;
  double ratio_4_2 = 0.0;
};
ChaosResult chaos_audit(const ChaosSpec& spec);

ExperimentResult weight_integrability(const ModelParams& params, const MCConfig& mc);
ExperimentResult measure_transport(const ModelParams& params, const MCConfig& mc, const FlowConfig& flow);
ExperimentResult pointwise_law(const ModelParams& params, const MCConfig& mc, const FlowConfig& flow);
ExperimentResult convergence_experiment(const ModelParams& params, const MCConfig& mc, const FlowConfig& flow);

// Variance of Re u(x) under mu_s restricted to stored modes: sum 1/(1+|k|^{2s}) / 2.
double pointwise_real_variance(int dim, int cutoff, double s);

// exp(|R|)-type weights in log space: log mean exp(a_i) over masked samples.
double log_mean_exp(const std::vector<double>& a, const std::vector<bool>& mask);

}  // namespace qnls
