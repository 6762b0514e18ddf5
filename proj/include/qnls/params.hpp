#pragma once

#include <json.hpp>

#include "qnls/lattice.hpp"

namespace qnls {

struct ModelParams {
  int dim = 1;
  double s = 10.0;
  double sigma = 8.4;
  int N = 3;
  double delta0 = 0.6;
  double theta = 0.3;
  double R = 10.0;
  CutoffProfile resonance_cutoff = CutoffProfile::resonance_default();
  CutoffProfile frequency_cutoff = CutoffProfile::frequency_default();
  // chi_N == 1 on every stored mode.
  bool untruncated = false;

  // Throws ParameterError naming the offending field.
  void validate() const;

  // chi_N(k); zero outside |k| < N unless untruncated.
  double chi_N(const Mode& k) const;
  double chi_N_norm(double knorm) const;
  // Modes with chi_N > 0 (the band the truncated nonlinearity sees).
  ModeSet active_band(int store_cutoff = -1) const;
};

void to_json(nlohmann::json& j, const CutoffProfile& p);
void from_json(const nlohmann::json& j, CutoffProfile& p);
void to_json(nlohmann::json& j, const ModelParams& p);
// Missing keys keep defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, ModelParams& p);

}  // namespace qnls
