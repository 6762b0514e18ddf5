#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "qnls/params.hpp"
#include "qnls/spectral_field.hpp"

namespace qnls {

struct SamplerSpec {
  ModelParams params;
  int n_low = 3;
  int n_tail = 8;
  std::uint64_t master_seed = 42;
  std::uint64_t stream_id = 0;

  void validate() const;
  SamplerSpec with_stream(std::uint64_t id) const {
    SamplerSpec c = *this;
    c.stream_id = id;
    return c;
  }
};

void to_json(nlohmann::json& j, const SamplerSpec& s);
void from_json(const nlohmann::json& j, SamplerSpec& s);

// Each mode's Gaussian depends only on (seed, stream, block, mode), so
// storage level does not change shared coefficients.
SpectralField sample_mu_s(const SamplerSpec& spec);

// Redraws one block (low: |k| <= n_low, tail: the rest) from another stream.
SpectralField resample_block(const SpectralField& u, const SamplerSpec& spec, bool tail, std::uint64_t stream_id);

struct ModeVariance {
  Mode k;
  double empirical = 0.0;
  double target = 0.0;
};

struct CovarianceReport {
  std::vector<ModeVariance> modes;
  double max_offdiag_corr = 0.0;
  std::size_t samples = 0;
};

CovarianceReport covariance_report(const std::vector<SpectralField>& ensemble, double s);

// Directory of sample_NNNNNN.spf plus manifest.json.
void write_ensemble(const std::string& dir, const SamplerSpec& spec, std::size_t count, int threads = 1);
std::vector<SpectralField> read_ensemble(const std::string& dir);

}  // namespace qnls
