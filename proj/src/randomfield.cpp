#include "qnls/randomfield.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "qnls/errors.hpp"
#include "qnls/io.hpp"
#include "qnls/parallel.hpp"
#include "qnls/rng.hpp"

namespace qnls {

void SamplerSpec::validate() const {
  params.validate();
  if (n_low < 0) throw ParameterError("sampler.n_low: must be >= 0");
  if (n_tail < n_low) throw ParameterError("sampler.n_tail: must be >= n_low");
}

void to_json(nlohmann::json& j, const SamplerSpec& s) {
  j = {{"n_low", s.n_low}, {"n_tail", s.n_tail}, {"master_seed", s.master_seed}, {"stream_id", s.stream_id}};
}

void from_json(const nlohmann::json& j, SamplerSpec& s) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    if (k != "n_low" && k != "n_tail" && k != "master_seed" && k != "stream_id") {
      throw ParameterError("sampler." + k + ": unknown field");
    }
  }
  try {
    if (j.contains("n_low")) s.n_low = j.at("n_low").get<int>();
    if (j.contains("n_tail")) s.n_tail = j.at("n_tail").get<int>();
    if (j.contains("master_seed")) s.master_seed = j.at("master_seed").get<std::uint64_t>();
    if (j.contains("stream_id")) s.stream_id = j.at("stream_id").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("sampler: ") + e.what());
  }
}

namespace {
std::uint32_t mode_code(const Mode& m) {
  std::uint32_t code = 0;
  for (int a = 0; a < 3; ++a) code = code * 1024u + static_cast<std::uint32_t>(m.k[a] + 512);
  return code;
}

cplx draw(const Mode& m, std::uint64_t seed, std::uint64_t stream, std::uint32_t block) {
  Philox4x32::Counter ctr{mode_code(m), block, static_cast<std::uint32_t>(stream),
                          static_cast<std::uint32_t>(stream >> 32)};
  Philox4x32::Key key{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  return gaussian_from_block(Philox4x32::block(ctr, key));
}

double amplitude(const Mode& m, double s) {
  return 1.0 / std::sqrt(1.0 + std::pow(static_cast<double>(m.norm2()), s));
}
}  // namespace

SpectralField sample_mu_s(const SamplerSpec& spec) {
  spec.validate();
  if (spec.n_tail > 511) throw ParameterError("sampler.n_tail: at most 511");
  SpectralField u(spec.params.dim, spec.n_tail);
  const long long low2 = static_cast<long long>(spec.n_low) * spec.n_low;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const Mode& m = u.modes()[i];
    std::uint32_t block = m.norm2() <= low2 ? 0u : 1u;
    u[i] = draw(m, spec.master_seed, spec.stream_id, block) * amplitude(m, spec.params.s);
  }
  return u;
}

SpectralField resample_block(const SpectralField& u, const SamplerSpec& spec, bool tail, std::uint64_t stream_id) {
  SpectralField out = u;
  const long long low2 = static_cast<long long>(spec.n_low) * spec.n_low;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Mode& m = out.modes()[i];
    bool in_tail = m.norm2() > low2;
    if (in_tail != tail) continue;
    out[i] = draw(m, spec.master_seed, stream_id, tail ? 1u : 0u) * amplitude(m, spec.params.s);
  }
  return out;
}

CovarianceReport covariance_report(const std::vector<SpectralField>& ensemble, double s) {
  if (ensemble.size() < 2) throw ParameterError("covariance_report needs at least 2 samples");
  const auto& ref = ensemble.front();
  const std::size_t n = ensemble.size();
  const std::size_t m = ref.size();
  for (const auto& f : ensemble) {
    if (f.dim() != ref.dim() || f.cutoff() != ref.cutoff()) throw ParameterError("ensemble fields differ in shape");
  }
  std::vector<cplx> mean(m);
  for (const auto& f : ensemble)
    for (std::size_t i = 0; i < m; ++i) mean[i] += f[i];
  for (auto& v : mean) v /= static_cast<double>(n);

  CovarianceReport rep;
  rep.samples = n;
  std::vector<double> var(m, 0.0);
  for (const auto& f : ensemble)
    for (std::size_t i = 0; i < m; ++i) var[i] += std::norm(f[i] - mean[i]);
  for (std::size_t i = 0; i < m; ++i) {
    var[i] /= static_cast<double>(n - 1);
    const Mode& k = ref.modes()[i];
    rep.modes.push_back({k, var[i], 1.0 / (1.0 + std::pow(static_cast<double>(k.norm2()), s))});
  }
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a + 1; b < m; ++b) {
      if (var[a] <= 0.0 || var[b] <= 0.0) continue;
      cplx c = 0.0;
      for (const auto& f : ensemble) c += (f[a] - mean[a]) * std::conj(f[b] - mean[b]);
      c /= static_cast<double>(n - 1);
      rep.max_offdiag_corr = std::max(rep.max_offdiag_corr, std::abs(c) / std::sqrt(var[a] * var[b]));
    }
  }
  return rep;
}

void write_ensemble(const std::string& dir, const SamplerSpec& spec, std::size_t count, int threads) {
  spec.validate();
  ensure_directory(dir);
  parallel_for(count, threads, [&](std::size_t i) {
    char name[64];
    std::snprintf(name, sizeof name, "sample_%06zu.spf", i);
    save_field(sample_mu_s(spec.with_stream(spec.stream_id + i)), (std::filesystem::path(dir) / name).string());
  });
  nlohmann::json man = {{"spec", {{"params", spec.params}, {"sampler", spec}}},
                        {"prng_algo", kPrngAlgorithm},
                        {"count", count},
                        {"stream_rule", "sample i uses stream_id + i"},
                        {"created", utc_timestamp()}};
  write_file_atomic((std::filesystem::path(dir) / "manifest.json").string(), man.dump(2) + "\n");
}

std::vector<SpectralField> read_ensemble(const std::string& dir) {
  auto man = nlohmann::json::parse(read_file((std::filesystem::path(dir) / "manifest.json").string()));
  std::size_t count = man.at("count").get<std::size_t>();
  std::vector<SpectralField> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "sample_%06zu.spf", i);
    out.push_back(load_field((std::filesystem::path(dir) / name).string()));
  }
  return out;
}

}  // namespace qnls
