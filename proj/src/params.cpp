#include "qnls/params.hpp"

#include <cmath>
#include <set>

#include "qnls/errors.hpp"

namespace qnls {

namespace {
void require(bool ok, const std::string& field, const std::string& msg) {
  if (!ok) throw ParameterError("model." + field + ": " + msg);
}
}  // namespace

void ModelParams::validate() const {
  require(dim >= 1 && dim <= 3, "dim", "must be 1, 2 or 3");
  require(std::isfinite(s) && s >= 1.0, "s", "must be >= 1");
  require(N >= 1, "N", "must be a positive integer");
  require(std::isfinite(delta0) && delta0 > 0.0 && delta0 < 2.0 / 3.0, "delta0", "must satisfy 0 < delta0 < 2/3");
  require(std::isfinite(theta) && theta > 0.0 && theta <= delta0 / 2.0 + 1e-12, "theta", "must satisfy 0 < theta <= delta0/2");
  require(std::isfinite(sigma) && sigma < s - dim / 2.0, "sigma", "must satisfy sigma < s - d/2");
  require(std::isfinite(R) && R > 0.0, "R", "must be > 0");
  try {
    resonance_cutoff.validate();
  } catch (const ParameterError& e) {
    require(false, "resonance_cutoff", e.what());
  }
  try {
    frequency_cutoff.validate();
  } catch (const ParameterError& e) {
    require(false, "frequency_cutoff", e.what());
  }
}

double ModelParams::chi_N_norm(double knorm) const {
  if (untruncated) return 1.0;
  return frequency_cutoff(knorm / static_cast<double>(N));
}

double ModelParams::chi_N(const Mode& k) const { return chi_N_norm(k.norm()); }

ModeSet ModelParams::active_band(int store_cutoff) const {
  if (untruncated) {
    int c = store_cutoff >= 0 ? store_cutoff : N;
    return ModeSet::ball(c, dim);
  }
  std::vector<Mode> out;
  for (const auto& m : modes_within(N * frequency_cutoff.support, dim)) {
    if (chi_N(m) > 0.0) out.push_back(m);
  }
  return ModeSet(dim, std::move(out));
}

void to_json(nlohmann::json& j, const CutoffProfile& p) { j = {{"plateau", p.plateau}, {"support", p.support}}; }

void from_json(const nlohmann::json& j, CutoffProfile& p) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() != "plateau" && it.key() != "support") throw ParameterError("unknown cutoff field '" + it.key() + "'");
  }
  if (j.contains("plateau")) p.plateau = j.at("plateau").get<double>();
  if (j.contains("support")) p.support = j.at("support").get<double>();
}

void to_json(nlohmann::json& j, const ModelParams& p) {
  j = {{"dim", p.dim},
       {"s", p.s},
       {"sigma", p.sigma},
       {"N", p.N},
       {"delta0", p.delta0},
       {"theta", p.theta},
       {"R", p.R},
       {"resonance_cutoff", p.resonance_cutoff},
       {"frequency_cutoff", p.frequency_cutoff},
       {"untruncated", p.untruncated}};
}

void from_json(const nlohmann::json& j, ModelParams& p) {
  static const std::set<std::string> known = {"dim",   "s", "sigma",           "N",
                                              "delta0", "theta", "R", "resonance_cutoff",
                                              "frequency_cutoff", "untruncated"};
  if (!j.is_object()) throw ParameterError("model: expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ParameterError("model." + it.key() + ": unknown field");
  }
  auto get = [&](const char* key, auto& dst) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(dst);
    } catch (const nlohmann::json::exception& e) {
      throw ParameterError(std::string("model.") + key + ": " + e.what());
    }
  };
  bool sigma_given = j.contains("sigma");
  get("dim", p.dim);
  get("s", p.s);
  get("sigma", p.sigma);
  get("N", p.N);
  get("delta0", p.delta0);
  get("theta", p.theta);
  get("R", p.R);
  get("resonance_cutoff", p.resonance_cutoff);
  get("frequency_cutoff", p.frequency_cutoff);
  get("untruncated", p.untruncated);
  if (!sigma_given) p.sigma = p.s - 1.6;
}

}  // namespace qnls
