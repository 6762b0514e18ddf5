#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qnls/config.hpp"
#include "qnls/dynamics.hpp"
#include "qnls/energetics.hpp"
#include "qnls/errors.hpp"
#include "qnls/experiments.hpp"
#include "qnls/io.hpp"
#include "qnls/randomfield.hpp"
#include "qnls/resonance.hpp"
#include "qnls/rng.hpp"

#ifndef QNLS_GIT_DESCRIBE
#define QNLS_GIT_DESCRIBE "unknown"
#endif

using namespace qnls;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void log_line(const std::string& level, const std::string& msg, json extra = json::object()) {
  extra["level"] = level;
  extra["ts"] = utc_timestamp();
  extra["msg"] = msg;
  std::cerr << extra.dump() << "\n";
}

struct Globals {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  std::string input;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<unsigned long long> budget;
};

RunConfig resolve(const Globals& g) {
  RunConfig c = load_config(g.config, g.sets);
  if (!g.out.empty()) c.output = g.out;
  if (!g.input.empty()) c.input = g.input;
  if (g.seed) {
    c.sampler.master_seed = *g.seed;
    c.mc.seed = *g.seed;
    c.chaos.seed = *g.seed;
  }
  if (g.threads) {
    if (*g.threads < 1) throw ParameterError("--threads: must be >= 1");
    c.threads = *g.threads;
    c.mc.threads = *g.threads;
  }
  if (g.budget) c.budget = *g.budget;
  return c;
}

std::string out_path(const RunConfig& c, const std::string& name) { return (fs::path(c.output) / name).string(); }

void write_manifest(const RunConfig& c, const std::string& command, double wall, const std::vector<std::string>& outputs,
                    json extra = json::object()) {
  json m = {{"command", command},
            {"config", c.to_json()},
            {"seeds", {{"sampler", c.sampler.master_seed}, {"mc", c.mc.seed}, {"chaos", c.chaos.seed}}},
            {"prng_algo", kPrngAlgorithm},
            {"git_describe", QNLS_GIT_DESCRIBE},
            {"created", utc_timestamp()},
            {"wall_seconds", wall},
            {"outputs", outputs}};
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  write_file_atomic(out_path(c, "manifest.json"), m.dump(2) + "\n");
}

// Input state: a saved field, or a fresh draw from the sampler section.
SpectralField input_state(const RunConfig& c) {
  if (!c.input.empty()) {
    if (!fs::exists(c.input)) throw ParameterError("input: '" + c.input + "' does not exist");
    return load_field(c.input);
  }
  SamplerSpec sp = c.sampler;
  sp.params = c.model;
  return sample_mu_s(sp);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <class T>
T audit_get(const json& a, const std::string& key, T dflt) {
  if (!a.contains(key)) return dflt;
  try {
    return a.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParameterError("audit." + key + ": " + e.what());
  }
}

void check_audit_keys(const json& a, std::initializer_list<const char*> keys) {
  for (auto it = a.begin(); it != a.end(); ++it) {
    bool ok = false;
    for (const char* k : keys) ok = ok || it.key() == k;
    if (!ok) throw ParameterError("audit." + it.key() + ": unknown key");
  }
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + std::to_string(v[i]);
  return s;
}

int cmd_sample(const RunConfig& c) {
  SamplerSpec sp = c.sampler;
  sp.params = c.model;
  write_ensemble(c.output, sp, c.sample_count, c.threads);
  std::cout << "wrote " << c.sample_count << " samples to " << c.output << "\n";
  return 0;
}

int cmd_evolve(const RunConfig& c) {
  auto t0 = std::chrono::steady_clock::now();
  ensure_directory(c.output);
  auto u = input_state(c);
  std::vector<std::string> outs{"trajectory.csv", "final.spf"};
  auto rec = evolve(u, c.model, c.flow, [&](double t, const SpectralField& f) {
    char name[64];
    std::snprintf(name, sizeof name, "checkpoint_%+.6f.spf", t);
    save_field(f, out_path(c, name));
    outs.push_back(name);
  });
  write_file_atomic(out_path(c, "trajectory.csv"), rec.to_csv().str());
  save_field(rec.final_state, out_path(c, "final.spf"));
  write_manifest(c, "evolve", seconds_since(t0), outs);
  auto rel = [](double a, double b) { return b != 0.0 ? std::abs(a / b - 1.0) : std::abs(a); };
  std::cout << "evolved to t=" << rec.times.back() << "; mass drift " << rel(rec.mass.back(), rec.mass.front())
            << ", hamiltonian drift " << rel(rec.hamiltonian_N.back(), rec.hamiltonian_N.front()) << "\n";
  return 0;
}

int cmd_energy(const RunConfig& c, bool decompose) {
  auto t0 = std::chrono::steady_clock::now();
  ensure_directory(c.output);
  auto u = input_state(c);
  ReportOptions o;
  o.direct = decompose && c.energy_direct;
  o.budget = c.budget;
  EnergyReport rep;
  if (decompose) {
    rep = q_total(u, c.model, o);
  } else {
    // Energy only needs R_{s,N} and Q; skip the pairing sums.
    Energetics e(c.model, u.cutoff());
    Budget b(c.budget);
    auto w = e.weighted(u);
    auto fp = e.first_pass(w, &b);
    rep.params = c.model;
    rep.R_sN = fp.R_sN;
    rep.E_sN = 0.5 * triple_norm_sq(u, c.model.s) + fp.R_sN;
    rep.Q_sN = (-fp.R0 / 6.0 + fp.R1 / 2.0 - fp.R2 / 2.0).imag();
    rep.parts = {{"R0", fp.R0}, {"R1", fp.R1}, {"R2", fp.R2}};
    rep.counts["six_tuples"] = fp.tuples;
    rep.wall_seconds = seconds_since(t0);
  }
  std::string name = decompose ? "decompose.json" : "energy.json";
  write_file_atomic(out_path(c, name), rep.to_json().dump(2) + "\n");
  write_manifest(c, decompose ? "decompose" : "energy", seconds_since(t0), {name});
  std::cout << "E_sN=" << format_double(rep.E_sN) << " R_sN=" << format_double(rep.R_sN)
            << " Q_sN=" << format_double(rep.Q_sN) << "\n";
  if (decompose) {
    double worst = 0.0;
    for (const auto& [k, v] : rep.residuals) worst = std::max(worst, v);
    std::cout << "max identity residual " << format_double(worst) << "\n";
  }
  return 0;
}

int audit_counting(const RunConfig& c, std::vector<std::string>& outs, json& summary) {
  const json& a = c.audit;
  check_audit_keys(a, {"dim", "n", "shells", "iota", "K", "kappa", "families"});
  int dim = audit_get<int>(a, "dim", 3);
  Budget budget(c.budget);
  CsvTable t({"n", "iota", "shells", "K", "kappa", "count", "bound", "ratio"});
  if (a.contains("K")) {
    auto shells = audit_get<std::vector<int>>(a, "shells", {4, 4});
    auto iota = audit_get<std::vector<int>>(a, "iota", {1, -1});
    auto kv = audit_get<std::vector<int>>(a, "K", {1, 0, 0});
    long long kappa = audit_get<long long>(a, "kappa", 1);
    Mode K(dim);
    for (int i = 0; i < dim && i < static_cast<int>(kv.size()); ++i) K.k[i] = kv[i];
    auto r = counting_audit(static_cast<int>(shells.size()), shells, iota, K, kappa, {}, &budget);
    t.row().cell(shells.size()).cell(join(iota)).cell(join(shells)).cell(K.str()).cell(kappa).cell(r.count).cell(r.bound).cell(r.ratio);
    summary = {{"count", r.count}, {"bound", r.bound}, {"ratio", r.ratio}};
  } else {
    // families: [{"shells": [...], "iota": [...]}, ...]; each also run with doubled shells.
    json fams = a.value("families", json::array({{{"shells", {4, 4}}, {"iota", {1, -1}}}}));
    double worst = 0.0;
    bool nonincreasing = true;
    for (const auto& f : fams) {
      auto shells = f.at("shells").get<std::vector<int>>();
      auto iota = f.at("iota").get<std::vector<int>>();
      auto r = counting_family_max(dim, shells, iota, &budget);
      t.row().cell(shells.size()).cell(join(iota)).cell(join(shells)).cell(r.argmax_K.str()).cell(r.argmax_kappa)
          .cell(r.max_count).cell(r.bound).cell(r.ratio);
      worst = std::max(worst, r.ratio);
      if (f.value("double", true)) {
        std::vector<int> d2;
        for (int s : shells) d2.push_back(2 * s);
        auto r2 = counting_family_max(dim, d2, iota, &budget);
        t.row().cell(d2.size()).cell(join(iota)).cell(join(d2)).cell(r2.argmax_K.str()).cell(r2.argmax_kappa)
            .cell(r2.max_count).cell(r2.bound).cell(r2.ratio);
        worst = std::max(worst, r2.ratio);
        nonincreasing = nonincreasing && r2.ratio <= r.ratio;
      }
    }
    summary = {{"max_ratio", worst}, {"nonincreasing_under_doubling", nonincreasing}};
  }
  write_file_atomic(out_path(c, "counting.csv"), t.str());
  outs.push_back("counting.csv");
  return 0;
}

int audit_psi_bound(const RunConfig& c, std::vector<std::string>& outs, json& summary) {
  check_audit_keys(c.audit, {"kmax", "s_list"});
  int kmax = audit_get<int>(c.audit, "kmax", 20);
  auto s_list = audit_get<std::vector<double>>(c.audit, "s_list", {2.0, 10.0});
  Budget budget(c.budget);
  CsvTable t({"s", "kmax", "tuples", "max_ratio", "argmax"});
  for (double s : s_list) {
    auto r = psi_bound_audit_exhaustive(kmax, s, &budget);
    std::string arg;
    for (const auto& m : r.argmax) arg += (arg.empty() ? "" : " ") + m.str();
    t.row().cell(s).cell(kmax).cell(static_cast<unsigned long long>(r.tuples)).cell(r.max_ratio).cell(arg);
    summary[format_double(s)] = r.max_ratio;
  }
  write_file_atomic(out_path(c, "psi_bound.csv"), t.str());
  outs.push_back("psi_bound.csv");
  return 0;
}

int audit_psi_corrector(const RunConfig& c, std::vector<std::string>& outs, json& summary) {
  check_audit_keys(c.audit, {"kmax"});
  int kmax = audit_get<int>(c.audit, "kmax", 60);
  ModelParams p = c.model;
  p.dim = 1;
  CsvTable t({"corrector", "quantity", "bin_upper", "value"});
  for (int which = 0; which < 2; ++which) {
    const char* name = which == 0 ? "psi" : "psi_tilde";
    auto r = which == 0 ? audit_psi_corrector(kmax, p) : audit_psi_tilde(kmax, p);
    auto add = [&](const char* q, double v) { t.row().cell(name).cell(q).cell(std::string()).cell(v); };
    add("max_ratio", r.max_ratio);
    add("max_ratio_far", r.max_ratio_far);
    add("max_ratio_upper_half", r.max_ratio_upper_half);
    add("tuples", static_cast<double>(r.tuples));
    add("nonzero_near_band", static_cast<double>(r.nonzero_near_band));
    add("omega_zero", static_cast<double>(r.omega_zero));
    add("vanishing_checked", static_cast<double>(r.vanishing_checked));
    add("vanishing_max_abs", r.vanishing_max_abs);
    for (const auto& [edge, v] : r.dyadic_max) t.row().cell(name).cell("dyadic_max").cell(edge).cell(v);
    summary[name] = {{"max_ratio", r.max_ratio}, {"vanishing_max_abs", r.vanishing_max_abs}, {"tuples", r.tuples}};
  }
  write_file_atomic(out_path(c, "psi_corrector.csv"), t.str());
  outs.push_back("psi_corrector.csv");
  return 0;
}

int audit_chaos(const RunConfig& c, std::vector<std::string>& outs, json& summary) {
  auto r = chaos_audit(c.chaos);
  CsvTable t({"p", "norm", "ratio_to_p2", "kish_ess"});
  for (std::size_t j = 0; j < r.p.size(); ++j) t.row().cell(r.p[j]).cell(r.norm[j]).cell(r.ratio[j]).cell(r.ess[j]);
  write_file_atomic(out_path(c, "chaos.csv"), t.str());
  outs.push_back("chaos.csv");
  summary = {{"exponent", r.exponent}, {"ratio_4_2", r.ratio_4_2}, {"spec", c.chaos}};
  return 0;
}

int audit_dual_path(const RunConfig& c, std::vector<std::string>& outs, json& summary) {
  auto u = input_state(c);
  Energetics e(c.model, u.cutoff());
  Budget b(c.budget);
  auto w = e.weighted(u);
  auto fp = e.first_pass(w, &b);
  cplx r1 = e.R1_direct(w, &b), r2 = e.R2_direct(w, &b);
  auto rel = [](cplx a, cplx d) { return std::abs(d) > 0.0 ? std::abs(a - d) / std::abs(d) : std::abs(a - d); };
  summary = {{"R1_fast", {fp.R1.real(), fp.R1.imag()}}, {"R1_direct", {r1.real(), r1.imag()}},
             {"R2_fast", {fp.R2.real(), fp.R2.imag()}}, {"R2_direct", {r2.real(), r2.imag()}},
             {"R1_rel", rel(fp.R1, r1)},                {"R2_rel", rel(fp.R2, r2)}};
  write_file_atomic(out_path(c, "dual_path.json"), summary.dump(2) + "\n");
  outs.push_back("dual_path.json");
  return 0;
}

int cmd_audit(const RunConfig& c, const std::string& which) {
  auto t0 = std::chrono::steady_clock::now();
  ensure_directory(c.output);
  std::vector<std::string> outs;
  json summary = json::object();
  if (which == "counting") audit_counting(c, outs, summary);
  else if (which == "psi-bound") audit_psi_bound(c, outs, summary);
  else if (which == "psi-corrector") audit_psi_corrector(c, outs, summary);
  else if (which == "chaos") audit_chaos(c, outs, summary);
  else if (which == "dual-path") audit_dual_path(c, outs, summary);
  else throw ParameterError("audit: unknown audit '" + which + "'");
  write_manifest(c, "audit " + which, seconds_since(t0), outs, {{"summary", summary}});
  std::cout << which << ": " << summary.dump() << "\n";
  return 0;
}

int cmd_mc(const RunConfig& c, const std::string& which) {
  auto t0 = std::chrono::steady_clock::now();
  ensure_directory(c.output);
  ExperimentResult r;
  if (which == "moments") r = moment_growth(c.model, c.mc);
  else if (which == "weights") r = weight_integrability(c.model, c.mc);
  else if (which == "transport") r = measure_transport(c.model, c.mc, c.flow);
  else if (which == "pointwise-law") r = pointwise_law(c.model, c.mc, c.flow);
  else if (which == "convergence") r = convergence_experiment(c.model, c.mc, c.flow);
  else throw ParameterError("mc: unknown experiment '" + which + "'");
  std::vector<std::string> outs{"results.csv"};
  write_file_atomic(out_path(c, "results.csv"), r.table.to_csv().str());
  for (const auto& [name, table] : r.extra) {
    write_file_atomic(out_path(c, name), table.str());
    outs.push_back(name);
  }
  write_manifest(c, "mc " + which, seconds_since(t0), outs, {{"summary", r.summary}});
  std::cout << which << ": " << r.summary.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral toolkit for the frequency-truncated quintic NLS on the torus"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "JSON config file");
  app.add_option("--set", g.sets, "Dotted-path override key=value (repeatable)");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--input", g.input, "Input state (.spf or .json)");
  app.add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& v) { g.seed = v; }, "Master seed");
  app.add_option_function<int>("--threads", [&](const int& v) { g.threads = v; }, "Worker threads");
  app.add_option_function<unsigned long long>("--budget", [&](const unsigned long long& v) { g.budget = v; },
                                              "Enumeration budget (tuple visits)");

  std::string audit_which, mc_which;
  auto* sample = app.add_subcommand("sample", "Draw an ensemble from mu_s");
  auto* evolve_cmd = app.add_subcommand("evolve", "Run the truncated flow");
  auto* energy = app.add_subcommand("energy", "Modified energy and its derivative");
  auto* decompose = app.add_subcommand("decompose", "Full derivative decomposition with identity residuals");
  auto* audit = app.add_subcommand("audit", "Exhaustive audits");
  audit->add_option("which", audit_which, "counting | psi-bound | psi-corrector | chaos | dual-path")->required();
  auto* mc = app.add_subcommand("mc", "Monte Carlo experiments");
  mc->add_option("which", mc_which, "moments | weights | transport | pointwise-law | convergence")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig c = resolve(g);
    log_line("info", "start", {{"command", app.get_subcommands().front()->get_name()}, {"output", c.output}});
    int rc = 0;
    if (*sample) rc = cmd_sample(c);
    else if (*evolve_cmd) rc = cmd_evolve(c);
    else if (*energy) rc = cmd_energy(c, false);
    else if (*decompose) rc = cmd_energy(c, true);
    else if (*audit) rc = cmd_audit(c, audit_which);
    else if (*mc) rc = cmd_mc(c, mc_which);
    log_line("info", "done");
    return rc;
  } catch (const Error& e) {
    json err = {{"error", {{"kind", e.kind()}, {"message", e.what()}, {"exit_code", e.exit_code()}}}};
    if (auto* ie = dynamic_cast<const IntegrationError*>(&e)) err["error"]["time"] = ie->time();
    std::cout << err.dump() << "\n";
    log_line("error", e.what(), {{"kind", e.kind()}});
    return e.exit_code();
  } catch (const std::exception& e) {
    json err = {{"error", {{"kind", "internal"}, {"message", e.what()}, {"exit_code", 1}}}};
    std::cout << err.dump() << "\n";
    log_line("error", e.what(), {{"kind", "internal"}});
    return 1;
  }
}
