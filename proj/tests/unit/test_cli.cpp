#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "qnls/config.hpp"
#include "qnls/errors.hpp"
#include "qnls/io.hpp"
#include "support.hpp"

using namespace qnls;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run_cli(const std::string& args) {
  std::string cmd = std::string(QNLS_CLI) + " " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("qnls_cli_" + name);
  fs::remove_all(p);
  return p;
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("dotted overrides") {
    nlohmann::json doc = nlohmann::json::object();
    apply_override(doc, "model.N=5");
    apply_override(doc, "flow.integrator=StrangSplit");
    apply_override(doc, "mc.p_grid=[2,4]");
    CHECK(doc["model"]["N"] == 5);
    CHECK(doc["flow"]["integrator"] == "StrangSplit");
    CHECK(doc["mc"]["p_grid"].size() == 2);
    CHECK_THROWS_AS(apply_override(doc, "noequals"), ParameterError);
    CHECK_THROWS_AS(apply_override(doc, "model..N=1"), ParameterError);
    auto c = config_from_json(doc);
    CHECK(c.model.N == 5);
    CHECK(c.flow.integrator == Integrator::StrangSplit);
  }

  TEST_CASE("defaults and round trip") {
    auto c = parse_config("");
    CHECK(c.model.s == 10.0);
    CHECK(c.model.theta == 0.3);
    auto again = config_from_json(c.to_json());
    CHECK(again.to_json() == c.to_json());
  }

  TEST_CASE("diagnostics") {
    try {
      parse_config("{\n  \"model\": {\n    \"N\": 3,,\n  }\n}");
      FAIL("expected a syntax error");
    } catch (const ParameterError& e) {
      std::string m = e.what();
      CHECK(m.find("line 3") != std::string::npos);
      CHECK(m.find("column") != std::string::npos);
    }
    try {
      parse_config(R"({"model": {"theta": 0.5}})");
      FAIL("expected a parameter error");
    } catch (const ParameterError& e) {
      CHECK(std::string(e.what()).find("theta") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config(R"({"modle": {}})"), ParameterError);
    CHECK_THROWS_AS(parse_config(R"({"model": {"N": "three"}})"), ParameterError);
    CHECK_THROWS_AS(parse_config(R"({"flow": {"dt": -1}})"), ParameterError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ParameterError);
  }
}

TEST_SUITE("cli") {
  TEST_CASE("energy on the zero field") {
    auto out = scratch("zero");
    auto r = run_cli("energy --input " QNLS_TEST_DATA "/zero_field.json --out " + out.string());
    REQUIRE(r.code == 0);
    auto j = read_json(out / "energy.json");
    CHECK(j["E_sN"] == 0.0);
    CHECK(j["R_sN"] == 0.0);
    CHECK(j["Q_sN"] == 0.0);
    for (auto& [k, v] : j["parts"].items()) {
      CHECK(v["re"] == 0.0);
      CHECK(v["im"] == 0.0);
    }
    auto m = read_json(out / "manifest.json");
    for (auto key : {"command", "config", "seeds", "prng_algo", "git_describe", "created", "wall_seconds", "outputs"})
      CHECK(m.contains(key));
    fs::remove_all(out);
  }

  TEST_CASE("decompose matches the golden file") {
    auto out = scratch("golden");
    auto r = run_cli("decompose --seed 42 --set model.N=3 --out " + out.string());
    REQUIRE(r.code == 0);
    auto j = read_json(out / "decompose.json");
    auto g = read_json(QNLS_TEST_DATA "/decompose_seed42.json");
    for (auto& [k, v] : j["residuals"].items()) CHECK(v.get<double>() <= 1e-10);
    CHECK(testing::rel(j["Q_sN"].get<double>(), g["Q_sN"].get<double>()) < 1e-12);
    CHECK(testing::rel(j["E_sN"].get<double>(), g["E_sN"].get<double>()) < 1e-12);
    for (auto& [k, v] : g["parts"].items()) {
      std::complex<double> a(v["re"].get<double>(), v["im"].get<double>());
      std::complex<double> b(j["parts"][k]["re"].get<double>(), j["parts"][k]["im"].get<double>());
      CHECK_MESSAGE(std::abs(a - b) <= 1e-12 * std::max(std::abs(a), 1e-300), k);
    }
    CHECK(j["counts"] == g["counts"]);
    fs::remove_all(out);
  }

  TEST_CASE("transport at t = 0 and reproducible reruns") {
    auto a = scratch("tr_a"), b = scratch("tr_b");
    std::string args = "mc transport --set mc.ensemble_size=200 --set mc.t_grid=[0.0,0.1] --set model.N=3 --out ";
    REQUIRE(run_cli(args + a.string()).code == 0);
    REQUIRE(run_cli(args + b.string()).code == 0);
    auto m = read_json(a / "manifest.json");
    auto counts = m["summary"]["per_t"][0]["counts"];
    REQUIRE(counts.size() == 3);
    for (auto& c : counts) CHECK(c["base"] == c["image"]);
    CHECK(read_file((a / "results.csv").string()) == read_file((b / "results.csv").string()));
    fs::remove_all(a);
    fs::remove_all(b);
  }

  TEST_CASE("exit codes and error documents") {
    auto out = scratch("errors");
    auto bad = run_cli("energy --set model.theta=0.5 --out " + out.string());
    CHECK(bad.code == 2);
    auto e = nlohmann::json::parse(bad.out);
    CHECK(e["error"]["kind"] == "parameter");
    CHECK(e["error"]["exit_code"] == 2);

    auto budget = run_cli("decompose --budget 50 --out " + out.string());
    CHECK(budget.code == 3);
    CHECK(nlohmann::json::parse(budget.out)["error"]["kind"] == "budget_exceeded");

    fs::create_directories(out);
    auto big = out / "big.json";
    std::ofstream(big) << R"({"dim": 1, "cutoff": 2, "modes": [[[0], 40.0, 0.0]]})";
    auto blow = run_cli("evolve --input " + big.string() + " --set model.N=2 --set flow.dt=0.5 --set flow.t_end=2 --out " +
                        (out / "ev").string());
    CHECK(blow.code == 4);
    auto bj = nlohmann::json::parse(blow.out);
    CHECK(bj["error"]["kind"] == "integration");
    CHECK(bj["error"].contains("time"));

    auto missing = run_cli("energy --input /nonexistent.spf --out " + out.string());
    CHECK(missing.code == 2);

    auto cfg = out / "broken.json";
    std::ofstream(cfg) << "{\n  \"model\": {\"N\": }\n}\n";
    auto syn = run_cli("energy --config " + cfg.string() + " --out " + out.string());
    CHECK(syn.code == 2);
    CHECK(nlohmann::json::parse(syn.out)["error"]["message"].get<std::string>().find("line 2") != std::string::npos);
    fs::remove_all(out);
  }

  TEST_CASE("evolve writes a trajectory and checkpoints") {
    auto out = scratch("evolve");
    auto r = run_cli("evolve --set model.N=3 --set flow.t_end=0.05 --set flow.monitor_every=10 "
                     "--set flow.checkpoint_every=25 --out " +
                     out.string());
    REQUIRE(r.code == 0);
    auto csv = read_file((out / "trajectory.csv").string());
    CHECK(csv.rfind("time,mass,hamiltonian_N,h_sigma_norm", 0) == 0);
    CHECK(fs::exists(out / "final.spf"));
    std::size_t spf = 0;
    for (auto& e : fs::recursive_directory_iterator(out))
      if (e.path().extension() == ".spf") ++spf;
    CHECK(spf >= 2);
    fs::remove_all(out);
  }

  TEST_CASE("sample and audits") {
    auto out = scratch("misc");
    REQUIRE(run_cli("sample --set sampler.count=3 --out " + out.string()).code == 0);
    CHECK(fs::exists(out / "manifest.json"));
    auto c = run_cli("audit counting --set audit.K=[1,0,0] --set audit.kappa=1 --set audit.shells=[4,4] "
                     "--set audit.iota=[1,-1] --set model.dim=3 --set model.sigma=8 --out " +
                     (out / "c").string());
    REQUIRE(c.code == 0);
    auto csv = read_file((out / "c" / "counting.csv").string());
    CHECK(csv.find(",32,16,2") != std::string::npos);
    auto unknown = run_cli("audit nonsense --out " + out.string());
    CHECK(unknown.code != 0);
    fs::remove_all(out);
  }
}
