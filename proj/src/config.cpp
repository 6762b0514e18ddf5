#include "qnls/config.hpp"

#include "qnls/errors.hpp"
#include "qnls/io.hpp"

namespace qnls {

void RunConfig::validate() const {
  model.validate();
  SamplerSpec sp = sampler;
  sp.params = model;
  sp.validate();
  mc.validate();
  flow.validate(0);
  if (threads < 1) throw ParameterError("threads: must be >= 1");
  if (!(fd_h > 0.0)) throw ParameterError("energy.fd_h: must be > 0");
  if (sample_count < 1) throw ParameterError("sampler.count: must be >= 1");
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json s = sampler;
  s["count"] = sample_count;
  return {{"model", model},   {"flow", flow},     {"sampler", s},
          {"mc", mc},         {"chaos", chaos},   {"audit", audit},
          {"energy", {{"direct", energy_direct}, {"fd_h", fd_h}}},
          {"input", input},   {"output", output}, {"threads", threads},
          {"budget", budget}};
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ParameterError("--set expects key=value, got '" + assignment + "'");
  std::string path = assignment.substr(0, eq);
  std::string raw = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  nlohmann::json* cur = &doc;
  std::size_t start = 0;
  for (;;) {
    auto dot = path.find('.', start);
    std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ParameterError("--set: empty path component in '" + path + "'");
    if (!cur->is_object()) throw ParameterError("--set: '" + path + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*cur)[key] = value;
      return;
    }
    cur = &(*cur)[key];
    if (cur->is_null()) *cur = nlohmann::json::object();
    start = dot + 1;
  }
}

RunConfig config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ParameterError("config: top level must be an object");
  RunConfig c;
  auto section = [&](const char* name) -> const nlohmann::json* {
    if (!doc.contains(name)) return nullptr;
    const auto& s = doc.at(name);
    if (!s.is_object()) throw ParameterError(std::string(name) + ": must be an object");
    return &s;
  };
  auto scalar = [&](const char* name, auto& field) {
    if (!doc.contains(name)) return;
    try {
      field = doc.at(name).get<std::decay_t<decltype(field)>>();
    } catch (const nlohmann::json::exception& e) {
      throw ParameterError(std::string(name) + ": " + e.what());
    }
  };
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    static const char* known[] = {"model", "flow", "sampler", "mc", "chaos", "audit", "energy",
                                  "input", "output", "threads", "budget"};
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ParameterError(it.key() + ": unknown key");
  }
  if (auto s = section("model")) from_json(*s, c.model);
  if (auto s = section("flow")) from_json(*s, c.flow);
  if (auto s = section("sampler")) {
    nlohmann::json copy = *s;
    if (copy.contains("count")) {
      try {
        c.sample_count = copy.at("count").get<std::size_t>();
      } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("sampler.count: ") + e.what());
      }
      copy.erase("count");
    }
    if (copy.contains("seed")) {
      copy["master_seed"] = copy.at("seed");
      copy.erase("seed");
    }
    from_json(copy, c.sampler);
  }
  if (auto s = section("mc")) from_json(*s, c.mc);
  if (auto s = section("chaos")) from_json(*s, c.chaos);
  if (auto s = section("audit")) c.audit = *s;
  if (auto s = section("energy")) {
    for (auto it = s->begin(); it != s->end(); ++it) {
      try {
        if (it.key() == "direct") c.energy_direct = it.value().get<bool>();
        else if (it.key() == "fd_h") c.fd_h = it.value().get<double>();
        else throw ParameterError("energy." + it.key() + ": unknown key");
      } catch (const nlohmann::json::exception& e) {
        throw ParameterError("energy." + it.key() + ": " + e.what());
      }
    }
  }
  scalar("input", c.input);
  scalar("output", c.output);
  scalar("threads", c.threads);
  scalar("budget", c.budget);
  c.sampler.params = c.model;
  c.mc.threads = c.threads;
  c.validate();
  return c;
}

RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
  nlohmann::json doc;
  try {
    doc = text.empty() ? nlohmann::json::object() : nlohmann::json::parse(text, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParameterError("config syntax error at line " + std::to_string(line) + ", column " + std::to_string(col) +
                         ": " + e.what());
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return config_from_json(doc);
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::string text;
  try {
    text = path.empty() ? std::string() : read_file(path);
  } catch (const Error& e) {
    throw ParameterError("config: cannot read '" + path + "': " + e.what());
  }
  return parse_config(text, overrides);
}

}  // namespace qnls
