#include "tsb/sample.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tsb/error.hpp"

namespace tsb {

using nlohmann::json;

std::string_view to_string(Label l) {
  switch (l) {
    case Label::Stable: return "stable";
    case Label::Unstable: return "unstable";
    case Label::Infeasible: return "infeasible";
  }
  return "infeasible";
}

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::Seed: return "seed";
    case Provenance::Route1: return "route1";
    case Provenance::Route2Bisect: return "route2_bisect";
    case Provenance::Route3Traverse: return "route3_traverse";
    case Provenance::GapResample: return "gap_resample";
    case Provenance::Baseline: return "baseline";
  }
  return "seed";
}

Label label_from_string(std::string_view s) {
  if (s == "stable") return Label::Stable;
  if (s == "unstable") return Label::Unstable;
  if (s == "infeasible") return Label::Infeasible;
  throw ParseError("unknown label '" + std::string(s) + "'");
}

Provenance provenance_from_string(std::string_view s) {
  for (auto p : {Provenance::Seed, Provenance::Route1, Provenance::Route2Bisect, Provenance::Route3Traverse,
                 Provenance::GapResample, Provenance::Baseline}) {
    if (to_string(p) == s) return p;
  }
  throw ParseError("unknown provenance '" + std::string(s) + "'");
}

double SamplerConfig::effective_gamma_cri(const std::vector<double>& u_max) const {
  if (gamma_cri > 0.0) return gamma_cri;
  double m = 0.0;
  for (double v : u_max) m = std::max(m, std::abs(v));
  return (0.01 * m) * (0.01 * m);
}

std::size_t SampleSet::feasible_count() const {
  return static_cast<std::size_t>(
      std::count_if(samples.begin(), samples.end(), [](const Sample& s) { return s.feasible(); }));
}

std::string sample_to_json_line(const Sample& s) {
  json j;
  j["op"] = s.op.gen_p;
  j["load_scale"] = s.op.load_scale;
  j["contingency_id"] = s.contingency_id;
  if (s.feasible()) {
    j["phi"] = s.phi;
    j["lambda"] = s.lambda;
  } else {
    j["phi"] = nullptr;
    j["lambda"] = nullptr;
  }
  j["label"] = std::string(to_string(s.label));
  if (s.grad && s.feasible()) {
    j["grad"] = *s.grad;
  } else {
    j["grad"] = nullptr;
  }
  j["provenance"] = std::string(to_string(s.provenance));
  j["critical"] = s.critical;
  j["path"] = s.path;
  j["step"] = s.step;
  return j.dump();
}

Sample sample_from_json_line(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("sample line is not valid JSON: ") + e.what());
  }
  Sample s;
  try {
    s.op.gen_p = j.at("op").get<std::vector<double>>();
    s.op.load_scale = j.at("load_scale").get<std::vector<double>>();
    s.contingency_id = j.at("contingency_id").get<std::string>();
    s.label = label_from_string(j.at("label").get<std::string>());
    s.provenance = provenance_from_string(j.at("provenance").get<std::string>());
    if (!j.at("phi").is_null()) s.phi = j.at("phi").get<double>();
    if (!j.at("lambda").is_null()) s.lambda = j.at("lambda").get<int>();
    if (!j.at("grad").is_null()) s.grad = j.at("grad").get<std::vector<double>>();
    s.critical = j.value("critical", false);
    s.path = j.value("path", -1);
    s.step = j.value("step", 0);
  } catch (const json::exception& e) {
    throw ParseError(std::string("sample line: ") + e.what());
  }
  if (s.feasible() && (s.lambda == 1) != (s.label == Label::Stable)) {
    throw ValidationError("sample label and lambda disagree");
  }
  return s;
}

std::string sampler_config_to_json(const SamplerConfig& c) {
  json j{{"n_seeds", c.n_seeds},
         {"nu_min", c.nu_min},
         {"nu_max", c.nu_max},
         {"phi_ref", c.phi_ref},
         {"phi_cri", c.phi_cri},
         {"gamma_cri", c.gamma_cri},
         {"max_route_steps", c.max_route_steps},
         {"traverse_step", c.traverse_step},
         {"rng_seed", c.rng_seed},
         {"load_band", {c.load_band_min, c.load_band_max}},
         {"bisect_width", c.bisect_width},
         {"max_evaluations", c.max_evaluations},
         {"resample_rounds", c.resample_rounds},
         {"resample_points", c.resample_points},
         {"resample_pool", c.resample_pool},
         {"max_reflections", c.max_reflections}};
  return j.dump(2);
}

namespace {

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParseError(std::string("sampler config field '") + key + "' has the wrong type");
  }
}

}  // namespace

SamplerConfig sampler_config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("sampler config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("sampler config: expected an object");
  static const std::set<std::string> known{"n_seeds", "nu_min", "nu_max", "phi_ref", "phi_cri", "gamma_cri",
                                           "max_route_steps", "traverse_step", "rng_seed", "load_band",
                                           "bisect_width", "max_evaluations", "resample_rounds",
                                           "resample_points", "resample_pool", "max_reflections"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ParseError("sampler config: unknown key '" + it.key() + "'");
  }
  SamplerConfig c;
  read_if(j, "n_seeds", c.n_seeds);
  read_if(j, "nu_min", c.nu_min);
  read_if(j, "nu_max", c.nu_max);
  read_if(j, "phi_ref", c.phi_ref);
  read_if(j, "phi_cri", c.phi_cri);
  read_if(j, "gamma_cri", c.gamma_cri);
  read_if(j, "max_route_steps", c.max_route_steps);
  read_if(j, "traverse_step", c.traverse_step);
  read_if(j, "rng_seed", c.rng_seed);
  if (j.contains("load_band")) {
    std::vector<double> band;
    read_if(j, "load_band", band);
    if (band.size() != 2) throw ParseError("sampler config field 'load_band' must have two entries");
    c.load_band_min = band[0];
    c.load_band_max = band[1];
  }
  read_if(j, "bisect_width", c.bisect_width);
  read_if(j, "max_evaluations", c.max_evaluations);
  read_if(j, "resample_rounds", c.resample_rounds);
  read_if(j, "resample_points", c.resample_points);
  read_if(j, "resample_pool", c.resample_pool);
  read_if(j, "max_reflections", c.max_reflections);
  return c;
}

void write_sample_set(const SampleSet& set, const std::string& jsonl_path, const std::string& sidecar_path) {
  std::ofstream out(jsonl_path, std::ios::binary);
  if (!out) throw ParseError("cannot write '" + jsonl_path + "'");
  for (const auto& s : set.samples) out << sample_to_json_line(s) << '\n';
  std::ofstream side(sidecar_path, std::ios::binary);
  if (!side) throw ParseError("cannot write '" + sidecar_path + "'");
  json j;
  j["case_ref"] = set.case_ref;
  j["config"] = json::parse(sampler_config_to_json(set.config));
  j["lower"] = set.lower;
  j["upper"] = set.upper;
  j["samples"] = set.samples.size();
  auto gammas = set.trace.round_gammas;
  for (auto& round : gammas)
    for (auto& g : round)
      if (!std::isfinite(g)) g = -1.0;  // unbounded: no earlier boundary sample
  j["trace"] = {{"evaluations", set.trace.evaluations},
                {"round_gammas", gammas},
                {"terminated", set.trace.terminated}};
  side << j.dump(2) << '\n';
}

SampleSet read_sample_set(const std::string& jsonl_path, const std::string& sidecar_path) {
  SampleSet set;
  std::ifstream in(jsonl_path);
  if (!in) throw ParseError("cannot open '" + jsonl_path + "'");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    set.samples.push_back(sample_from_json_line(line));
  }
  std::ifstream side(sidecar_path);
  if (side) {
    std::stringstream ss;
    ss << side.rdbuf();
    json j;
    try {
      j = json::parse(ss.str());
      set.case_ref = j.value("case_ref", "");
      if (j.contains("config")) set.config = sampler_config_from_json(j.at("config").dump());
      if (j.contains("lower")) set.lower = j.at("lower").get<std::vector<double>>();
      if (j.contains("upper")) set.upper = j.at("upper").get<std::vector<double>>();
      if (j.contains("trace")) {
        const auto& t = j.at("trace");
        set.trace.evaluations = t.value("evaluations", std::size_t{0});
        set.trace.round_gammas = t.value("round_gammas", std::vector<std::vector<double>>{});
        set.trace.terminated = t.value("terminated", false);
      }
    } catch (const json::exception& e) {
      throw ParseError(std::string("sample set sidecar: ") + e.what());
    }
  }
  return set;
}

}  // namespace tsb
