#pragma once

// Training samples shared by the boundary sampler and the boundary model.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tsb/grid.hpp"

namespace tsb {

enum class Label { Stable, Unstable, Infeasible };
enum class Provenance { Seed, Route1, Route2Bisect, Route3Traverse, GapResample, Baseline };

std::string_view to_string(Label l);
std::string_view to_string(Provenance p);
Label label_from_string(std::string_view s);
Provenance provenance_from_string(std::string_view s);

struct Sample {
  OperatingPoint op;  // gen_p holds the sampler's search coordinates
  std::string contingency_id;
  double phi = 0.0;
  int lambda = 0;  // 0 for infeasible samples
  Label label = Label::Infeasible;
  std::optional<std::vector<double>> grad;
  Provenance provenance = Provenance::Seed;
  bool critical = false;  // located on the stability boundary
  int path = -1;          // search path (seed, traversal chain, re-sampling point)
  int step = 0;           // position along the path

  bool feasible() const { return label != Label::Infeasible; }
  const std::vector<double>& u() const { return op.gen_p; }
};

struct SamplerConfig {
  std::size_t n_seeds = 20;
  double nu_min = 0.01;
  double nu_max = 0.2;
  double phi_ref = 0.0;    // <= 0: use the index of the first feasible seed
  double phi_cri = 0.5;    // rad^2 s
  double gamma_cri = 0.0;  // MW^2; <= 0: (0.01 * max u_max)^2
  std::size_t max_route_steps = 8;
  double traverse_step = 0.04;  // fraction of max u_max
  std::uint64_t rng_seed = 1;

  double load_band_min = 0.9;
  double load_band_max = 1.1;
  double bisect_width = 0.1;            // MW, per coordinate
  std::size_t max_evaluations = 300;    // TDS-evaluated samples
  std::size_t resample_rounds = 4;
  std::size_t resample_points = 4;      // new boundary points per round
  std::size_t resample_pool = 400;      // random chords per round
  std::size_t max_reflections = 3;      // halvings after infeasible steps

  double effective_gamma_cri(const std::vector<double>& u_max) const;
};

struct SamplerTrace {
  std::size_t evaluations = 0;  // TDS-evaluated samples
  std::vector<std::vector<double>> round_gammas;
  bool terminated = false;      // maximin criterion fired
};

struct SampleSet {
  std::vector<Sample> samples;
  std::string case_ref;
  SamplerConfig config;
  std::vector<double> lower, upper;  // search box
  SamplerTrace trace;

  std::size_t feasible_count() const;
};

/// JSONL: one object per line with keys op, load_scale, contingency_id, phi,
/// lambda, label, grad, provenance, critical, path, step.
std::string sample_to_json_line(const Sample& s);
Sample sample_from_json_line(std::string_view line);
void write_sample_set(const SampleSet& set, const std::string& jsonl_path, const std::string& sidecar_path);
SampleSet read_sample_set(const std::string& jsonl_path, const std::string& sidecar_path);

std::string sampler_config_to_json(const SamplerConfig& cfg);
SamplerConfig sampler_config_from_json(std::string_view text);

}  // namespace tsb
