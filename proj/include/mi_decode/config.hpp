#pragma once

// PipelineConfig: one flat JSON document covering preprocessing, features,
// classifier, evidence grid, sweep and synthetic-data parameters. Command-line
// flags override values read from the file.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mi_decode/decoder.hpp"
#include "mi_decode/eval.hpp"
#include "mi_decode/evidence.hpp"
#include "mi_decode/hash.hpp"
#include "mi_decode/io.hpp"
#include "mi_decode/synth.hpp"

namespace mi {

struct PipelineConfig {
  DecoderConfig decoder;
  evidence::EvidenceConfig evidence{0.5, 0.05};
  std::vector<double> thresholds = evidence::default_thresholds();
  std::vector<double> steps = evidence::default_steps();
  evidence::ObjectiveSpec objective;
  std::vector<std::size_t> sweep_ks = eval::default_sweep_ks();
  std::uint64_t seed = 7;
  double erd_depth = 0.5;
  double noise_sigma = synth::SynthSpec{}.noise_sigma;

  void validate() const {
    decoder.validate();
    evidence.validate();
    if (thresholds.empty() || steps.empty()) fail(ErrorCode::EmptyGrid, "evidence grid is empty");
    for (double t : thresholds)
      for (double s : steps) evidence::EvidenceConfig{t, s}.validate();
    if (!(objective.alpha >= 0 && objective.beta >= 0)) fail(ErrorCode::InvalidConfig, "objective weights must be non-negative");
  }

  synth::SynthSpec synth_spec() const {
    synth::SynthSpec s;
    s.seed = seed;
    s.erd_depth = erd_depth;
    s.noise_sigma = noise_sigma;
    return s;
  }
};

inline nlohmann::json to_json(const PipelineConfig& c) {
  nlohmann::json j = to_json(c.decoder);
  j["theta"] = c.evidence.threshold;
  j["delta"] = c.evidence.step;
  j["thetas"] = c.thresholds;
  j["deltas"] = c.steps;
  j["objective"] = c.objective.kind == evidence::Objective::Lexicographic ? "lexicographic" : "weighted";
  j["alpha"] = c.objective.alpha;
  j["beta"] = c.objective.beta;
  j["sweep_ks"] = c.sweep_ks;
  j["seed"] = c.seed;
  j["erd_depth"] = c.erd_depth;
  j["noise_sigma"] = c.noise_sigma;
  return j;
}

inline void merge_json(PipelineConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorCode::InvalidConfig, "config must be a JSON object");
  merge_json(c.decoder, j);
  try {
    if (j.contains("theta")) c.evidence.threshold = j.at("theta").get<double>();
    if (j.contains("delta")) c.evidence.step = j.at("delta").get<double>();
    if (j.contains("thetas")) c.thresholds = j.at("thetas").get<std::vector<double>>();
    if (j.contains("deltas")) c.steps = j.at("deltas").get<std::vector<double>>();
    if (j.contains("objective")) {
      const auto o = j.at("objective").get<std::string>();
      if (o == "lexicographic")
        c.objective.kind = evidence::Objective::Lexicographic;
      else if (o == "weighted")
        c.objective.kind = evidence::Objective::Weighted;
      else
        fail(ErrorCode::InvalidConfig, "objective must be lexicographic or weighted");
    }
    if (j.contains("alpha")) c.objective.alpha = j.at("alpha").get<double>();
    if (j.contains("beta")) c.objective.beta = j.at("beta").get<double>();
    if (j.contains("sweep_ks")) c.sweep_ks = j.at("sweep_ks").get<std::vector<std::size_t>>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("erd_depth")) c.erd_depth = j.at("erd_depth").get<double>();
    if (j.contains("noise_sigma")) c.noise_sigma = j.at("noise_sigma").get<double>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("config: ") + e.what());
  }
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  PipelineConfig c;
  if (!std::filesystem::is_regular_file(path)) fail(ErrorCode::MissingFile, path.string() + " not found");
  try {
    merge_json(c, nlohmann::json::parse(io::read_text(path)));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
  return c;
}

inline std::string config_hash(const PipelineConfig& c) { return fnv1a_hex(to_json(c).dump()); }

}  // namespace mi
