#pragma once

// Report envelopes and human-readable tables.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mi_decode/config.hpp"
#include "mi_decode/eval.hpp"
#include "mi_decode/evidence.hpp"
#include "mi_decode/io.hpp"
#include "mi_decode/synth.hpp"

namespace mi::report {

using json = nlohmann::json;

inline json envelope(const std::string& command, const PipelineConfig& cfg) {
  return json{{"command", command}, {"tool_version", kToolVersion}, {"config_hash", config_hash(cfg)}, {"config", to_json(cfg)}};
}

// Fixed-width text table; the first row is the header.
class Table {
 public:
  explicit Table(std::vector<std::string> header) { rows_.push_back(std::move(header)); }
  void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }

  std::string str() const {
    std::vector<std::size_t> width;
    for (const auto& r : rows_)
      for (std::size_t i = 0; i < r.size(); ++i) {
        if (width.size() <= i) width.push_back(0);
        width[i] = std::max(width[i], r[i].size());
      }
    std::string out;
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      for (std::size_t i = 0; i < rows_[r].size(); ++i) {
        if (i) out += "  ";
        out += rows_[r][i];
        if (i + 1 < rows_[r].size()) out += std::string(width[i] - rows_[r][i].size(), ' ');
      }
      out += '\n';
      if (r == 0) {
        std::size_t total = 0;
        for (std::size_t i = 0; i < width.size(); ++i) total += width[i] + (i ? 2 : 0);
        out += std::string(total, '-') + '\n';
      }
    }
    return out;
  }

 private:
  std::vector<std::vector<std::string>> rows_;
};

inline std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// ---- repro -----------------------------------------------------------------------

struct StudySessions {
  Session offline, online1, online2;
};

inline StudySessions load_study(const std::filesystem::path& dir) {
  StudySessions s;
  Session* slots[] = {&s.offline, &s.online1, &s.online2};
  for (std::size_t i = 0; i < synth::kStudyLayout.size(); ++i) {
    const auto sub = dir / synth::kStudyLayout[i].second;
    if (!std::filesystem::is_directory(sub)) fail(ErrorCode::MissingSession, sub.string() + " not found");
    *slots[i] = io::load_session(sub);
  }
  return s;
}

inline json trial_block(const std::string& name, const std::string& train, const std::string& test,
                        const evidence::GridResult& g) {
  return json{{"name", name},
              {"train", train},
              {"test", test},
              {"best", evidence::to_json(g.winner().report, false)},
              {"grid_csv", evidence::grid_csv(g)}};
}

inline json sample_block(const std::string& name, const std::string& train, const std::string& test,
                         const eval::SampleReport& r) {
  json j = eval::to_json(r);
  j["name"] = name;
  j["train"] = train;
  j["test"] = test;
  return j;
}

// Train on offline, test on online1/online2, fine-tune on offline+online1 and
// test on online2, then grid-search the evidence parameters for each pairing.
inline json run_repro(const StudySessions& study, const PipelineConfig& cfg) {
  cfg.validate();
  json rep = envelope("repro", cfg);
  rep["sessions"] = {eval::session_tag(study.offline), eval::session_tag(study.online1), eval::session_tag(study.online2)};
  rep["offline_cv"] = eval::to_json(eval::runwise_cv(study.offline.recording, cfg.decoder));

  const auto ft = eval::finetune_experiment(study.offline, study.online1, study.online2, cfg.decoder);
  rep["sample_level"] = {sample_block("base_online1", "offline", "online1", ft.base_online1),
                         sample_block("base_online2", "offline", "online2", ft.base_online2),
                         sample_block("tuned_online2", "offline+online1", "online2", ft.tuned_online2)};

  const FilterMode mode = cfg.decoder.filter;
  auto grid = [&](const Decoder& d, const Session& s) {
    return evidence::grid_search(evidence::predict_trials(d, s.recording, mode), cfg.thresholds, cfg.steps, cfg.objective);
  };
  rep["trial_level"] = {trial_block("base_online1", "offline", "online1", grid(ft.base, study.online1)),
                        trial_block("base_online2", "offline", "online2", grid(ft.base, study.online2)),
                        trial_block("tuned_online2", "offline+online1", "online2", grid(ft.tuned, study.online2))};
  return rep;
}

inline std::string repro_text(const json& rep) {
  std::string out = "repro  tool " + rep.at("tool_version").get<std::string>() + "  config " +
                    rep.at("config_hash").get<std::string>() + "\n\n";
  const auto& cv = rep.at("offline_cv");
  Table t_cv({"offline run-wise CV", "fold", "accuracy"});
  for (const auto& f : cv.at("folds"))
    t_cv.add({"", "run " + std::to_string(f.at("test_run").get<std::size_t>()), fixed(f.at("accuracy").get<double>())});
  t_cv.add({"", "mean", fixed(cv.at("mean").get<double>())});
  out += t_cv.str() + "\n";

  Table t_s({"sample level", "train", "test", "windows", "accuracy"});
  for (const auto& b : rep.at("sample_level"))
    t_s.add({b.at("name").get<std::string>(), b.at("train").get<std::string>(), b.at("test").get<std::string>(),
             std::to_string(b.at("n_windows").get<std::size_t>()), fixed(b.at("accuracy").get<double>())});
  out += t_s.str() + "\n";

  Table t_t({"trial level", "threshold", "step", "correct%", "incorrect%", "timeout%", "latency_s"});
  for (const auto& b : rep.at("trial_level")) {
    const auto& best = b.at("best");
    t_t.add({b.at("name").get<std::string>(), fixed(best.at("threshold").get<double>(), 2),
             fixed(best.at("step").get<double>(), 2), fixed(best.at("correct_pct").get<double>(), 2),
             fixed(best.at("incorrect_pct").get<double>(), 2), fixed(best.at("timeout_pct").get<double>(), 2),
             fixed(best.at("mean_latency_s").get<double>(), 3)});
  }
  out += t_t.str();
  return out;
}

}  // namespace mi::report
