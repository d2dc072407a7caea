// mi_decode: command-line front end.
//
// Exit codes: 0 success, 1 pipeline error, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mi_decode/mi_decode.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Flags shared by the pipeline subcommands. Each set flag overrides the
// matching key of the config file.
struct Common {
  std::string config_path;
  std::string report_path;
  bool text = false;
  bool as_json = false;
  json overrides = json::object();

  std::optional<double> band_low, band_high, theta, delta, window_s, step_s, psd_fmin, psd_fmax;
  std::optional<int> band_order;
  std::optional<std::size_t> pca_k;
  std::optional<std::string> features, classifier, psd_layout, objective;
  bool no_car = false;
  bool causal = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "flat JSON config file")->check(CLI::ExistingFile);
    cmd->add_option("--report", report_path, "also write the JSON report to this path");
    cmd->add_flag("--text", text, "human-readable table on stdout");
    cmd->add_flag("--json", as_json, "JSON on stdout");
    cmd->add_option("--band-low", band_low);
    cmd->add_option("--band-high", band_high);
    cmd->add_option("--band-order", band_order);
    cmd->add_flag("--no-car", no_car, "skip the common average reference");
    cmd->add_flag("--causal", causal, "causal filtering instead of zero-phase");
    cmd->add_option("--window", window_s, "window length in seconds");
    cmd->add_option("--step", step_s, "window step in seconds");
    cmd->add_option("--features", features, "raw | pca | psd | psd+pca");
    cmd->add_option("--pca", pca_k, "number of PCA components (0 = none)");
    cmd->add_option("--psd-layout", psd_layout, "per-channel | channel-average");
    cmd->add_option("--psd-fmin", psd_fmin);
    cmd->add_option("--psd-fmax", psd_fmax);
    cmd->add_option("--classifier", classifier, "lda | centroid");
    cmd->add_option("--theta", theta, "evidence threshold");
    cmd->add_option("--delta", delta, "evidence step");
    cmd->add_option("--objective", objective, "lexicographic | weighted");
  }

  mi::PipelineConfig resolve() {
    mi::PipelineConfig cfg;
    if (!config_path.empty()) cfg = mi::load_config(config_path);
    json o = overrides;
    if (band_low) o["band_low"] = *band_low;
    if (band_high) o["band_high"] = *band_high;
    if (band_order) o["band_order"] = *band_order;
    if (no_car) o["car"] = false;
    if (causal) o["filter"] = "causal";
    if (window_s) o["window_s"] = *window_s;
    if (step_s) o["step_s"] = *step_s;
    if (pca_k) o["pca_k"] = *pca_k;
    if (features) o["features"] = *features;
    if (psd_layout) o["psd_layout"] = *psd_layout;
    if (psd_fmin) o["psd_fmin"] = *psd_fmin;
    if (psd_fmax) o["psd_fmax"] = *psd_fmax;
    if (classifier) o["classifier"] = *classifier;
    if (theta) o["theta"] = *theta;
    if (delta) o["delta"] = *delta;
    if (objective) o["objective"] = *objective;
    mi::merge_json(cfg, o);
    cfg.validate();
    return cfg;
  }

  // Writes the JSON report to --report if given; stdout gets the text form
  // when asked for (or by default when `text_default`), JSON otherwise.
  void emit(const json& rep, const std::string& text_form, bool text_default = false) const {
    const std::string dumped = rep.dump(2) + "\n";
    if (!report_path.empty()) mi::io::write_text(report_path, dumped);
    const bool want_text = text || (text_default && !as_json);
    std::cout << (want_text && !text_form.empty() ? text_form : dumped);
  }
};

std::string sample_text(const json& j) {
  mi::report::Table t({"windows", "accuracy", "L->L", "L->R", "R->L", "R->R"});
  const auto& c = j.at("confusion");
  t.add({std::to_string(j.at("n_windows").get<std::size_t>()), mi::report::fixed(j.at("accuracy").get<double>()),
         std::to_string(c["true_left"]["pred_left"].get<std::size_t>()), std::to_string(c["true_left"]["pred_right"].get<std::size_t>()),
         std::to_string(c["true_right"]["pred_left"].get<std::size_t>()), std::to_string(c["true_right"]["pred_right"].get<std::size_t>())});
  return t.str();
}

std::string trial_text(const json& j) {
  mi::report::Table t({"threshold", "step", "trials", "correct%", "incorrect%", "timeout%", "latency_s"});
  t.add({mi::report::fixed(j.at("threshold").get<double>(), 2), mi::report::fixed(j.at("step").get<double>(), 2),
         std::to_string(j.at("n_trials").get<std::size_t>()), mi::report::fixed(j.at("correct_pct").get<double>(), 2),
         mi::report::fixed(j.at("incorrect_pct").get<double>(), 2), mi::report::fixed(j.at("timeout_pct").get<double>(), 2),
         mi::report::fixed(j.at("mean_latency_s").get<double>(), 3)});
  return t.str();
}

std::string cv_text(const json& j) {
  mi::report::Table t({"fold", "accuracy"});
  for (const auto& f : j.at("folds"))
    t.add({"run " + std::to_string(f.at("test_run").get<std::size_t>()), mi::report::fixed(f.at("accuracy").get<double>())});
  t.add({"mean", mi::report::fixed(j.at("mean").get<double>())});
  return t.str();
}

std::vector<mi::Session> load_sessions(const std::vector<std::string>& dirs) {
  std::vector<mi::Session> out;
  for (const auto& d : dirs) out.push_back(mi::io::load_session(d));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Motor-imagery decoding pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", mi::kToolVersion);

  // generate
  auto* gen = app.add_subcommand("generate", "write a synthetic offline/online1/online2 study");
  std::string gen_out, gen_config;
  std::optional<std::uint64_t> gen_seed;
  std::optional<double> gen_depth, gen_noise;
  gen->add_option("--out", gen_out, "study directory")->required();
  gen->add_option("--config", gen_config)->check(CLI::ExistingFile);
  gen->add_option("--seed", gen_seed);
  gen->add_option("--erd-depth", gen_depth);
  gen->add_option("--noise", gen_noise, "background noise std");

  // import-csv
  auto* imp = app.add_subcommand("import-csv", "convert a CSV recording into a session directory");
  std::string imp_csv, imp_out, imp_event_col, imp_run_col, imp_map = "1=TrialStart,2=CueLeft,3=CueRight,4=FeedbackStart,5=FeedbackEnd";
  std::string imp_subject = "unknown", imp_sensor = "Gel", imp_kind = "Offline";
  double imp_fs = 512.0;
  bool imp_no_header = false;
  imp->add_option("--csv", imp_csv)->required()->check(CLI::ExistingFile);
  imp->add_option("--out", imp_out)->required();
  imp->add_option("--fs", imp_fs, "sampling rate in Hz");
  imp->add_flag("--no-header", imp_no_header);
  imp->add_option("--event-column", imp_event_col, "header name, or 0-based index without a header");
  imp->add_option("--event-map", imp_map, "code=Kind pairs, comma separated");
  imp->add_option("--run-column", imp_run_col);
  imp->add_option("--subject", imp_subject);
  imp->add_option("--sensor", imp_sensor, "Gel | Politag | Synthetic");
  imp->add_option("--session-kind", imp_kind, "Offline | Online1 | Online2");

  // train
  auto* train = app.add_subcommand("train", "fit a decoder on one or more sessions");
  Common train_c;
  std::vector<std::string> train_sessions;
  std::string train_out;
  train_c.attach(train);
  train->add_option("--session", train_sessions, "session directory (repeatable)")->required();
  train->add_option("--out", train_out, "decoder directory")->required();

  // eval-samples
  auto* evs = app.add_subcommand("eval-samples", "window-level accuracy of a decoder on a session");
  Common evs_c;
  std::string evs_dec, evs_session;
  evs_c.attach(evs);
  evs->add_option("--decoder", evs_dec)->required();
  evs->add_option("--session", evs_session)->required();

  // eval-trials
  auto* evt = app.add_subcommand("eval-trials", "trial-level decisions by evidence accumulation");
  Common evt_c;
  std::string evt_dec, evt_session;
  bool evt_per_trial = false;
  evt_c.attach(evt);
  evt->add_option("--decoder", evt_dec)->required();
  evt->add_option("--session", evt_session)->required();
  evt->add_flag("--per-trial", evt_per_trial, "include every trial's outcome and EV trajectory");

  // cv
  auto* cv = app.add_subcommand("cv", "run-wise cross-validation on one session");
  Common cv_c;
  std::string cv_session;
  bool cv_shuffle = false;
  cv_c.attach(cv);
  cv->add_option("--session", cv_session)->required();
  cv->add_flag("--shuffle-labels", cv_shuffle, "permute window labels first (chance control)");

  // pca-sweep
  auto* sweep = app.add_subcommand("pca-sweep", "run-wise CV accuracy over a list of PCA sizes");
  Common sweep_c;
  std::string sweep_session;
  std::vector<std::size_t> sweep_ks;
  sweep_c.attach(sweep);
  sweep->add_option("--session", sweep_session)->required();
  sweep->add_option("--ks", sweep_ks, "component counts");

  // grid-search
  auto* grid = app.add_subcommand("grid-search", "search evidence threshold and step");
  Common grid_c;
  std::string grid_dec, grid_session, grid_csv_path;
  grid_c.attach(grid);
  grid->add_option("--decoder", grid_dec)->required();
  grid->add_option("--session", grid_session)->required();
  grid->add_option("--csv", grid_csv_path, "write the grid matrix as CSV");

  // replay
  auto* rep = app.add_subcommand("replay", "sample-by-sample replay of a session through a decoder");
  Common rep_c;
  std::string rep_dec, rep_session;
  bool rep_realtime = false;
  rep_c.attach(rep);
  rep->add_option("--decoder", rep_dec)->required();
  rep->add_option("--session", rep_session)->required();
  rep->add_flag("--realtime", rep_realtime, "pace windows at the window step");

  // repro
  auto* repro = app.add_subcommand("repro", "offline -> online experiment on a study directory");
  Common repro_c;
  std::string repro_study;
  repro_c.attach(repro);
  repro->add_option("--study", repro_study, "directory holding offline/, online1/, online2/")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      mi::PipelineConfig cfg;
      if (!gen_config.empty()) cfg = mi::load_config(gen_config);
      if (gen_seed) cfg.seed = *gen_seed;
      if (gen_depth) cfg.erd_depth = *gen_depth;
      if (gen_noise) cfg.noise_sigma = *gen_noise;
      const auto dirs = mi::synth::generate_study(cfg.synth_spec(), gen_out);
      json j{{"command", "generate"}, {"tool_version", mi::kToolVersion}, {"seed", cfg.seed}, {"erd_depth", cfg.erd_depth},
             {"noise_sigma", cfg.noise_sigma}, {"sessions", json::array()}};
      for (const auto& d : dirs) j["sessions"].push_back(d.string());
      std::cout << j.dump(2) << "\n";
    } else if (*imp) {
      mi::io::CsvImportOptions opt;
      opt.fs = imp_fs;
      opt.has_header = !imp_no_header;
      if (!imp_event_col.empty()) {
        opt.event_column = imp_event_col;
        opt.event_map = mi::io::parse_event_map(imp_map);
      }
      if (!imp_run_col.empty()) opt.run_column = imp_run_col;
      const auto sensor = mi::parse_sensor(imp_sensor);
      const auto kind = mi::parse_session_kind(imp_kind);
      if (!sensor || !kind) {
        std::cerr << "error: unknown --sensor or --session-kind\n";
        return 2;
      }
      mi::Recording rec = mi::io::import_csv(imp_csv, opt);
      mi::SessionMeta meta;
      meta.subject = imp_subject;
      meta.sensor = *sensor;
      meta.session_kind = *kind;
      meta.fs = rec.fs;
      meta.channel_labels = rec.channel_labels;
      std::size_t runs = 1;
      for (const auto& e : rec.events) runs = std::max(runs, e.run_index + 1);
      meta.n_runs = runs;
      mi::io::save_session(rec, meta, imp_out);
      std::cout << json{{"command", "import-csv"}, {"out", imp_out}, {"n_samples", rec.n_samples()},
                        {"n_channels", rec.n_channels()}, {"n_events", rec.events.size()}}
                       .dump(2)
                << "\n";
    } else if (*train) {
      auto cfg = train_c.resolve();
      const auto sessions = load_sessions(train_sessions);
      std::vector<const mi::Session*> ptrs;
      for (const auto& s : sessions) ptrs.push_back(&s);
      const auto dec = mi::eval::train_decoder(ptrs, cfg.decoder);
      mi::save_decoder(dec, train_out);
      json j = mi::report::envelope("train", cfg);
      j["decoder"] = mi::decoder_json(dec);
      j["out"] = train_out;
      train_c.emit(j, "");
    } else if (*evs) {
      auto cfg = evs_c.resolve();
      const auto dec = mi::load_decoder(evs_dec);
      const auto s = mi::io::load_session(evs_session);
      json j = mi::report::envelope("eval-samples", cfg);
      j["decoder_config_hash"] = dec.provenance.config_hash;
      j["session"] = mi::eval::session_tag(s);
      j["result"] = mi::eval::to_json(mi::eval::eval_samples(dec, s.recording));
      evs_c.emit(j, sample_text(j["result"]));
    } else if (*evt) {
      auto cfg = evt_c.resolve();
      const auto dec = mi::load_decoder(evt_dec);
      const auto s = mi::io::load_session(evt_session);
      const auto r = mi::evidence::replay_session(dec, s.recording, cfg.evidence, cfg.decoder.filter);
      json j = mi::report::envelope("eval-trials", cfg);
      j["decoder_config_hash"] = dec.provenance.config_hash;
      j["session"] = mi::eval::session_tag(s);
      j["result"] = mi::evidence::to_json(r, evt_per_trial);
      evt_c.emit(j, trial_text(j["result"]));
    } else if (*cv) {
      auto cfg = cv_c.resolve();
      const auto s = mi::io::load_session(cv_session);
      auto fm = mi::session_features(s.recording, cfg.decoder);
      if (cv_shuffle) fm = mi::eval::shuffle_labels(std::move(fm), cfg.seed);
      json j = mi::report::envelope("cv", cfg);
      j["session"] = mi::eval::session_tag(s);
      j["shuffled"] = cv_shuffle;
      j["result"] = mi::eval::to_json(mi::eval::runwise_cv(fm, cfg.decoder.pca_k, cfg.decoder.classifier, cfg.decoder.feature_name()));
      cv_c.emit(j, cv_text(j["result"]));
    } else if (*sweep) {
      auto cfg = sweep_c.resolve();
      if (!sweep_ks.empty()) cfg.sweep_ks = sweep_ks;
      const auto s = mi::io::load_session(sweep_session);
      const auto fm = mi::session_features(s.recording, cfg.decoder);
      json j = mi::report::envelope("pca-sweep", cfg);
      j["session"] = mi::eval::session_tag(s);
      j["result"] = mi::eval::to_json(mi::eval::pca_sweep(fm, cfg.sweep_ks, cfg.decoder.classifier));
      mi::report::Table t({"k", "mean accuracy"});
      for (const auto& p : j["result"]["points"])
        t.add({std::to_string(p["k"].get<std::size_t>()), mi::report::fixed(p["mean"].get<double>())});
      sweep_c.emit(j, t.str() + "best k " + std::to_string(j["result"]["best_k"].get<std::size_t>()) + "\n");
    } else if (*grid) {
      auto cfg = grid_c.resolve();
      const auto dec = mi::load_decoder(grid_dec);
      const auto s = mi::io::load_session(grid_session);
      const auto g = mi::evidence::grid_search(mi::evidence::predict_trials(dec, s.recording, cfg.decoder.filter),
                                               cfg.thresholds, cfg.steps, cfg.objective);
      const std::string csv = mi::evidence::grid_csv(g);
      if (!grid_csv_path.empty()) mi::io::write_text(grid_csv_path, csv);
      json j = mi::report::envelope("grid-search", cfg);
      j["decoder_config_hash"] = dec.provenance.config_hash;
      j["session"] = mi::eval::session_tag(s);
      j["best"] = mi::evidence::to_json(g.winner().report, false);
      j["grid_csv"] = csv;
      grid_c.emit(j, csv);
    } else if (*rep) {
      auto cfg = rep_c.resolve();
      const auto dec = mi::load_decoder(rep_dec);
      const auto s = mi::io::load_session(rep_session);
      // one JSON line per consumed window, then the summary
      auto sink = [](const mi::evidence::StreamEvent& e) {
        std::cout << json{{"trial", e.trial}, {"window", e.window_index}, {"ev", e.ev},
                          {"state", std::string(mi::evidence::to_string(e.state))}}
                         .dump()
                  << "\n"
                  << std::flush;
      };
      const auto r = mi::evidence::stream_replay(dec, s.recording, cfg.evidence, rep_realtime, sink);
      json j = mi::report::envelope("replay", cfg);
      j["session"] = mi::eval::session_tag(s);
      j["result"] = mi::evidence::to_json(r, false);
      if (!rep_c.report_path.empty()) mi::io::write_text(rep_c.report_path, j.dump(2) + "\n");
      std::cout << json{{"summary", j}}.dump() << "\n";
    } else if (*repro) {
      auto cfg = repro_c.resolve();
      const auto study = mi::report::load_study(repro_study);
      const json j = mi::report::run_repro(study, cfg);
      repro_c.emit(j, mi::report::repro_text(j), true);
    }
  } catch (const mi::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
