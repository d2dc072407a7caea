#pragma once

// Trial-level decisions by evidence accumulation.
//
// EV starts at 0 for every trial. Each window prediction moves it by +step
// (Right) or -step (Left). The first window after which |EV| > threshold
// decides the trial by the sign of EV; if no window does, the trial times out.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mi_decode/decoder.hpp"
#include "mi_decode/dsp.hpp"
#include "mi_decode/error.hpp"
#include "mi_decode/parallel.hpp"
#include "mi_decode/types.hpp"

namespace mi::evidence {

using json = nlohmann::json;

struct EvidenceConfig {
  double threshold = 0.5;
  double step = 0.05;

  void validate() const {
    if (!(step > 0.0 && step <= threshold && threshold <= 1.0))
      fail(ErrorCode::InvalidConfig, "evidence config needs 0 < step <= threshold <= 1");
  }
};

enum class Decision { Left, Right, Timeout };

inline std::string_view to_string(Decision d) {
  switch (d) {
    case Decision::Left: return "Left";
    case Decision::Right: return "Right";
    case Decision::Timeout: return "Timeout";
  }
  return "?";
}

struct EvidenceOutcome {
  Decision decision = Decision::Timeout;
  std::size_t stop_index = 0;      // windows consumed
  std::vector<double> trajectory;  // EV after each consumed window
};

// EV is tracked as an integer step count so repeated additions cannot drift.
// The comparison allows a relative 1e-9 slack: |EV| landing exactly on the
// threshold (e.g. 3 * 0.1 vs 0.3) does not cross it.
inline bool exceeds(long count, const EvidenceConfig& cfg) {
  return static_cast<double>(std::labs(count)) * cfg.step > cfg.threshold * (1.0 + 1e-9);
}

class Accumulator {
 public:
  explicit Accumulator(EvidenceConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  // Returns true once the trial is decided; further calls are ignored.
  bool push(ClassLabel prediction) {
    if (decided_) return true;
    count_ += prediction == ClassLabel::Right ? 1 : -1;
    trajectory_.push_back(static_cast<double>(count_) * cfg_.step);
    if (exceeds(count_, cfg_)) {
      decided_ = true;
      decision_ = count_ > 0 ? Decision::Right : Decision::Left;
    }
    return decided_;
  }

  double value() const { return static_cast<double>(count_) * cfg_.step; }
  bool decided() const { return decided_; }

  EvidenceOutcome finish() const {
    return {decided_ ? decision_ : Decision::Timeout, trajectory_.size(), trajectory_};
  }

 private:
  EvidenceConfig cfg_;
  long count_ = 0;
  bool decided_ = false;
  Decision decision_ = Decision::Timeout;
  std::vector<double> trajectory_;
};

inline EvidenceOutcome accumulate(std::span<const ClassLabel> predictions, const EvidenceConfig& cfg) {
  if (predictions.empty()) fail(ErrorCode::EmptyTrial, "trial has no windows");
  Accumulator acc(cfg);
  for (ClassLabel p : predictions)
    if (acc.push(p)) break;
  return acc.finish();
}

// ---- per-trial reports -------------------------------------------------------

struct TrialResult {
  ClassLabel truth = ClassLabel::Left;
  std::size_t run_index = 0;
  std::size_t n_windows = 0;
  EvidenceOutcome outcome;
};

struct TrialReport {
  EvidenceConfig config;
  std::vector<TrialResult> trials;
  std::size_t correct = 0, incorrect = 0, timeout = 0;
  double correct_pct = 0, incorrect_pct = 0, timeout_pct = 0;
  double mean_latency_windows = 0;  // decided trials only
  double mean_latency_s = 0;        // feedback start to the end of the deciding window
};

inline bool is_correct(const TrialResult& t) {
  return (t.outcome.decision == Decision::Right && t.truth == ClassLabel::Right) ||
         (t.outcome.decision == Decision::Left && t.truth == ClassLabel::Left);
}

inline TrialReport summarize(std::vector<TrialResult> trials, const EvidenceConfig& cfg, std::size_t win_len,
                             std::size_t step, double fs) {
  TrialReport r;
  r.config = cfg;
  r.trials = std::move(trials);
  double lat_w = 0, lat_s = 0;
  for (const auto& t : r.trials) {
    if (t.outcome.decision == Decision::Timeout) {
      ++r.timeout;
      continue;
    }
    if (is_correct(t))
      ++r.correct;
    else
      ++r.incorrect;
    lat_w += static_cast<double>(t.outcome.stop_index);
    lat_s += (static_cast<double>((t.outcome.stop_index - 1) * step + win_len)) / fs;
  }
  const double n = static_cast<double>(r.trials.size());
  if (n > 0) {
    r.correct_pct = 100.0 * static_cast<double>(r.correct) / n;
    r.incorrect_pct = 100.0 * static_cast<double>(r.incorrect) / n;
    r.timeout_pct = 100.0 * static_cast<double>(r.timeout) / n;
  }
  const std::size_t decided = r.correct + r.incorrect;
  if (decided > 0) {
    r.mean_latency_windows = lat_w / static_cast<double>(decided);
    r.mean_latency_s = lat_s / static_cast<double>(decided);
  }
  return r;
}

// Window predictions of every trial, in temporal order.
struct TrialPredictions {
  std::vector<ClassLabel> truth;
  std::vector<std::size_t> run_index;
  std::vector<std::vector<ClassLabel>> windows;
  std::size_t win_len = 0, step = 0;
  double fs = 0;

  std::size_t size() const { return truth.size(); }
};

inline TrialReport evaluate(const TrialPredictions& p, const EvidenceConfig& cfg) {
  std::vector<TrialResult> results;
  for (std::size_t t = 0; t < p.size(); ++t)
    results.push_back({p.truth[t], p.run_index[t], p.windows[t].size(), accumulate(p.windows[t], cfg)});
  return summarize(std::move(results), cfg, p.win_len, p.step, p.fs);
}

inline TrialPredictions predict_trials(const Decoder& dec, const Recording& rec, FilterMode mode) {
  dec.check_layout(rec);
  const auto ws = session_windows(rec, dec.config, mode);
  if (ws.trials.empty()) fail(ErrorCode::NoTrials, "session holds no trials");
  const auto base = base_features(ws, dec.config);
  if (static_cast<std::size_t>(base.X.cols()) != (dec.pca ? dec.pca->dim() : dec.clf->dim()))
    fail(ErrorCode::DimensionMismatch, "session features do not match the decoder input width");
  const Vector scores = dec.score_rows(base.X);

  TrialPredictions p;
  p.win_len = ws.win_len;
  p.step = ws.step;
  p.fs = ws.fs;
  for (const auto& t : ws.trials) {
    p.truth.push_back(t.label);
    p.run_index.push_back(t.run_index);
  }
  p.windows.resize(ws.trials.size());
  for (std::size_t i = 0; i < ws.size(); ++i)
    p.windows[ws.trial_index(i)].push_back(scores(static_cast<Eigen::Index>(i)) > 0.0 ? ClassLabel::Right : ClassLabel::Left);
  return p;
}

inline TrialReport replay_session(const Decoder& dec, const Recording& rec, const EvidenceConfig& cfg,
                                  FilterMode mode = FilterMode::ZeroPhase) {
  cfg.validate();
  return evaluate(predict_trials(dec, rec, mode), cfg);
}

// ---- grid search ---------------------------------------------------------------

enum class Objective { Lexicographic, Weighted };

struct ObjectiveSpec {
  Objective kind = Objective::Lexicographic;
  double alpha = 1.0;  // weight of incorrect% (weighted objective)
  double beta = 0.5;   // weight of timeout%
};

struct GridCell {
  EvidenceConfig config;
  TrialReport report;
};

struct GridResult {
  std::vector<double> thresholds, steps;
  std::vector<GridCell> cells;  // row-major: thresholds outer, steps inner
  std::size_t best = 0;
  ObjectiveSpec objective;

  const GridCell& winner() const { return cells[best]; }
};

inline std::vector<double> default_thresholds() {
  std::vector<double> v;
  for (int i = 1; i <= 10; ++i) v.push_back(i / 10.0);
  return v;
}

inline std::vector<double> default_steps() {
  std::vector<double> v;
  for (int i = 1; i <= 10; ++i) v.push_back(i / 100.0);
  return v;
}

// True when a beats b. Ties on every criterion are broken by smaller
// threshold, then smaller step.
inline bool better(const GridCell& a, const GridCell& b, const ObjectiveSpec& obj) {
  const auto& ra = a.report;
  const auto& rb = b.report;
  if (obj.kind == Objective::Weighted) {
    const double sa = ra.correct_pct - obj.alpha * ra.incorrect_pct - obj.beta * ra.timeout_pct;
    const double sb = rb.correct_pct - obj.alpha * rb.incorrect_pct - obj.beta * rb.timeout_pct;
    if (sa != sb) return sa > sb;
  } else {
    if (ra.correct != rb.correct) return ra.correct > rb.correct;
    if (ra.incorrect != rb.incorrect) return ra.incorrect < rb.incorrect;
    if (ra.timeout != rb.timeout) return ra.timeout < rb.timeout;
  }
  if (a.config.threshold != b.config.threshold) return a.config.threshold < b.config.threshold;
  return a.config.step < b.config.step;
}

inline GridResult grid_search(const TrialPredictions& p, const std::vector<double>& thresholds,
                              const std::vector<double>& steps, const ObjectiveSpec& obj = {}) {
  if (thresholds.empty() || steps.empty()) fail(ErrorCode::EmptyGrid, "grid needs at least one threshold and one step");
  if (p.size() == 0) fail(ErrorCode::NoTrials, "no trials to evaluate");
  for (double th : thresholds)
    for (double st : steps) EvidenceConfig{th, st}.validate();
  GridResult g;
  g.thresholds = thresholds;
  g.steps = steps;
  g.objective = obj;
  g.cells.resize(thresholds.size() * steps.size());
  parallel_for(g.cells.size(), [&](std::size_t i) {
    const EvidenceConfig cfg{thresholds[i / steps.size()], steps[i % steps.size()]};
    g.cells[i] = {cfg, evaluate(p, cfg)};
  });
  for (std::size_t i = 1; i < g.cells.size(); ++i)
    if (better(g.cells[i], g.cells[g.best], obj)) g.best = i;
  return g;
}

// Rows are thresholds, columns steps; cells "correct/incorrect/timeout" in percent.
inline std::string grid_csv(const GridResult& g) {
  std::ostringstream os;
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return std::string(buf);
  };
  auto pct = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  os << "threshold\\step";
  for (double s : g.steps) os << ',' << num(s);
  os << '\n';
  for (std::size_t r = 0; r < g.thresholds.size(); ++r) {
    os << num(g.thresholds[r]);
    for (std::size_t c = 0; c < g.steps.size(); ++c) {
      const auto& rep = g.cells[r * g.steps.size() + c].report;
      os << ',' << pct(rep.correct_pct) << '/' << pct(rep.incorrect_pct) << '/' << pct(rep.timeout_pct);
    }
    os << '\n';
  }
  return os.str();
}

// ---- streaming replay ------------------------------------------------------------

enum class StreamState { Pending, Left, Right, Timeout };

struct StreamEvent {
  std::size_t trial = 0;
  std::size_t window_index = 0;  // within the trial, 0-based
  double ev = 0.0;
  StreamState state = StreamState::Pending;
};

inline std::string_view to_string(StreamState s) {
  switch (s) {
    case StreamState::Pending: return "Pending";
    case StreamState::Left: return "Left";
    case StreamState::Right: return "Right";
    case StreamState::Timeout: return "Timeout";
  }
  return "?";
}

// Sample-by-sample replay: causal filter and CAR per row, a window is scored
// as soon as its last sample arrives, and EV updates immediately. Emits one
// event per consumed window. Stops consuming a trial's windows once decided.
inline TrialReport stream_replay(const Decoder& dec, const Recording& rec, const EvidenceConfig& cfg, bool realtime,
                                 const std::function<void(const StreamEvent&)>& sink = {}) {
  cfg.validate();
  dec.check_layout(rec);
  dec.config.validate_for(rec.fs, rec.n_channels());
  const auto spans = dsp::find_trials(rec.events);
  if (spans.empty()) fail(ErrorCode::NoTrials, "session holds no trials");
  const auto [win_len, step] = dsp::window_samples(dec.config.window, rec.fs);
  for (const auto& s : spans)
    if (s.end - s.begin < win_len) fail(ErrorCode::TrialTooShort, "trial shorter than one window");

  const std::size_t nc = rec.n_channels();
  dsp::CausalFilter filter(dsp::design_bandpass(dec.config.band(rec.fs)), nc);
  std::vector<double> row(nc);
  SampleMatrix buffer;  // current trial's preprocessed rows
  std::vector<TrialResult> results;
  std::size_t trial = 0;
  std::optional<Accumulator> acc;
  const auto pause = std::chrono::duration<double>(dec.config.window.step_s);

  for (std::size_t n = 0; n < rec.n_samples() && trial < spans.size(); ++n) {
    for (std::size_t c = 0; c < nc; ++c) row[c] = rec.samples(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c));
    filter.step(row);
    if (dec.config.car) dsp::car_row(row);

    const auto& span = spans[trial];
    if (n < span.begin) continue;
    if (n == span.begin) {
      buffer.resize(static_cast<Eigen::Index>(span.end - span.begin), static_cast<Eigen::Index>(nc));
      acc.emplace(cfg);
    }
    const std::size_t local = n - span.begin;
    for (std::size_t c = 0; c < nc; ++c) buffer(static_cast<Eigen::Index>(local), static_cast<Eigen::Index>(c)) = row[c];

    const std::size_t filled = local + 1;
    const std::size_t n_windows = dsp::window_count(span.end - span.begin, win_len, step);
    if (filled >= win_len && (filled - win_len) % step == 0 && !acc->decided()) {
      const std::size_t w = (filled - win_len) / step;
      const auto window = buffer.middleRows(static_cast<Eigen::Index>(filled - win_len), static_cast<Eigen::Index>(win_len));
      const double score = dec.score_row(base_feature_row(window, dec.config, rec.fs));
      acc->push(score > 0.0 ? ClassLabel::Right : ClassLabel::Left);
      StreamState state = StreamState::Pending;
      if (acc->decided())
        state = acc->finish().decision == Decision::Right ? StreamState::Right : StreamState::Left;
      else if (w + 1 == n_windows)
        state = StreamState::Timeout;
      if (sink) sink({trial, w, acc->value(), state});
      if (realtime) std::this_thread::sleep_for(pause);
    }
    if (n + 1 == span.end) {
      results.push_back({span.label, span.run_index, n_windows, acc->finish()});
      ++trial;
    }
  }
  return summarize(std::move(results), cfg, win_len, step, rec.fs);
}

// ---- JSON ------------------------------------------------------------------------

inline json to_json(const TrialReport& r, bool per_trial = true) {
  json j{{"threshold", r.config.threshold},
         {"step", r.config.step},
         {"n_trials", r.trials.size()},
         {"correct", r.correct},
         {"incorrect", r.incorrect},
         {"timeout", r.timeout},
         {"correct_pct", r.correct_pct},
         {"incorrect_pct", r.incorrect_pct},
         {"timeout_pct", r.timeout_pct},
         {"mean_latency_windows", r.mean_latency_windows},
         {"mean_latency_s", r.mean_latency_s}};
  if (per_trial) {
    json trials = json::array();
    for (const auto& t : r.trials)
      trials.push_back({{"truth", to_string(t.truth)},
                        {"run_index", t.run_index},
                        {"n_windows", t.n_windows},
                        {"decision", to_string(t.outcome.decision)},
                        {"stop_index", t.outcome.stop_index},
                        {"final_ev", t.outcome.trajectory.empty() ? 0.0 : t.outcome.trajectory.back()}});
    j["trials"] = trials;
  }
  return j;
}

}  // namespace mi::evidence
