#pragma once

// Deterministic synthetic motor-imagery sessions.
//
// Every channel carries 1/f-shaped background noise (white noise through a
// one-pole low-pass) plus alpha and beta rhythms whose phases are redrawn at
// each trial start. During the feedback segment of a Right trial the rhythms
// on C3 are scaled by (1 - d) and on C4 by (1 + d/2); Left trials mirror this.
// Samples are rounded to binary32 so that a saved and reloaded session is
// identical to the in-memory one.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "mi_decode/dsp.hpp"
#include "mi_decode/error.hpp"
#include "mi_decode/io.hpp"
#include "mi_decode/rng.hpp"
#include "mi_decode/types.hpp"

namespace mi::synth {

inline constexpr std::size_t kC3 = 3;
inline constexpr std::size_t kC4 = 9;

inline const std::vector<std::string>& default_montage() {
  static const std::vector<std::string> labels = {"FC3", "FC1", "C5", "C3", "C1", "Cz", "FCz",
                                                  "CPz", "C2",  "C4", "C6", "FC2", "FC4"};
  return labels;
}

struct Timeline {
  double rest_s = 2.0;
  double cue_s = 1.0;
  double feedback_s = 4.875;
  double tail_s = 1.0;  // quiet samples after the last trial
};

struct SynthSpec {
  std::uint64_t seed = 7;
  std::size_t offline_runs = 4;
  std::size_t online_runs = 3;
  std::size_t trials_per_run = 20;
  double fs = 512.0;
  std::size_t n_channels = 13;
  double erd_depth = 0.5;
  double noise_sigma = 3.0;  // stationary std of the background
  double noise_pole = 0.95;
  double rhythm_hz = 11.0;
  double beta_hz = 22.0;
  double rhythm_amp = 1.0;
  double beta_amp = 0.5;
  Timeline timeline;

  std::size_t runs_for(SessionKind kind) const { return kind == SessionKind::Offline ? offline_runs : online_runs; }

  void validate() const {
    auto integral = [&](double seconds, const char* what) {
      const double v = seconds * fs;
      if (std::abs(v - std::round(v)) > 1e-9 || v < 0)
        fail(ErrorCode::BadSpec, std::string(what) + " * fs must be a non-negative integer");
    };
    if (!(fs > 0)) fail(ErrorCode::BadSpec, "fs must be positive");
    if (trials_per_run == 0 || trials_per_run % 2 != 0) fail(ErrorCode::BadSpec, "trials_per_run must be even and positive");
    if (offline_runs < 1 || online_runs < 1) fail(ErrorCode::BadSpec, "run counts must be positive");
    if (n_channels <= kC4) fail(ErrorCode::BadSpec, "need at least 10 channels (C3 at 3, C4 at 9)");
    if (!(erd_depth >= 0.0 && erd_depth <= 1.0)) fail(ErrorCode::BadSpec, "erd_depth must lie in [0, 1]");
    if (!(noise_sigma >= 0.0)) fail(ErrorCode::BadSpec, "noise_sigma must be non-negative");
    if (!(noise_pole >= 0.0 && noise_pole < 1.0)) fail(ErrorCode::BadSpec, "noise_pole must lie in [0, 1)");
    if (!(timeline.feedback_s > 0)) fail(ErrorCode::BadSpec, "feedback_s must be positive");
    integral(timeline.rest_s, "rest_s");
    integral(timeline.cue_s, "cue_s");
    integral(timeline.feedback_s, "feedback_s");
    integral(timeline.tail_s, "tail_s");
    if (timeline.tail_s * fs < 1) fail(ErrorCode::BadSpec, "tail_s must cover at least one sample");
  }
};

inline std::vector<std::string> channel_labels(std::size_t n) {
  std::vector<std::string> out;
  const auto& base = default_montage();
  for (std::size_t i = 0; i < n; ++i) out.push_back(i < base.size() ? base[i] : "E" + std::to_string(i));
  return out;
}

// Per run, trials come in pairs holding one Left and one Right cue in a
// seed-dependent order.
inline std::vector<ClassLabel> cue_order(Pcg32& rng, std::size_t trials_per_run) {
  std::vector<ClassLabel> out;
  for (std::size_t p = 0; p < trials_per_run / 2; ++p) {
    const bool right_first = rng.coin();
    out.push_back(right_first ? ClassLabel::Right : ClassLabel::Left);
    out.push_back(right_first ? ClassLabel::Left : ClassLabel::Right);
  }
  return out;
}

inline Session generate_session(const SynthSpec& spec, SessionKind kind) {
  spec.validate();
  const std::size_t n_runs = spec.runs_for(kind);
  const auto rest = static_cast<std::size_t>(std::llround(spec.timeline.rest_s * spec.fs));
  const auto cue = static_cast<std::size_t>(std::llround(spec.timeline.cue_s * spec.fs));
  const auto fb = static_cast<std::size_t>(std::llround(spec.timeline.feedback_s * spec.fs));
  const auto tail = static_cast<std::size_t>(std::llround(spec.timeline.tail_s * spec.fs));
  const std::size_t trial_len = rest + cue + fb;
  const std::size_t n_trials = n_runs * spec.trials_per_run;
  const std::size_t n_samples = n_trials * trial_len + tail;
  const std::size_t nc = spec.n_channels;

  Pcg32 cue_rng(spec.seed, 1), phase_rng(spec.seed, 2), noise_rng(spec.seed, 3);

  Session s;
  Recording& rec = s.recording;
  rec.fs = spec.fs;
  rec.channel_labels = channel_labels(nc);
  rec.samples.resize(static_cast<Eigen::Index>(n_samples), static_cast<Eigen::Index>(nc));

  struct TrialPlan {
    ClassLabel label;
    std::size_t run;
    std::size_t start;
  };
  std::vector<TrialPlan> plan;
  for (std::size_t r = 0; r < n_runs; ++r)
    for (ClassLabel c : cue_order(cue_rng, spec.trials_per_run)) plan.push_back({c, r, plan.size() * trial_len});

  for (const auto& t : plan) {
    rec.events.push_back({t.start, EventKind::TrialStart, t.run});
    rec.events.push_back({t.start + rest, t.label == ClassLabel::Right ? EventKind::CueRight : EventKind::CueLeft, t.run});
    rec.events.push_back({t.start + rest + cue, EventKind::FeedbackStart, t.run});
    rec.events.push_back({t.start + trial_len, EventKind::FeedbackEnd, t.run});
  }

  const double w_alpha = 2.0 * std::numbers::pi * spec.rhythm_hz / spec.fs;
  const double w_beta = 2.0 * std::numbers::pi * spec.beta_hz / spec.fs;
  const double drive = spec.noise_sigma * std::sqrt(1.0 - spec.noise_pole * spec.noise_pole);
  // sin(w t + p) = sin(w t) cos p + cos(w t) sin p, with t counted from the trial start
  const std::size_t span = trial_len + tail;
  std::vector<double> sin_a(span), cos_a(span), sin_b(span), cos_b(span);
  for (std::size_t t = 0; t < span; ++t) {
    sin_a[t] = std::sin(w_alpha * static_cast<double>(t));
    cos_a[t] = std::cos(w_alpha * static_cast<double>(t));
    sin_b[t] = std::sin(w_beta * static_cast<double>(t));
    cos_b[t] = std::cos(w_beta * static_cast<double>(t));
  }
  std::vector<double> noise_state(nc, 0.0), gain(nc, 1.0);
  std::vector<double> ca(nc, 1.0), sa(nc, 0.0), cb(nc, 1.0), sb(nc, 0.0);
  // start the background in its stationary distribution
  for (std::size_t c = 0; c < nc; ++c) noise_state[c] = spec.noise_sigma * noise_rng.normal();

  std::size_t trial = 0;
  std::size_t trial_origin = 0;
  for (std::size_t n = 0; n < n_samples; ++n) {
    if (trial < plan.size() && n == plan[trial].start) {
      for (std::size_t c = 0; c < nc; ++c) {
        const double pa = 2.0 * std::numbers::pi * phase_rng.uniform();
        const double pb = 2.0 * std::numbers::pi * phase_rng.uniform();
        ca[c] = std::cos(pa);
        sa[c] = std::sin(pa);
        cb[c] = std::cos(pb);
        sb[c] = std::sin(pb);
      }
      trial_origin = n;
      ++trial;
    }
    std::fill(gain.begin(), gain.end(), 1.0);
    if (trial > 0) {
      const auto& t = plan[trial - 1];
      const std::size_t local = n - t.start;
      if (n < t.start + trial_len && local >= rest + cue) {
        const std::size_t suppressed = t.label == ClassLabel::Right ? kC3 : kC4;
        const std::size_t enhanced = t.label == ClassLabel::Right ? kC4 : kC3;
        gain[suppressed] = 1.0 - spec.erd_depth;
        gain[enhanced] = 1.0 + spec.erd_depth / 2.0;
      }
    }
    const std::size_t tn = n - trial_origin;
    for (std::size_t c = 0; c < nc; ++c) {
      noise_state[c] = spec.noise_pole * noise_state[c] + drive * noise_rng.normal();
      const double rhythm = spec.rhythm_amp * (sin_a[tn] * ca[c] + cos_a[tn] * sa[c]) +
                            spec.beta_amp * (sin_b[tn] * cb[c] + cos_b[tn] * sb[c]);
      const double v = noise_state[c] + gain[c] * rhythm;
      rec.samples(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c)) = static_cast<double>(static_cast<float>(v));
    }
  }

  s.meta.subject = "synthetic";
  s.meta.sensor = Sensor::Synthetic;
  s.meta.session_kind = kind;
  s.meta.n_runs = n_runs;
  s.meta.fs = spec.fs;
  s.meta.channel_labels = rec.channel_labels;

  rec.validate();
  (void)dsp::find_trials(rec.events);  // marker grammar holds by construction
  return s;
}

inline constexpr std::array<std::pair<SessionKind, const char*>, 3> kStudyLayout = {
    {{SessionKind::Offline, "offline"}, {SessionKind::Online1, "online1"}, {SessionKind::Online2, "online2"}}};

// Offline, online1 and online2 sessions with seeds seed, seed+1, seed+2.
inline std::vector<Session> generate_study_sessions(const SynthSpec& spec) {
  std::vector<Session> out;
  for (std::size_t i = 0; i < kStudyLayout.size(); ++i) {
    SynthSpec s = spec;
    s.seed = spec.seed + i;
    out.push_back(generate_session(s, kStudyLayout[i].first));
  }
  return out;
}

inline std::vector<std::filesystem::path> generate_study(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  std::vector<std::filesystem::path> dirs;
  auto sessions = generate_study_sessions(spec);
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    const auto dir = out_dir / kStudyLayout[i].second;
    io::save_session(sessions[i].recording, sessions[i].meta, dir);
    dirs.push_back(dir);
  }
  return dirs;
}

}  // namespace mi::synth
