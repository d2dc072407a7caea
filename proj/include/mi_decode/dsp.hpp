#pragma once

// Temporal filtering (Butterworth band-pass as second-order sections),
// common average reference, trial extraction and sliding windows.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "mi_decode/error.hpp"
#include "mi_decode/types.hpp"

namespace mi::dsp {

struct BandpassSpec {
  double low_hz = 4.0;
  double high_hz = 30.0;
  int order = 4;  // overall order: number of poles, order/2 biquads
  double fs = 512.0;

  void validate() const {
    if (!(fs > 0.0)) fail(ErrorCode::InvalidBand, "fs must be positive");
    if (!(low_hz > 0.0 && low_hz < high_hz && high_hz < fs / 2.0))
      fail(ErrorCode::InvalidBand, "need 0 < low < high < fs/2");
    if (order != 2 && order != 4 && order != 6 && order != 8)
      fail(ErrorCode::InvalidBand, "order must be one of 2, 4, 6, 8");
  }
};

// Transposed direct form II section, a0 normalized to 1.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;
};

struct FilterCoefficients {
  std::vector<Biquad> sections;

  std::size_t pole_count() const { return 2 * sections.size(); }
};

inline std::complex<double> frequency_response(const FilterCoefficients& c, double f_hz, double fs) {
  const std::complex<double> z1 = std::polar(1.0, -2.0 * std::numbers::pi * f_hz / fs);
  const std::complex<double> z2 = z1 * z1;
  std::complex<double> h = 1.0;
  for (const auto& s : c.sections) h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
  return h;
}

inline double magnitude_db(const FilterCoefficients& c, double f_hz, double fs) {
  return 20.0 * std::log10(std::abs(frequency_response(c, f_hz, fs)));
}

inline std::vector<std::complex<double>> poles(const FilterCoefficients& c) {
  std::vector<std::complex<double>> out;
  for (const auto& s : c.sections) {
    const std::complex<double> disc = std::sqrt(std::complex<double>(s.a1 * s.a1 - 4.0 * s.a2));
    out.push_back((-s.a1 + disc) / 2.0);
    out.push_back((-s.a1 - disc) / 2.0);
  }
  return out;
}

// Butterworth band-pass via the analog prototype, the low-pass to band-pass
// transform and the bilinear transform with prewarped edges. Each section
// holds one conjugate (or real) pole pair and the zero pair {+1, -1}.
inline FilterCoefficients design_bandpass(const BandpassSpec& spec) {
  spec.validate();
  using cd = std::complex<double>;
  const double pi = std::numbers::pi;
  const int n_proto = spec.order / 2;
  const double fs2 = 2.0 * spec.fs;
  const double w_lo = fs2 * std::tan(pi * spec.low_hz / spec.fs);
  const double w_hi = fs2 * std::tan(pi * spec.high_hz / spec.fs);
  const double bw = w_hi - w_lo;
  const double w0_sq = w_lo * w_hi;

  std::vector<cd> analog;
  for (int k = 0; k < n_proto; ++k) {
    const cd p = std::polar(1.0, pi * (2.0 * k + n_proto + 1.0) / (2.0 * n_proto));
    const cd half = p * bw / 2.0;
    const cd root = std::sqrt(half * half - w0_sq);
    analog.push_back(half + root);
    analog.push_back(half - root);
  }

  // Digital gain: bw^N from the transform, then (2fs)^N / prod(2fs - p) from
  // the bilinear map of N zeros at s=0 and N at infinity.
  cd gain = std::pow(bw * fs2, n_proto);
  std::vector<cd> digital;
  for (const cd& p : analog) {
    gain /= (fs2 - p);
    digital.push_back((fs2 + p) / (fs2 - p));
  }

  std::vector<std::pair<cd, cd>> pairs;
  std::vector<double> reals;
  constexpr double kImagTol = 1e-12;
  for (const cd& p : digital) {
    if (std::abs(p.imag()) <= kImagTol * std::abs(p))
      reals.push_back(p.real());
    else if (p.imag() > 0)
      pairs.emplace_back(p, std::conj(p));
  }
  std::sort(reals.begin(), reals.end());
  for (std::size_t i = 0; i + 1 < reals.size(); i += 2) pairs.emplace_back(reals[i], reals[i + 1]);

  FilterCoefficients out;
  const double section_gain = std::pow(std::abs(gain.real()), 1.0 / n_proto);
  const double sign = gain.real() < 0 ? -1.0 : 1.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& [p1, p2] = pairs[i];
    Biquad s;
    const double g = (i == 0 ? sign : 1.0) * section_gain;
    s.b0 = g;
    s.b1 = 0.0;
    s.b2 = -g;
    s.a1 = -(p1 + p2).real();
    s.a2 = (p1 * p2).real();
    out.sections.push_back(s);
  }
  if (static_cast<int>(out.pole_count()) != spec.order)
    fail(ErrorCode::InvalidBand, "pole pairing failed for the requested band");
  for (const auto& p : poles(out))
    if (!(std::abs(p) < 1.0)) fail(ErrorCode::InvalidBand, "designed filter is unstable");
  return out;
}

// ---- streaming (causal) filtering ------------------------------------------

// Per-channel, per-section transposed direct form II state.
class CausalFilter {
 public:
  CausalFilter(FilterCoefficients coeffs, std::size_t n_channels)
      : coeffs_(std::move(coeffs)), n_channels_(n_channels), state_(n_channels * coeffs_.sections.size() * 2, 0.0) {}

  std::size_t n_channels() const { return n_channels_; }
  const FilterCoefficients& coefficients() const { return coeffs_; }

  void reset() { std::fill(state_.begin(), state_.end(), 0.0); }

  // One time step for every channel. `row` is overwritten with the output.
  void step(std::span<double> row) {
    if (row.size() != n_channels_)
      fail(ErrorCode::ChannelCountMismatch,
           "row has " + std::to_string(row.size()) + " values, filter expects " + std::to_string(n_channels_));
    const std::size_t n_sec = coeffs_.sections.size();
    for (std::size_t c = 0; c < n_channels_; ++c) row[c] = step_channel(c, row[c], n_sec);
  }

  // Filters one channel's whole series in place, continuing from its state.
  void run_channel(std::size_t c, std::span<double> x) {
    const std::size_t n_sec = coeffs_.sections.size();
    for (double& v : x) v = step_channel(c, v, n_sec);
  }

 private:
  double step_channel(std::size_t c, double x, std::size_t n_sec) {
    double* st = state_.data() + c * n_sec * 2;
    for (std::size_t k = 0; k < n_sec; ++k) {
      const Biquad& s = coeffs_.sections[k];
      double& z1 = st[2 * k];
      double& z2 = st[2 * k + 1];
      const double y = s.b0 * x + z1;
      z1 = s.b1 * x - s.a1 * y + z2;
      z2 = s.b2 * x - s.a2 * y;
      x = y;
    }
    return x;
  }

  FilterCoefficients coeffs_;
  std::size_t n_channels_;
  std::vector<double> state_;
};

// Single forward pass from zero state; identical arithmetic to streaming the
// rows through CausalFilter::step.
inline SampleMatrix filter_forward(const SampleMatrix& x, const FilterCoefficients& coeffs) {
  CausalFilter f(coeffs, static_cast<std::size_t>(x.cols()));
  SampleMatrix y = x;
  std::vector<double> col(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) col[static_cast<std::size_t>(i)] = x(i, c);
    f.run_channel(static_cast<std::size_t>(c), col);
    for (Eigen::Index i = 0; i < x.rows(); ++i) y(i, c) = col[static_cast<std::size_t>(i)];
  }
  return y;
}

inline Recording filter_forward(const Recording& rec, const FilterCoefficients& coeffs) {
  Recording out = rec;
  out.samples = filter_forward(rec.samples, coeffs);
  return out;
}

inline std::size_t filtfilt_padlen(const FilterCoefficients& coeffs) {
  return 3 * std::max<std::size_t>(coeffs.sections.size() * 2, 24);
}

// Zero-phase forward-backward filtering of one series. Edges are extended by
// odd reflection (2*x[0] - x[k]) and trimmed after both passes.
inline std::vector<double> filtfilt(std::span<const double> x, const FilterCoefficients& coeffs) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  const std::size_t pad = std::min(filtfilt_padlen(coeffs), n - 1);
  std::vector<double> ext(n + 2 * pad);
  for (std::size_t k = 0; k < pad; ++k) ext[k] = 2.0 * x[0] - x[pad - k];
  std::copy(x.begin(), x.end(), ext.begin() + static_cast<std::ptrdiff_t>(pad));
  for (std::size_t k = 0; k < pad; ++k) ext[pad + n + k] = 2.0 * x[n - 1] - x[n - 2 - k];

  CausalFilter f(coeffs, 1);
  f.run_channel(0, ext);
  std::reverse(ext.begin(), ext.end());
  f.reset();
  f.run_channel(0, ext);
  std::reverse(ext.begin(), ext.end());
  return std::vector<double>(ext.begin() + static_cast<std::ptrdiff_t>(pad),
                             ext.begin() + static_cast<std::ptrdiff_t>(pad + n));
}

inline Recording filter_offline(const Recording& rec, const FilterCoefficients& coeffs) {
  Recording out = rec;
  std::vector<double> col(rec.n_samples());
  for (Eigen::Index c = 0; c < rec.samples.cols(); ++c) {
    for (Eigen::Index i = 0; i < rec.samples.rows(); ++i) col[static_cast<std::size_t>(i)] = rec.samples(i, c);
    auto y = filtfilt(col, coeffs);
    for (Eigen::Index i = 0; i < rec.samples.rows(); ++i) out.samples(i, c) = y[static_cast<std::size_t>(i)];
  }
  return out;
}

// ---- common average reference ----------------------------------------------

inline void car_row(std::span<double> row) {
  double mean = 0.0;
  for (double v : row) mean += v;
  mean /= static_cast<double>(row.size());
  for (double& v : row) v -= mean;
}

inline Recording apply_car(const Recording& rec) {
  if (rec.n_channels() < 2) fail(ErrorCode::TooFewChannels, "common average reference needs at least 2 channels");
  Recording out = rec;
  const auto nc = static_cast<std::size_t>(out.samples.cols());
  for (Eigen::Index i = 0; i < out.samples.rows(); ++i) car_row(std::span(out.samples.row(i).data(), nc));
  return out;
}

// ---- trials ----------------------------------------------------------------

struct Trial {
  ClassLabel label = ClassLabel::Left;
  std::size_t run_index = 0;
  std::size_t begin = 0;  // FeedbackStart sample in the source recording
  std::size_t end = 0;    // FeedbackEnd sample (exclusive)
  SampleMatrix samples;   // rows [begin, end)

  std::size_t length() const { return end - begin; }
};

// Span bookkeeping only; no samples are copied.
struct TrialSpan {
  ClassLabel label;
  std::size_t run_index;
  std::size_t begin;
  std::size_t end;
};

// Walks the markers as a small state machine: Cue -> FeedbackStart -> FeedbackEnd.
inline std::vector<TrialSpan> find_trials(const std::vector<EventMarker>& events) {
  enum class State { Idle, Cued, Feedback };
  State state = State::Idle;
  TrialSpan cur{ClassLabel::Left, 0, 0, 0};
  std::vector<TrialSpan> out;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const EventMarker& e = events[i];
    const std::string where = " (event " + std::to_string(i) + ", sample " + std::to_string(e.sample_index) + ")";
    switch (e.kind) {
      case EventKind::TrialStart:
        if (state == State::Cued) fail(ErrorCode::OrphanMarker, "cue without feedback before next trial" + where);
        if (state == State::Feedback) fail(ErrorCode::OverlappingTrials, "trial starts inside feedback" + where);
        break;
      case EventKind::CueLeft:
      case EventKind::CueRight:
        if (state == State::Cued) fail(ErrorCode::OrphanMarker, "cue without feedback" + where);
        if (state == State::Feedback) fail(ErrorCode::OverlappingTrials, "cue inside feedback" + where);
        cur = {e.kind == EventKind::CueRight ? ClassLabel::Right : ClassLabel::Left, e.run_index, 0, 0};
        state = State::Cued;
        break;
      case EventKind::FeedbackStart:
        if (state == State::Idle) fail(ErrorCode::OrphanMarker, "feedback start without cue" + where);
        if (state == State::Feedback) fail(ErrorCode::OverlappingTrials, "nested feedback start" + where);
        cur.begin = e.sample_index;
        state = State::Feedback;
        break;
      case EventKind::FeedbackEnd:
        if (state != State::Feedback) fail(ErrorCode::OrphanMarker, "feedback end without start" + where);
        if (e.sample_index <= cur.begin) fail(ErrorCode::OrphanMarker, "empty feedback segment" + where);
        cur.end = e.sample_index;
        out.push_back(cur);
        state = State::Idle;
        break;
    }
  }
  if (state != State::Idle) fail(ErrorCode::OrphanMarker, "recording ends inside an unfinished trial");
  return out;
}

inline std::vector<Trial> extract_trials(const Recording& rec) {
  std::vector<Trial> out;
  for (const TrialSpan& s : find_trials(rec.events)) {
    if (s.end > rec.n_samples()) fail(ErrorCode::OrphanMarker, "trial extends past the recording");
    Trial t;
    t.label = s.label;
    t.run_index = s.run_index;
    t.begin = s.begin;
    t.end = s.end;
    t.samples = rec.samples.middleRows(static_cast<Eigen::Index>(s.begin), static_cast<Eigen::Index>(s.end - s.begin));
    out.push_back(std::move(t));
  }
  return out;
}

// ---- windows ---------------------------------------------------------------

struct WindowSpec {
  double len_s = 1.0;
  double step_s = 0.0625;
};

// Samples per window and per step; rejects non-integer products.
inline std::pair<std::size_t, std::size_t> window_samples(const WindowSpec& w, double fs) {
  auto to_count = [](double v, const char* what) {
    const double r = std::round(v);
    if (std::abs(v - r) > 1e-9 * std::max(1.0, std::abs(v)) || r < 1.0)
      fail(ErrorCode::NonIntegerWindow, std::string(what) + " * fs = " + std::to_string(v) + " is not a positive integer");
    return static_cast<std::size_t>(r);
  };
  return {to_count(w.len_s * fs, "window length"), to_count(w.step_s * fs, "window step")};
}

inline std::size_t window_count(std::size_t n_t, std::size_t win_len, std::size_t step) {
  return n_t < win_len ? 0 : 1 + (n_t - win_len) / step;
}

struct WindowRef {
  std::size_t trial = 0;
  std::size_t offset = 0;  // first sample, relative to the trial
};

// Windows are kept as references into the owned trials. flatten() yields the
// channel-major vector (c0 t0..tW-1, c1 t0..tW-1, ...).
struct WindowSet {
  std::vector<Trial> trials;
  std::vector<WindowRef> refs;
  std::size_t win_len = 0;
  std::size_t step = 0;
  double fs = 0.0;

  std::size_t size() const { return refs.size(); }
  std::size_t n_channels() const { return trials.empty() ? 0 : static_cast<std::size_t>(trials[0].samples.cols()); }
  ClassLabel label(std::size_t i) const { return trials[refs[i].trial].label; }
  std::size_t run_index(std::size_t i) const { return trials[refs[i].trial].run_index; }
  std::size_t trial_index(std::size_t i) const { return refs[i].trial; }

  // win_len x n_channels view of window i
  auto window(std::size_t i) const {
    const auto& r = refs[i];
    return trials[r.trial].samples.middleRows(static_cast<Eigen::Index>(r.offset), static_cast<Eigen::Index>(win_len));
  }

  void flatten_into(std::size_t i, std::span<double> out) const {
    auto w = window(i);
    const auto nc = static_cast<std::size_t>(w.cols());
    for (std::size_t c = 0; c < nc; ++c)
      for (std::size_t t = 0; t < win_len; ++t)
        out[c * win_len + t] = w(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c));
  }
};

inline WindowSet window_trials(std::vector<Trial> trials, double fs, const WindowSpec& spec = {}) {
  auto [win_len, step] = window_samples(spec, fs);
  WindowSet ws;
  ws.win_len = win_len;
  ws.step = step;
  ws.fs = fs;
  for (std::size_t t = 0; t < trials.size(); ++t) {
    const std::size_t n_t = trials[t].length();
    if (n_t < win_len)
      fail(ErrorCode::TrialTooShort,
           "trial " + std::to_string(t) + " has " + std::to_string(n_t) + " samples, window needs " + std::to_string(win_len));
    const std::size_t n_w = window_count(n_t, win_len, step);
    for (std::size_t w = 0; w < n_w; ++w) ws.refs.push_back({t, w * step});
  }
  ws.trials = std::move(trials);
  return ws;
}

}  // namespace mi::dsp
