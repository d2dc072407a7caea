#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mi_decode/error.hpp"

namespace mi {

// n_samples x n_channels, one row per time sample.
using SampleMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Left=0, Right=1. A decision score > 0 means Right everywhere in the library.
enum class ClassLabel : std::uint8_t { Left = 0, Right = 1 };

inline int to_int(ClassLabel c) { return static_cast<int>(c); }
inline ClassLabel flip(ClassLabel c) { return c == ClassLabel::Left ? ClassLabel::Right : ClassLabel::Left; }
inline std::string_view to_string(ClassLabel c) { return c == ClassLabel::Left ? "Left" : "Right"; }

enum class EventKind : std::uint8_t { TrialStart, CueLeft, CueRight, FeedbackStart, FeedbackEnd };

inline std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::TrialStart: return "TrialStart";
    case EventKind::CueLeft: return "CueLeft";
    case EventKind::CueRight: return "CueRight";
    case EventKind::FeedbackStart: return "FeedbackStart";
    case EventKind::FeedbackEnd: return "FeedbackEnd";
  }
  return "?";
}

inline std::optional<EventKind> parse_event_kind(std::string_view s) {
  for (auto k : {EventKind::TrialStart, EventKind::CueLeft, EventKind::CueRight, EventKind::FeedbackStart,
                 EventKind::FeedbackEnd}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

inline bool is_cue(EventKind k) { return k == EventKind::CueLeft || k == EventKind::CueRight; }

struct EventMarker {
  std::size_t sample_index = 0;
  EventKind kind = EventKind::TrialStart;
  std::size_t run_index = 0;

  friend bool operator==(const EventMarker&, const EventMarker&) = default;
};

enum class Sensor : std::uint8_t { Gel, Politag, Synthetic };
enum class SessionKind : std::uint8_t { Offline, Online1, Online2 };

inline std::string_view to_string(Sensor s) {
  switch (s) {
    case Sensor::Gel: return "Gel";
    case Sensor::Politag: return "Politag";
    case Sensor::Synthetic: return "Synthetic";
  }
  return "?";
}

inline std::string_view to_string(SessionKind s) {
  switch (s) {
    case SessionKind::Offline: return "Offline";
    case SessionKind::Online1: return "Online1";
    case SessionKind::Online2: return "Online2";
  }
  return "?";
}

inline std::optional<Sensor> parse_sensor(std::string_view s) {
  for (auto v : {Sensor::Gel, Sensor::Politag, Sensor::Synthetic})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

inline std::optional<SessionKind> parse_session_kind(std::string_view s) {
  for (auto v : {SessionKind::Offline, SessionKind::Online1, SessionKind::Online2})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

struct Recording {
  SampleMatrix samples;  // amplitudes, nominally microvolts
  double fs = 512.0;
  std::vector<std::string> channel_labels;
  std::vector<EventMarker> events;

  std::size_t n_samples() const { return static_cast<std::size_t>(samples.rows()); }
  std::size_t n_channels() const { return static_cast<std::size_t>(samples.cols()); }

  // Throws MalformedMeta / UnsortedEvents when an invariant is broken.
  void validate() const {
    if (!(fs > 0.0)) fail(ErrorCode::MalformedMeta, "sampling rate must be positive");
    if (samples.cols() < 1) fail(ErrorCode::MalformedMeta, "recording needs at least one channel");
    if (channel_labels.size() != n_channels())
      fail(ErrorCode::MalformedMeta, "channel label count does not match channel count");
    std::set<std::string> seen(channel_labels.begin(), channel_labels.end());
    if (seen.size() != channel_labels.size()) fail(ErrorCode::MalformedMeta, "channel labels must be unique");
    for (std::size_t i = 0; i < events.size(); ++i) {
      if (events[i].sample_index >= n_samples())
        fail(ErrorCode::MalformedMeta, "event sample_index " + std::to_string(events[i].sample_index) +
                                           " beyond recording length " + std::to_string(n_samples()));
      if (i > 0 && events[i].sample_index < events[i - 1].sample_index)
        fail(ErrorCode::UnsortedEvents, "event " + std::to_string(i) + " precedes its predecessor");
    }
  }
};

struct SessionMeta {
  std::string subject = "synthetic";
  Sensor sensor = Sensor::Synthetic;
  SessionKind session_kind = SessionKind::Offline;
  std::size_t n_runs = 1;
  double fs = 512.0;
  std::vector<std::string> channel_labels;

  friend bool operator==(const SessionMeta&, const SessionMeta&) = default;
};

struct Session {
  Recording recording;
  SessionMeta meta;
};

}  // namespace mi
