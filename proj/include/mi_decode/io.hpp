#pragma once

// Session directory persistence and CSV ingestion.
//
// A session directory holds two files:
//   meta.json      subject, sensor, session_kind, fs, n_samples, n_channels,
//                  channel_labels, n_runs, events[{sample_index, kind, run_index}]
//   samples.f32le  little-endian binary32, sample-major interleaved
//                  (s0c0, s0c1, ..., s1c0, ...), exactly 4*n_samples*n_channels bytes

#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mi_decode/error.hpp"
#include "mi_decode/types.hpp"

namespace mi::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr const char* kMetaFile = "meta.json";
inline constexpr const char* kSamplesFile = "samples.f32le";

// ---- little-endian binary32 ------------------------------------------------

inline void put_f32le(std::vector<unsigned char>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  out.push_back(static_cast<unsigned char>(bits & 0xffu));
  out.push_back(static_cast<unsigned char>((bits >> 8) & 0xffu));
  out.push_back(static_cast<unsigned char>((bits >> 16) & 0xffu));
  out.push_back(static_cast<unsigned char>((bits >> 24) & 0xffu));
}

inline float get_f32le(const unsigned char* p) {
  std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                       (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline std::vector<unsigned char> encode_f32le(std::span<const double> values) {
  std::vector<unsigned char> out;
  out.reserve(values.size() * 4);
  for (double v : values) put_f32le(out, static_cast<float>(v));
  return out;
}

inline std::vector<unsigned char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::MissingFile, "cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_bytes(const fs::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoFailure, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::IoFailure, "short write to " + path.string());
}

inline void write_text(const fs::path& path, const std::string& text) {
  write_bytes(path, std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

inline std::string read_text(const fs::path& path) {
  auto bytes = read_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
}

// ---- meta.json ---------------------------------------------------------------

inline json meta_to_json(const Recording& rec, const SessionMeta& meta) {
  json events = json::array();
  for (const auto& e : rec.events)
    events.push_back({{"sample_index", e.sample_index}, {"kind", to_string(e.kind)}, {"run_index", e.run_index}});
  return json{{"subject", meta.subject},
              {"sensor", to_string(meta.sensor)},
              {"session_kind", to_string(meta.session_kind)},
              {"fs", rec.fs},
              {"n_samples", rec.n_samples()},
              {"n_channels", rec.n_channels()},
              {"channel_labels", rec.channel_labels},
              {"n_runs", meta.n_runs},
              {"events", events}};
}

namespace detail {

template <typename T>
T meta_field(const json& j, const char* key) {
  if (!j.contains(key)) fail(ErrorCode::MalformedMeta, std::string("meta.json lacks field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::MalformedMeta, std::string("meta.json field '") + key + "': " + e.what());
  }
}

inline std::size_t meta_count(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number_unsigned())
    fail(ErrorCode::MalformedMeta, std::string("meta.json field '") + key + "' must be a non-negative integer");
  return j.at(key).get<std::size_t>();
}

}  // namespace detail

// ---- session directories -----------------------------------------------------

inline void save_session(const Recording& rec, const SessionMeta& meta, const fs::path& dir) {
  rec.validate();
  ensure_dir(dir);
  write_text(dir / kMetaFile, meta_to_json(rec, meta).dump(2) + "\n");
  const auto n = static_cast<std::size_t>(rec.samples.size());
  write_bytes(dir / kSamplesFile, encode_f32le(std::span(rec.samples.data(), n)));
}

inline Session load_session(const fs::path& dir) {
  const fs::path meta_path = dir / kMetaFile;
  const fs::path samples_path = dir / kSamplesFile;
  if (!fs::is_regular_file(meta_path)) fail(ErrorCode::MissingFile, meta_path.string() + " not found");
  if (!fs::is_regular_file(samples_path)) fail(ErrorCode::MissingFile, samples_path.string() + " not found");

  json j;
  try {
    j = json::parse(read_text(meta_path));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::MalformedMeta, std::string("meta.json is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::MalformedMeta, "meta.json must hold an object");

  Session s;
  SessionMeta& meta = s.meta;
  Recording& rec = s.recording;
  meta.subject = detail::meta_field<std::string>(j, "subject");
  auto sensor = parse_sensor(detail::meta_field<std::string>(j, "sensor"));
  if (!sensor) fail(ErrorCode::MalformedMeta, "unknown sensor");
  meta.sensor = *sensor;
  auto kind = parse_session_kind(detail::meta_field<std::string>(j, "session_kind"));
  if (!kind) fail(ErrorCode::MalformedMeta, "unknown session_kind");
  meta.session_kind = *kind;
  meta.fs = detail::meta_field<double>(j, "fs");
  meta.n_runs = detail::meta_count(j, "n_runs");
  meta.channel_labels = detail::meta_field<std::vector<std::string>>(j, "channel_labels");
  const std::size_t n_samples = detail::meta_count(j, "n_samples");
  const std::size_t n_channels = detail::meta_count(j, "n_channels");
  if (meta.n_runs < 1) fail(ErrorCode::MalformedMeta, "n_runs must be at least 1");
  if (n_channels < 1) fail(ErrorCode::MalformedMeta, "n_channels must be at least 1");
  if (meta.channel_labels.size() != n_channels)
    fail(ErrorCode::MalformedMeta, "channel_labels length differs from n_channels");

  if (!j.contains("events") || !j.at("events").is_array())
    fail(ErrorCode::MalformedMeta, "meta.json lacks an events array");
  for (const auto& ej : j.at("events")) {
    EventMarker e;
    e.sample_index = detail::meta_count(ej, "sample_index");
    e.run_index = detail::meta_count(ej, "run_index");
    auto k = parse_event_kind(detail::meta_field<std::string>(ej, "kind"));
    if (!k) fail(ErrorCode::MalformedMeta, "unknown event kind");
    e.kind = *k;
    if (e.run_index >= meta.n_runs)
      fail(ErrorCode::MalformedMeta, "event references run " + std::to_string(e.run_index) + " but n_runs is " +
                                         std::to_string(meta.n_runs));
    rec.events.push_back(e);
  }

  const auto bytes = read_bytes(samples_path);
  const std::size_t expected = 4 * n_samples * n_channels;
  if (bytes.size() != expected)
    fail(ErrorCode::LengthMismatch,
         "samples.f32le holds " + std::to_string(bytes.size()) + " bytes, expected " + std::to_string(expected));

  rec.fs = meta.fs;
  rec.channel_labels = meta.channel_labels;
  rec.samples.resize(static_cast<Eigen::Index>(n_samples), static_cast<Eigen::Index>(n_channels));
  double* dst = rec.samples.data();
  for (std::size_t i = 0; i < n_samples * n_channels; ++i) dst[i] = get_f32le(bytes.data() + 4 * i);
  rec.validate();
  return s;
}

// ---- CSV import --------------------------------------------------------------

struct CsvImportOptions {
  double fs = 512.0;
  bool has_header = true;
  // Column holding integer event codes; a header name, or a 0-based index when
  // the file has no header. Code 0 means "no event on this row".
  std::optional<std::string> event_column;
  std::map<long, EventKind> event_map;
  // Optional integer column assigning each row's events to a run.
  std::optional<std::string> run_column;
};

namespace detail {

// RFC-4180 record splitting: quoted fields, doubled quotes, CRLF tolerated.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field.push_back(c);
      any = true;
    }
  }
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_double(const std::string& raw) {
  std::string s = trim(raw);
  if (s.empty()) return std::nullopt;
  const char* first = s.data();
  if (*first == '+') ++first;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<long> parse_long(const std::string& raw) {
  std::string s = trim(raw);
  long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::size_t resolve_column(const std::string& name, const std::vector<std::string>& header,
                                  std::size_t width) {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (trim(header[i]) == name) return i;
  if (auto idx = parse_long(name); idx && *idx >= 0 && static_cast<std::size_t>(*idx) < width)
    return static_cast<std::size_t>(*idx);
  fail(ErrorCode::MalformedMeta, "column '" + name + "' not found");
}

}  // namespace detail

inline Recording import_csv_text(const std::string& text, const CsvImportOptions& opt) {
  auto rows = detail::parse_csv(text);
  std::vector<std::string> header;
  if (opt.has_header && !rows.empty()) {
    header = rows.front();
    rows.erase(rows.begin());
  }
  const std::size_t width = !header.empty() ? header.size() : (rows.empty() ? 0 : rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    if (rows[r].size() != width)
      fail(ErrorCode::RaggedRows, "row " + std::to_string(r + 1) + " has " + std::to_string(rows[r].size()) +
                                      " cells, expected " + std::to_string(width));

  std::optional<std::size_t> event_col, run_col;
  if (opt.event_column) event_col = detail::resolve_column(*opt.event_column, header, width);
  if (opt.run_column) run_col = detail::resolve_column(*opt.run_column, header, width);

  std::vector<std::size_t> channel_cols;
  for (std::size_t c = 0; c < width; ++c)
    if (c != event_col && c != run_col) channel_cols.push_back(c);

  Recording rec;
  rec.fs = opt.fs;
  for (std::size_t c : channel_cols)
    rec.channel_labels.push_back(header.empty() ? "ch" + std::to_string(c) : detail::trim(header[c]));
  rec.samples.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(channel_cols.size()));

  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t j = 0; j < channel_cols.size(); ++j) {
      auto v = detail::parse_double(rows[r][channel_cols[j]]);
      if (!v)
        fail(ErrorCode::NonNumericCell, "row " + std::to_string(r + 1) + ", column " +
                                            std::to_string(channel_cols[j]) + ": '" + rows[r][channel_cols[j]] + "'");
      rec.samples(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = *v;
    }
    std::size_t run = 0;
    if (run_col) {
      auto v = detail::parse_long(rows[r][*run_col]);
      if (!v || *v < 0) fail(ErrorCode::NonNumericCell, "row " + std::to_string(r + 1) + ": bad run index");
      run = static_cast<std::size_t>(*v);
    }
    if (event_col) {
      auto code = detail::parse_long(rows[r][*event_col]);
      if (!code) fail(ErrorCode::NonNumericCell, "row " + std::to_string(r + 1) + ": event code is not an integer");
      if (*code == 0) continue;
      auto it = opt.event_map.find(*code);
      if (it == opt.event_map.end())
        fail(ErrorCode::UnknownEventCode, "row " + std::to_string(r + 1) + ": code " + std::to_string(*code));
      rec.events.push_back({r, it->second, run});
    }
  }
  rec.validate();
  return rec;
}

inline Recording import_csv(const fs::path& path, const CsvImportOptions& opt) {
  if (!fs::is_regular_file(path)) fail(ErrorCode::MissingFile, path.string() + " not found");
  return import_csv_text(read_text(path), opt);
}

// "1=CueLeft,2=CueRight" -> {1: CueLeft, 2: CueRight}
inline std::map<long, EventKind> parse_event_map(const std::string& spec) {
  std::map<long, EventKind> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = detail::trim(item);
    if (item.empty()) continue;
    auto eq = item.find('=');
    if (eq == std::string::npos) fail(ErrorCode::InvalidConfig, "event map entry '" + item + "' lacks '='");
    auto code = detail::parse_long(item.substr(0, eq));
    auto kind = parse_event_kind(detail::trim(item.substr(eq + 1)));
    if (!code || !kind) fail(ErrorCode::InvalidConfig, "bad event map entry '" + item + "'");
    out[*code] = *kind;
  }
  return out;
}

}  // namespace mi::io
