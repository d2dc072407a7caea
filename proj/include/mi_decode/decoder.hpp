#pragma once

// Preprocessing and feature configuration, and the Decoder: a fitted feature
// reducer paired with a classifier. A decoder directory holds
//   decoder.json   config, provenance, ids of the paired parts
//   pca.json       mean, explained variance ratios, shape (when PCA is used)
//   pca.f32le      component matrix, k x d row-major little-endian binary32
//   lda.json | centroid.json

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mi_decode/classify.hpp"
#include "mi_decode/dsp.hpp"
#include "mi_decode/error.hpp"
#include "mi_decode/features.hpp"
#include "mi_decode/hash.hpp"
#include "mi_decode/io.hpp"
#include "mi_decode/types.hpp"

namespace mi {

using json = nlohmann::json;

inline constexpr const char* kToolVersion = "0.1.0";

enum class FilterMode { ZeroPhase, Causal };
enum class FeatureMode { Raw, Psd };

inline std::string_view to_string(FilterMode m) { return m == FilterMode::ZeroPhase ? "zero-phase" : "causal"; }

inline FilterMode parse_filter_mode(std::string_view s) {
  if (s == "zero-phase") return FilterMode::ZeroPhase;
  if (s == "causal") return FilterMode::Causal;
  fail(ErrorCode::InvalidConfig, "filter must be zero-phase or causal");
}

// Everything needed to turn a recording into classifier input.
struct DecoderConfig {
  double band_low_hz = 4.0;
  double band_high_hz = 30.0;
  int band_order = 4;
  bool car = true;
  FilterMode filter = FilterMode::ZeroPhase;
  dsp::WindowSpec window;
  FeatureMode features = FeatureMode::Psd;
  features::PsdFeatureSpec psd;
  std::size_t pca_k = 0;  // 0: no PCA stage
  classify::ClassifierKind classifier = classify::ClassifierKind::Lda;

  dsp::BandpassSpec band(double fs) const { return {band_low_hz, band_high_hz, band_order, fs}; }

  // "pca" (raw windows + PCA), "raw", "psd", "psd+pca"
  std::string feature_name() const {
    if (features == FeatureMode::Raw) return pca_k > 0 ? "pca" : "raw";
    return pca_k > 0 ? "psd+pca" : "psd";
  }

  // Checks everything that does not depend on the data.
  void validate() const {
    if (!(band_low_hz > 0 && band_low_hz < band_high_hz))
      fail(ErrorCode::InvalidConfig, "band needs 0 < low < high");
    if (band_order != 2 && band_order != 4 && band_order != 6 && band_order != 8)
      fail(ErrorCode::InvalidConfig, "band order must be 2, 4, 6 or 8");
    if (!(window.len_s > 0 && window.step_s > 0)) fail(ErrorCode::InvalidConfig, "window length and step must be positive");
    if (features == FeatureMode::Psd) {
      if (psd.welch.nperseg < 2 || psd.welch.noverlap >= psd.welch.nperseg)
        fail(ErrorCode::InvalidConfig, "Welch needs 0 <= noverlap < nperseg");
    }
  }

  // Checks against a concrete sampling rate and channel count.
  void validate_for(double fs, std::size_t n_channels) const {
    validate();
    band(fs).validate();
    auto [win_len, step] = dsp::window_samples(window, fs);
    (void)step;
    if (car && n_channels < 2) fail(ErrorCode::TooFewChannels, "common average reference needs at least 2 channels");
    if (features == FeatureMode::Psd) {
      psd.welch.validate(win_len);
      if (psd.kept_bins(fs).empty()) fail(ErrorCode::InvalidConfig, "PSD frequency range keeps no bins");
    }
  }

  std::size_t base_dim(double fs, std::size_t n_channels) const {
    if (features == FeatureMode::Raw) return dsp::window_samples(window, fs).first * n_channels;
    return psd.feature_count(fs, n_channels);
  }
};

inline json to_json(const DecoderConfig& c) {
  std::string feat = c.features == FeatureMode::Raw ? "raw" : "psd";
  return json{{"band_low", c.band_low_hz},
              {"band_high", c.band_high_hz},
              {"band_order", c.band_order},
              {"car", c.car},
              {"filter", to_string(c.filter)},
              {"window_s", c.window.len_s},
              {"step_s", c.window.step_s},
              {"features", feat},
              {"pca_k", c.pca_k},
              {"psd_nperseg", c.psd.welch.nperseg},
              {"psd_noverlap", c.psd.welch.noverlap},
              {"psd_layout", c.psd.layout == features::PsdLayout::PerChannel ? "per-channel" : "channel-average"},
              {"psd_fmin", c.psd.fmin_hz},
              {"psd_fmax", c.psd.fmax_hz},
              {"classifier", classify::to_string(c.classifier)}};
}

// Reads the keys present in `j`, leaving the rest of `c` untouched.
inline void merge_json(DecoderConfig& c, const json& j) {
  try {
    if (j.contains("band_low")) c.band_low_hz = j.at("band_low").get<double>();
    if (j.contains("band_high")) c.band_high_hz = j.at("band_high").get<double>();
    if (j.contains("band_order")) c.band_order = j.at("band_order").get<int>();
    if (j.contains("car")) c.car = j.at("car").get<bool>();
    if (j.contains("filter")) c.filter = parse_filter_mode(j.at("filter").get<std::string>());
    if (j.contains("window_s")) c.window.len_s = j.at("window_s").get<double>();
    if (j.contains("step_s")) c.window.step_s = j.at("step_s").get<double>();
    if (j.contains("features")) {
      const auto f = j.at("features").get<std::string>();
      // "pca" and "psd+pca" are shorthands that also require pca_k
      if (f == "raw" || f == "pca")
        c.features = FeatureMode::Raw;
      else if (f == "psd" || f == "psd+pca")
        c.features = FeatureMode::Psd;
      else
        fail(ErrorCode::InvalidConfig, "features must be raw, pca, psd or psd+pca");
      if ((f == "pca" || f == "psd+pca") && !j.contains("pca_k") && c.pca_k == 0)
        fail(ErrorCode::InvalidConfig, "features '" + f + "' needs pca_k");
    }
    if (j.contains("pca_k")) c.pca_k = j.at("pca_k").get<std::size_t>();
    if (j.contains("psd_nperseg")) c.psd.welch.nperseg = j.at("psd_nperseg").get<std::size_t>();
    if (j.contains("psd_noverlap")) c.psd.welch.noverlap = j.at("psd_noverlap").get<std::size_t>();
    if (j.contains("psd_layout")) {
      const auto l = j.at("psd_layout").get<std::string>();
      if (l == "per-channel")
        c.psd.layout = features::PsdLayout::PerChannel;
      else if (l == "channel-average")
        c.psd.layout = features::PsdLayout::ChannelAverage;
      else
        fail(ErrorCode::InvalidConfig, "psd_layout must be per-channel or channel-average");
    }
    if (j.contains("psd_fmin")) c.psd.fmin_hz = j.at("psd_fmin").get<double>();
    if (j.contains("psd_fmax")) c.psd.fmax_hz = j.at("psd_fmax").get<double>();
    if (j.contains("classifier")) c.classifier = classify::parse_classifier_kind(j.at("classifier").get<std::string>());
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("config: ") + e.what());
  }
}

// ---- preprocessing -----------------------------------------------------------

// Band-pass (zero-phase or causal), then common average reference.
inline Recording preprocess(const Recording& rec, const DecoderConfig& cfg, FilterMode mode) {
  const auto coeffs = dsp::design_bandpass(cfg.band(rec.fs));
  Recording out = mode == FilterMode::ZeroPhase ? dsp::filter_offline(rec, coeffs) : dsp::filter_forward(rec, coeffs);
  return cfg.car ? dsp::apply_car(out) : out;
}

inline dsp::WindowSet session_windows(const Recording& rec, const DecoderConfig& cfg, FilterMode mode) {
  cfg.validate_for(rec.fs, rec.n_channels());
  const Recording pre = preprocess(rec, cfg, mode);
  return dsp::window_trials(dsp::extract_trials(pre), rec.fs, cfg.window);
}

// Features before any PCA stage.
inline features::FeatureMatrix base_features(const dsp::WindowSet& ws, const DecoderConfig& cfg) {
  return cfg.features == FeatureMode::Raw ? features::raw_features(ws) : features::psd_features(ws, cfg.psd);
}

inline features::FeatureMatrix session_features(const Recording& rec, const DecoderConfig& cfg) {
  return base_features(session_windows(rec, cfg, cfg.filter), cfg);
}

template <typename Derived>
Vector base_feature_row(const Eigen::MatrixBase<Derived>& window, const DecoderConfig& cfg, double fs) {
  return cfg.features == FeatureMode::Raw ? features::raw_feature_row(window)
                                          : features::psd_feature_row(window, cfg.psd, fs);
}

inline std::string session_fingerprint(const Session& s) {
  Fnv1a h;
  h.update(io::meta_to_json(s.recording, s.meta).dump());
  const auto bytes =
      io::encode_f32le(std::span(s.recording.samples.data(), static_cast<std::size_t>(s.recording.samples.size())));
  h.update(bytes);
  return h.hex();
}

// ---- decoder -------------------------------------------------------------------

struct Provenance {
  std::vector<std::string> sessions;  // "<subject>/<session_kind>/<fingerprint>"
  std::string config_hash;
};

struct Decoder {
  DecoderConfig config;
  double fs = 0.0;
  std::vector<std::string> channel_labels;
  std::optional<features::PcaTransform> pca;
  std::shared_ptr<const classify::Classifier> clf;
  Provenance provenance;

  std::size_t feature_dim() const { return pca ? pca->k() : clf->dim(); }

  std::string pca_id() const;

  // base features -> classifier input
  Matrix project(const Matrix& base) const { return pca ? features::pca_transform(*pca, base) : base; }

  // Row-at-a-time scoring shared by the batch and streaming replays so both
  // perform identical arithmetic.
  double score_row(const Vector& base_row) const {
    Matrix row = base_row.transpose();
    return clf->score(project(row))(0);
  }

  Vector score_rows(const Matrix& base) const {
    Vector out(base.rows());
    for (Eigen::Index i = 0; i < base.rows(); ++i) out(i) = score_row(base.row(i).transpose());
    return out;
  }

  std::vector<ClassLabel> predict(const Matrix& base) const { return clf->predict(project(base)); }

  void check_layout(const Recording& rec) const {
    if (rec.fs != fs || rec.channel_labels != channel_labels)
      fail(ErrorCode::DimensionMismatch, "session layout (fs/channels) differs from the decoder's training layout");
  }
};

inline std::vector<unsigned char> pca_payload(const features::PcaTransform& t) {
  // components.data() is column-major; emit row-major explicitly
  std::vector<double> rowmajor;
  rowmajor.reserve(static_cast<std::size_t>(t.components.size()));
  for (Eigen::Index i = 0; i < t.components.rows(); ++i)
    for (Eigen::Index j = 0; j < t.components.cols(); ++j) rowmajor.push_back(t.components(i, j));
  return io::encode_f32le(rowmajor);
}

inline json pca_json(const features::PcaTransform& t) {
  return json{{"k", t.k()},
              {"d", t.dim()},
              {"n_train", t.n_train},
              {"mean", classify::detail::to_std(t.mean)},
              {"explained_variance_ratio", classify::detail::to_std(t.explained_variance_ratio)},
              {"singular_values", classify::detail::to_std(t.singular_values)},
              {"components_file", "pca.f32le"},
              {"components_layout", "row-major k x d, little-endian binary32"}};
}

inline std::string pca_id_of(const features::PcaTransform& t) {
  Fnv1a h;
  h.update(pca_json(t).dump());
  h.update(pca_payload(t));
  return h.hex();
}

inline std::string Decoder::pca_id() const { return pca ? pca_id_of(*pca) : std::string("none"); }

// Rounds components to binary32 so an in-memory decoder equals its saved form.
inline void quantize_components(features::PcaTransform& t) {
  for (Eigen::Index i = 0; i < t.components.size(); ++i)
    t.components.data()[i] = static_cast<double>(static_cast<float>(t.components.data()[i]));
}

inline json decoder_json(const Decoder& d) {
  return json{{"tool_version", kToolVersion},
              {"config", to_json(d.config)},
              {"fs", d.fs},
              {"channel_labels", d.channel_labels},
              {"feature_dim", d.feature_dim()},
              {"pca_id", d.pca_id()},
              {"classifier", classify::to_string(d.clf->kind())},
              {"provenance", {{"sessions", d.provenance.sessions}, {"config_hash", d.provenance.config_hash}}}};
}

inline const char* classifier_file(classify::ClassifierKind k) {
  return k == classify::ClassifierKind::Lda ? "lda.json" : "centroid.json";
}

inline void save_decoder(const Decoder& d, const std::filesystem::path& dir) {
  io::ensure_dir(dir);
  io::write_text(dir / "decoder.json", decoder_json(d).dump(2) + "\n");
  if (d.pca) {
    json pj = pca_json(*d.pca);
    pj["id"] = d.pca_id();
    io::write_text(dir / "pca.json", pj.dump(2) + "\n");
    io::write_bytes(dir / "pca.f32le", pca_payload(*d.pca));
  }
  json cj = d.clf->to_json();
  cj["pca_id"] = d.pca_id();
  io::write_text(dir / classifier_file(d.clf->kind()), cj.dump(2) + "\n");
}

inline Decoder load_decoder(const std::filesystem::path& dir) {
  auto read_json = [&](const char* name) {
    const auto path = dir / name;
    if (!std::filesystem::is_regular_file(path)) fail(ErrorCode::MissingFile, path.string() + " not found");
    try {
      return json::parse(io::read_text(path));
    } catch (const json::parse_error& e) {
      fail(ErrorCode::MalformedMeta, path.string() + ": " + e.what());
    }
  };
  const json dj = read_json("decoder.json");
  Decoder d;
  try {
    merge_json(d.config, dj.at("config"));
    d.fs = dj.at("fs").get<double>();
    d.channel_labels = dj.at("channel_labels").get<std::vector<std::string>>();
    d.provenance.sessions = dj.at("provenance").at("sessions").get<std::vector<std::string>>();
    d.provenance.config_hash = dj.at("provenance").at("config_hash").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorCode::MalformedMeta, std::string("decoder.json: ") + e.what());
  }
  const std::string expected_pca = dj.value("pca_id", std::string("none"));
  if (expected_pca != "none") {
    const json pj = read_json("pca.json");
    features::PcaTransform t;
    try {
      const auto k = pj.at("k").get<std::size_t>();
      const auto dim = pj.at("d").get<std::size_t>();
      t.n_train = pj.at("n_train").get<std::size_t>();
      t.mean = classify::detail::from_std(pj.at("mean").get<std::vector<double>>());
      t.explained_variance_ratio = classify::detail::from_std(pj.at("explained_variance_ratio").get<std::vector<double>>());
      t.singular_values = classify::detail::from_std(pj.at("singular_values").get<std::vector<double>>());
      const auto bytes = io::read_bytes(dir / "pca.f32le");
      if (bytes.size() != 4 * k * dim) fail(ErrorCode::LengthMismatch, "pca.f32le size does not match k x d");
      t.components.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(dim));
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < dim; ++j)
          t.components(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = io::get_f32le(bytes.data() + 4 * (i * dim + j));
    } catch (const json::exception& e) {
      fail(ErrorCode::MalformedMeta, std::string("pca.json: ") + e.what());
    }
    d.pca = std::move(t);
    if (d.pca_id() != expected_pca) fail(ErrorCode::MalformedMeta, "pca files do not match the id recorded in decoder.json");
  }
  const auto kind = classify::parse_classifier_kind(dj.value("classifier", std::string("lda")));
  const json cj = read_json(classifier_file(kind));
  if (cj.value("pca_id", std::string("none")) != expected_pca)
    fail(ErrorCode::MalformedMeta, "classifier is paired with a different PCA transform");
  d.clf = classify::classifier_from_json(cj);
  if (d.pca && d.pca->k() != d.clf->dim()) fail(ErrorCode::MalformedMeta, "classifier width differs from PCA k");
  return d;
}

}  // namespace mi
