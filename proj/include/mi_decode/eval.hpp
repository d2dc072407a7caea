#pragma once

// Experiment orchestration: run-wise cross-validation, PCA component sweeps,
// decoder training, sample-level evaluation and the fine-tuning experiment.
//
// Folds are whole runs. Windows from one run overlap heavily (480 of 512
// samples at the defaults), so shuffling windows across folds would leak.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mi_decode/classify.hpp"
#include "mi_decode/decoder.hpp"
#include "mi_decode/features.hpp"
#include "mi_decode/hash.hpp"
#include "mi_decode/parallel.hpp"
#include "mi_decode/rng.hpp"

namespace mi::eval {

using json = nlohmann::json;
using features::FeatureMatrix;

inline double accuracy(const std::vector<ClassLabel>& truth, const std::vector<ClassLabel>& pred) {
  if (truth.empty()) return 0.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) ok += truth[i] == pred[i];
  return static_cast<double>(ok) / static_cast<double>(truth.size());
}

inline std::vector<std::size_t> runs_of(const FeatureMatrix& fm) {
  std::set<std::size_t> s(fm.run_index.begin(), fm.run_index.end());
  return {s.begin(), s.end()};
}

struct FoldResult {
  std::size_t test_run = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  double accuracy = 0.0;
  std::string pca_id;  // "none" without a PCA stage
};

struct CvReport {
  std::string features;
  std::size_t pca_k = 0;
  classify::ClassifierKind classifier = classify::ClassifierKind::Lda;
  std::vector<FoldResult> folds;
  double mean = 0.0;
  double std = 0.0;  // population std over folds
};

namespace detail {

inline void finish(CvReport& r) {
  double sum = 0.0;
  for (const auto& f : r.folds) sum += f.accuracy;
  r.mean = sum / static_cast<double>(r.folds.size());
  double ss = 0.0;
  for (const auto& f : r.folds) ss += (f.accuracy - r.mean) * (f.accuracy - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(r.folds.size()));
}

inline std::vector<std::size_t> require_runs(const FeatureMatrix& fm) {
  auto runs = runs_of(fm);
  if (runs.size() < 2) fail(ErrorCode::TooFewRuns, "run-wise cross-validation needs at least two runs");
  return runs;
}

}  // namespace detail

// Leave-one-run-out at window level. The PCA stage (pca_k > 0) is refit on the
// training runs of every fold.
inline CvReport runwise_cv(const FeatureMatrix& base, std::size_t pca_k, classify::ClassifierKind kind,
                           const std::string& feature_name = "") {
  const auto runs = detail::require_runs(base);
  CvReport r;
  r.features = feature_name;
  r.pca_k = pca_k;
  r.classifier = kind;
  r.folds.resize(runs.size());
  parallel_for(runs.size(), [&](std::size_t f) {
    const auto train = features::select_runs(base, runs[f], false);
    const auto test = features::select_runs(base, runs[f], true);
    Matrix Xtr = train.X, Xte = test.X;
    std::string pid = "none";
    if (pca_k > 0) {
      const auto pca = features::pca_fit(train.X, pca_k);
      pid = pca_id_of(pca);
      Xtr = features::pca_transform(pca, train.X);
      Xte = features::pca_transform(pca, test.X);
    }
    const auto clf = classify::fit_classifier(kind, Xtr, train.labels);
    r.folds[f] = {runs[f], train.rows(), test.rows(), accuracy(test.labels, clf->predict(Xte)), pid};
  });
  detail::finish(r);
  return r;
}

inline CvReport runwise_cv(const Recording& rec, const DecoderConfig& cfg) {
  return runwise_cv(session_features(rec, cfg), cfg.pca_k, cfg.classifier, cfg.feature_name());
}

// Window labels permuted uniformly at random (Fisher-Yates on PCG32).
inline FeatureMatrix shuffle_labels(FeatureMatrix fm, std::uint64_t seed) {
  Pcg32 rng(seed, 11);
  for (std::size_t i = fm.labels.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
    std::swap(fm.labels[i - 1], fm.labels[std::min(j, i - 1)]);
  }
  return fm;
}

// ---- PCA sweep -----------------------------------------------------------------

struct SweepPoint {
  std::size_t k = 0;
  double mean = 0.0;
  std::vector<double> fold_accuracy;
};

struct SweepReport {
  std::vector<SweepPoint> points;
  std::size_t best_k = 0;
  double best_mean = 0.0;
};

// One SVD per fold; each k uses the leading k components of it, which equals
// a fresh fit with that k.
inline SweepReport pca_sweep(const FeatureMatrix& base, std::vector<std::size_t> ks, classify::ClassifierKind kind) {
  if (ks.empty()) fail(ErrorCode::BadK, "sweep needs at least one k");
  const auto runs = detail::require_runs(base);
  std::vector<FeatureMatrix> trains, tests;
  std::size_t limit = base.cols();
  for (std::size_t r : runs) {
    trains.push_back(features::select_runs(base, r, false));
    tests.push_back(features::select_runs(base, r, true));
    limit = std::min(limit, trains.back().rows());
  }
  for (std::size_t k : ks)
    if (k < 1 || k > limit)
      fail(ErrorCode::BadK, "k=" + std::to_string(k) + " outside [1, " + std::to_string(limit) + "]");
  const std::size_t k_max = *std::max_element(ks.begin(), ks.end());

  SweepReport rep;
  rep.points.resize(ks.size());
  for (std::size_t i = 0; i < ks.size(); ++i) {
    rep.points[i].k = ks[i];
    rep.points[i].fold_accuracy.resize(runs.size());
  }
  parallel_for(runs.size(), [&](std::size_t f) {
    const auto full = features::pca_fit(trains[f].X, k_max);
    for (std::size_t i = 0; i < ks.size(); ++i) {
      const auto pca = full.truncated(ks[i]);
      const auto clf = classify::fit_classifier(kind, features::pca_transform(pca, trains[f].X), trains[f].labels);
      rep.points[i].fold_accuracy[f] = accuracy(tests[f].labels, clf->predict(features::pca_transform(pca, tests[f].X)));
    }
  });
  for (auto& p : rep.points) p.mean = std::accumulate(p.fold_accuracy.begin(), p.fold_accuracy.end(), 0.0) / static_cast<double>(runs.size());
  // argmax, ties to the smaller k
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < rep.points.size(); ++i) {
    const auto& p = rep.points[i];
    if (!best || p.mean > rep.points[*best].mean || (p.mean == rep.points[*best].mean && p.k < rep.points[*best].k)) best = i;
  }
  rep.best_k = rep.points[*best].k;
  rep.best_mean = rep.points[*best].mean;
  return rep;
}

inline std::vector<std::size_t> default_sweep_ks() { return {50, 100, 200, 400, 800, 1600}; }

// ---- training & sample-level evaluation ------------------------------------------

inline std::string config_hash(const DecoderConfig& cfg) { return fnv1a_hex(to_json(cfg).dump()); }

inline std::string session_tag(const Session& s) {
  return s.meta.subject + "/" + std::string(to_string(s.meta.session_kind)) + "/" + session_fingerprint(s);
}

// PCA (when configured) is fit on the union of all sessions' windows, then the
// classifier on the projected windows.
// `parts[i]` holds the base features of `sessions[i]`.
inline Decoder train_decoder(const std::vector<const Session*>& sessions, const std::vector<const FeatureMatrix*>& parts,
                             const DecoderConfig& cfg) {
  if (sessions.empty()) fail(ErrorCode::NoTrials, "no training sessions");
  const Recording& first = sessions.front()->recording;
  for (const auto* s : sessions)
    if (s->recording.fs != first.fs || s->recording.channel_labels != first.channel_labels)
      fail(ErrorCode::LayoutMismatch, "training sessions differ in sampling rate or channel layout");

  const FeatureMatrix all = features::concat(parts);
  if (all.rows() == 0) fail(ErrorCode::NoTrials, "training sessions hold no windows");

  Decoder d;
  d.config = cfg;
  d.fs = first.fs;
  d.channel_labels = first.channel_labels;
  Matrix X = all.X;
  if (cfg.pca_k > 0) {
    auto pca = features::pca_fit(all.X, cfg.pca_k);
    quantize_components(pca);
    X = features::pca_transform(pca, all.X);
    d.pca = std::move(pca);
  }
  d.clf = classify::fit_classifier(cfg.classifier, X, all.labels);
  d.provenance.config_hash = config_hash(cfg);
  for (const auto* s : sessions) d.provenance.sessions.push_back(session_tag(*s));
  return d;
}

inline Decoder train_decoder(const std::vector<const Session*>& sessions, const DecoderConfig& cfg) {
  std::vector<FeatureMatrix> parts;
  for (const auto* s : sessions) parts.push_back(session_features(s->recording, cfg));
  std::vector<const FeatureMatrix*> ptrs;
  for (const auto& p : parts) ptrs.push_back(&p);
  return train_decoder(sessions, ptrs, cfg);
}

inline Decoder train_decoder(const Session& s, const DecoderConfig& cfg) { return train_decoder({&s}, cfg); }

struct SampleReport {
  std::size_t n_windows = 0;
  double accuracy = 0.0;
  // confusion[true][predicted], index 0 = Left
  std::array<std::array<std::size_t, 2>, 2> confusion{};
};

inline SampleReport eval_samples(const Decoder& dec, const FeatureMatrix& base) {
  if (base.rows() == 0) fail(ErrorCode::NoTrials, "session holds no windows");
  const auto pred = dec.predict(base.X);
  SampleReport r;
  r.n_windows = base.rows();
  for (std::size_t i = 0; i < pred.size(); ++i)
    ++r.confusion[static_cast<std::size_t>(to_int(base.labels[i]))][static_cast<std::size_t>(to_int(pred[i]))];
  r.accuracy = accuracy(base.labels, pred);
  return r;
}

inline SampleReport eval_samples(const Decoder& dec, const Recording& rec) {
  dec.check_layout(rec);
  const auto ws = session_windows(rec, dec.config, dec.config.filter);
  if (ws.size() == 0) fail(ErrorCode::NoTrials, "session holds no trials");
  const auto base = base_features(ws, dec.config);
  return eval_samples(dec, base);
}

struct FinetuneResult {
  SampleReport base_online1;   // offline -> online1
  SampleReport base_online2;   // offline -> online2
  SampleReport tuned_online2;  // offline + online1 -> online2
  Decoder base;
  Decoder tuned;
};

inline FinetuneResult finetune_experiment(const Session& offline, const Session& online1, const Session& online2,
                                          const DecoderConfig& cfg) {
  for (const auto* s : {&online1, &online2})
    if (s->recording.fs != offline.recording.fs || s->recording.channel_labels != offline.recording.channel_labels)
      fail(ErrorCode::LayoutMismatch, "sessions differ in sampling rate or channel layout");
  // each session's features are computed once and shared
  const FeatureMatrix f_off = session_features(offline.recording, cfg);
  const FeatureMatrix f_on1 = session_features(online1.recording, cfg);
  const FeatureMatrix f_on2 = session_features(online2.recording, cfg);
  FinetuneResult r;
  r.base = train_decoder({&offline}, {&f_off}, cfg);
  r.tuned = train_decoder({&offline, &online1}, {&f_off, &f_on1}, cfg);
  r.base_online1 = eval_samples(r.base, f_on1);
  r.base_online2 = eval_samples(r.base, f_on2);
  r.tuned_online2 = eval_samples(r.tuned, f_on2);
  return r;
}

// ---- JSON ------------------------------------------------------------------------

inline json to_json(const CvReport& r) {
  json folds = json::array();
  for (const auto& f : r.folds)
    folds.push_back({{"test_run", f.test_run}, {"n_train", f.n_train}, {"n_test", f.n_test}, {"accuracy", f.accuracy}, {"pca_id", f.pca_id}});
  return json{{"features", r.features},
              {"pca_k", r.pca_k},
              {"classifier", classify::to_string(r.classifier)},
              {"folds", folds},
              {"mean", r.mean},
              {"std", r.std}};
}

inline json to_json(const SweepReport& r) {
  json pts = json::array();
  for (const auto& p : r.points) pts.push_back({{"k", p.k}, {"mean", p.mean}, {"fold_accuracy", p.fold_accuracy}});
  return json{{"points", pts}, {"best_k", r.best_k}, {"best_mean", r.best_mean}};
}

inline json to_json(const SampleReport& r) {
  return json{{"n_windows", r.n_windows},
              {"accuracy", r.accuracy},
              {"confusion", {{"true_left", {{"pred_left", r.confusion[0][0]}, {"pred_right", r.confusion[0][1]}}},
                             {"true_right", {{"pred_left", r.confusion[1][0]}, {"pred_right", r.confusion[1][1]}}}}}};
}

}  // namespace mi::eval
