// End-to-end acceptance run: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <sstream>

#include "mi_decode/mi_decode.hpp"

using namespace mi;
namespace fs = std::filesystem;

namespace {

// Tolerances and limits, pinned.
constexpr double kPassbandDb = 1.0;
constexpr double kStopbandDb = -20.0;
constexpr double kOracleDb = 1e-6;
constexpr double kCarRel = 1e-9;
constexpr double kParsevalRel = 0.10;
constexpr double kRankTol = 1e-9;
constexpr double kAngleTol = 1e-6;
constexpr double kTightCloudAcc = 0.99;
constexpr double kCvMin = 0.70;
constexpr double kShuffleLo = 0.45, kShuffleHi = 0.55;
constexpr double kTrialCorrectMin = 85.0;
constexpr double kTimeoutMax = 10.0;
constexpr double kFinetuneSlack = 0.01;
constexpr int kFinetuneSeeds = 20;
constexpr std::uint64_t kStudySeed = 7;
constexpr double kStudyDepth = 0.5;

struct Check {
  std::ostringstream notes;
  bool ok = true;
  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      notes << (notes.tellp() > 0 ? "; " : "") << what;
    }
  }
};

// Band-limited PSD features (4-30 Hz): the decoding pipeline used throughout.
DecoderConfig decoder_config() {
  DecoderConfig c;
  c.psd.fmin_hz = 4.0;
  c.psd.fmax_hz = 30.0;
  return c;
}

PipelineConfig pipeline_config() {
  PipelineConfig p;
  p.decoder = decoder_config();
  p.seed = kStudySeed;
  p.erd_depth = kStudyDepth;
  return p;
}

Matrix gaussian(Pcg32& rng, Eigen::Index n, Eigen::Index d) {
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

std::string file_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// ---- 1: filter -----------------------------------------------------------------

double analytic_db(const dsp::BandpassSpec& s, double f) {
  auto warp = [&](double hz) { return 2.0 * s.fs * std::tan(std::numbers::pi * hz / s.fs); };
  const double wl = warp(s.low_hz), wh = warp(s.high_hz), w = warp(f);
  const double x = (w * w - wl * wh) / (w * (wh - wl));
  return -10.0 * std::log10(1.0 + std::pow(x * x, s.order / 2));
}

void filter_correctness(Check& c) {
  const dsp::BandpassSpec spec{4.0, 30.0, 4, 512.0};
  const auto coeffs = dsp::design_bandpass(spec);
  c.require(std::abs(dsp::magnitude_db(coeffs, 10.0, spec.fs)) <= kPassbandDb, "10 Hz outside 1 dB");
  c.require(dsp::magnitude_db(coeffs, 0.5, spec.fs) <= kStopbandDb, "0.5 Hz above -20 dB");
  c.require(dsp::magnitude_db(coeffs, 100.0, spec.fs) <= kStopbandDb, "100 Hz above -20 dB");
  double worst = 0;
  for (double f = 0.25; f < 256.0; f += 0.25) worst = std::max(worst, std::abs(dsp::magnitude_db(coeffs, f, spec.fs) - analytic_db(spec, f)));
  c.require(worst < kOracleDb, "analytic oracle mismatch " + std::to_string(worst));

  for (std::size_t centre : {300u, 511u, 700u}) {
    std::vector<double> x(1024);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double t = (static_cast<double>(i) - static_cast<double>(centre)) / 512.0;
      x[i] = std::exp(-t * t / (2 * 0.03 * 0.03)) * std::cos(2 * std::numbers::pi * 12 * t);
    }
    const auto y = dsp::filtfilt(x, coeffs);
    const long peak = std::max_element(y.begin(), y.end()) - y.begin();
    c.require(std::abs(peak - static_cast<long>(centre)) <= 1, "pulse peak moved");
  }
}

// ---- 2: CAR and windows -----------------------------------------------------------

void car_and_windows(Check& c) {
  Pcg32 rng(2, 1);
  Recording r;
  r.samples.resize(2000, 13);
  for (Eigen::Index i = 0; i < r.samples.size(); ++i) r.samples.data()[i] = 100.0 * rng.normal() + 40.0;
  r.channel_labels = synth::channel_labels(13);
  const auto out = dsp::apply_car(r);
  double worst = 0;
  for (Eigen::Index i = 0; i < out.samples.rows(); ++i)
    worst = std::max(worst, std::abs(out.samples.row(i).mean()) / r.samples.row(i).cwiseAbs().maxCoeff());
  c.require(worst <= kCarRel, "CAR row mean " + std::to_string(worst));

  const auto [len, step] = dsp::window_samples({}, 512);
  c.require(dsp::window_count(2496, len, step) == 63, "2496 samples != 63 windows");

  synth::SynthSpec spec;
  spec.seed = kStudySeed;
  const auto online = synth::generate_session(spec, SessionKind::Online1);
  const auto ws = dsp::window_trials(dsp::extract_trials(online.recording), 512);
  c.require(dsp::find_trials(online.recording.events).size() == 60, "online session is not 60 trials");
  c.require(ws.size() == 3780, "60 trials gave " + std::to_string(ws.size()) + " windows");
}

// ---- 3: Welch -------------------------------------------------------------------

void spectral_oracle(Check& c) {
  Matrix sine(512, 1);
  for (Eigen::Index i = 0; i < 512; ++i) sine(i, 0) = std::sin(2 * std::numbers::pi * 10 * static_cast<double>(i) / 512);
  Eigen::Index arg;
  features::welch_psd(sine, {}, 512).row(0).maxCoeff(&arg);
  c.require(arg == 5, "sine peak at bin " + std::to_string(arg));

  Pcg32 rng(3, 1);
  const Matrix noise = gaussian(rng, 512 * 64, 1);
  const auto psd = features::welch_psd(noise, {}, 512);
  const double power = psd.row(0).sum() * 512.0 / 256.0;
  const double direct = noise.squaredNorm() / static_cast<double>(noise.rows());
  c.require(std::abs(power - direct) <= kParsevalRel * direct, "Parseval off");
}

// ---- 4: PCA ---------------------------------------------------------------------

void pca_properties(Check& c) {
  Pcg32 rng(4, 1);
  for (Eigen::Index r : {1, 3, 7}) {
    const Matrix X = gaussian(rng, 80, r) * gaussian(rng, r, 40);
    const auto curve = features::variance_curve(X);
    c.require(std::abs(curve[static_cast<std::size_t>(r - 1)].cumulative_ratio - 1.0) <= kRankTol, "rank-k variance not 1");
  }
  for (int it = 0; it < 100; ++it) {
    const Eigen::Index n = 5 + rng.next_u32() % 30, d = 2 + rng.next_u32() % 20;
    const Matrix X = gaussian(rng, n, d);
    const auto full = features::pca_fit(X, static_cast<std::size_t>(std::min(n, d)));
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k <= full.k(); ++k) {
      const auto t = full.truncated(k);
      const double err = (features::pca_inverse_transform(t, features::pca_transform(t, X)) - X).squaredNorm();
      if (err > prev * (1 + 1e-12) + 1e-12) c.require(false, "reconstruction error grew");
      prev = err;
    }
  }
  const Matrix X = gaussian(rng, 60, 15);
  const auto a = features::pca_fit(X, 6), b = features::pca_fit(X, 6);
  c.require(std::memcmp(a.components.data(), b.components.data(), sizeof(double) * static_cast<std::size_t>(a.components.size())) == 0,
            "refit not byte-identical");
}

// ---- 5: LDA ---------------------------------------------------------------------

struct Clouds {
  Matrix X;
  std::vector<ClassLabel> y;
};

Clouds clouds(Pcg32& rng, std::size_t n, const Vector& ml, const Vector& mr, const Matrix& L) {
  Clouds out;
  out.X.resize(static_cast<Eigen::Index>(2 * n), ml.size());
  for (std::size_t i = 0; i < 2 * n; ++i) {
    const bool right = i % 2;
    out.X.row(static_cast<Eigen::Index>(i)) = ((right ? mr : ml) + L * gaussian(rng, ml.size(), 1)).transpose();
    out.y.push_back(right ? ClassLabel::Right : ClassLabel::Left);
  }
  return out;
}

void lda_oracle(Check& c) {
  Pcg32 rng(5, 1);
  for (int it = 0; it < 20; ++it) {
    Matrix L(2, 2);
    L << 1.0 + rng.uniform(), 0.0, rng.normal(), 0.2 + rng.uniform();
    Vector ml = gaussian(rng, 2, 1), mr = gaussian(rng, 2, 1);
    const auto d = clouds(rng, 100, ml, mr, L);
    double m[2][2] = {}, n[2] = {};
    for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
      const int k = to_int(d.y[static_cast<std::size_t>(i)]);
      m[k][0] += d.X(i, 0);
      m[k][1] += d.X(i, 1);
      ++n[k];
    }
    for (int k = 0; k < 2; ++k) m[k][0] /= n[k], m[k][1] /= n[k];
    double s00 = 0, s01 = 0, s11 = 0;
    for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
      const int k = to_int(d.y[static_cast<std::size_t>(i)]);
      const double a = d.X(i, 0) - m[k][0], b = d.X(i, 1) - m[k][1];
      s00 += a * a, s01 += a * b, s11 += b * b;
    }
    const double dx = m[1][0] - m[0][0], dy = m[1][1] - m[0][1];
    const double wx = s11 * dx - s01 * dy, wy = -s01 * dx + s00 * dy;  // up to 1/det > 0
    const auto model = classify::lda_fit(d.X, d.y);
    const double cosang = (model.weights(0) * wx + model.weights(1) * wy) / (model.weights.norm() * std::hypot(wx, wy));
    c.require(std::acos(std::min(1.0, cosang)) < kAngleTol, "LDA direction off");
  }

  for (int dim : {2, 5, 20}) {
    Vector mr = Vector::Zero(dim);
    mr(0) = 1.0;
    const auto d = clouds(rng, 200, Vector::Zero(dim), mr, 0.1 * Matrix::Identity(dim, dim));
    const auto p = classify::lda_fit(d.X, d.y).predict(d.X);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < p.size(); ++i) ok += p[i] == d.y[i];
    c.require(static_cast<double>(ok) / static_cast<double>(p.size()) >= kTightCloudAcc, "tight clouds below 99%");
  }

  const auto d = clouds(rng, 150, Vector::Zero(3), Vector::Ones(3), Matrix::Identity(3, 3));
  Matrix A(3, 3);
  A << 2, 0.3, 0, -0.4, 1, 0.2, 0.1, 0, 3;
  Vector b(3);
  b << 10, -5, 2;
  const Matrix Xt = (d.X * A).rowwise() + b.transpose();
  const Vector s1 = classify::lda_fit(d.X, d.y).score(d.X), s2 = classify::lda_fit(Xt, d.y).score(Xt);
  const double margin = 1e-6 * s1.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < s1.size(); ++i)
    if (std::abs(s1(i)) >= margin && (s1(i) > 0) != (s2(i) > 0)) c.require(false, "affine map changed a prediction");
}

// ---- 6, 7: evidence -------------------------------------------------------------

struct Outcome {
  evidence::Decision decision;
  std::size_t stop;
};

Outcome interpret(const std::vector<ClassLabel>& seq, long threshold_milli, long step_milli) {
  long ev = 0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    ev += seq[i] == ClassLabel::Right ? step_milli : -step_milli;
    if (ev > threshold_milli) return {evidence::Decision::Right, i + 1};
    if (-ev > threshold_milli) return {evidence::Decision::Left, i + 1};
  }
  return {evidence::Decision::Timeout, seq.size()};
}

std::vector<ClassLabel> random_sequence(Pcg32& rng, std::size_t n, double p_right) {
  std::vector<ClassLabel> s(n);
  for (auto& v : s) v = rng.uniform() < p_right ? ClassLabel::Right : ClassLabel::Left;
  return s;
}

void evidence_oracle(Check& c) {
  Pcg32 rng(6, 1);
  std::size_t mismatches = 0;
  for (int it = 0; it < 10000; ++it) {
    const long step = 1 + static_cast<long>(rng.next_u32() % 100);
    long threshold = step + static_cast<long>(rng.next_u32() % (1001 - step));
    if (it % 4 == 0) threshold = std::min<long>(1000, step * (1 + static_cast<long>(rng.next_u32() % 10)));
    const auto seq = random_sequence(rng, 1 + rng.next_u32() % 80, rng.uniform());
    const auto got = evidence::accumulate(seq, {threshold / 1000.0, step / 1000.0});
    const auto want = interpret(seq, threshold, step);
    mismatches += got.decision != want.decision || got.stop_index != want.stop;
  }
  c.require(mismatches == 0, std::to_string(mismatches) + " interpreter mismatches");
  const std::vector<ClassLabel> rights(10, ClassLabel::Right);
  const auto edge = evidence::accumulate(rights, {0.5, 0.1});
  c.require(edge.decision == evidence::Decision::Right && edge.stop_index == 6, "0.5/0.1 edge does not stop at 6");
}

void grid_determinism(Check& c) {
  Pcg32 rng(7, 1);
  const auto th = evidence::default_thresholds();
  const auto st = evidence::default_steps();
  for (int it = 0; it < 100; ++it) {
    evidence::TrialPredictions p;
    p.win_len = 512;
    p.step = 32;
    p.fs = 512;
    const double skill = 0.5 + 0.4 * rng.uniform();
    const std::size_t n = 20 + rng.next_u32() % 41;
    for (std::size_t t = 0; t < n; ++t) {
      const ClassLabel truth = rng.coin() ? ClassLabel::Right : ClassLabel::Left;
      p.truth.push_back(truth);
      p.run_index.push_back(t / 20);
      p.windows.push_back(random_sequence(rng, 5 + rng.next_u32() % 59, truth == ClassLabel::Right ? skill : 1 - skill));
    }
    const auto g = evidence::grid_search(p, th, st, {});
    // lexicographic: most correct, fewest incorrect, fewest timeouts, then smallest (θ, δ)
    std::size_t best = 0;
    std::tuple<long, long, long> best_key{};
    for (std::size_t i = 0; i < th.size(); ++i)
      for (std::size_t j = 0; j < st.size(); ++j) {
        long cor = 0, inc = 0, tmo = 0;
        for (std::size_t k = 0; k < p.size(); ++k) {
          const auto o = interpret(p.windows[k], std::lround(th[i] * 1000), std::lround(st[j] * 1000));
          if (o.decision == evidence::Decision::Timeout)
            ++tmo;
          else if ((o.decision == evidence::Decision::Right) == (p.truth[k] == ClassLabel::Right))
            ++cor;
          else
            ++inc;
        }
        const std::tuple<long, long, long> key{-cor, inc, tmo};
        if ((i == 0 && j == 0) || key < best_key) {
          best_key = key;
          best = i * st.size() + j;
        }
      }
    if (g.best != best) c.require(false, "grid winner differs at predictor " + std::to_string(it));
  }

  for (int it = 0; it < 1000; ++it) {
    const long step = 1 + static_cast<long>(rng.next_u32() % 100);
    const long threshold = step + static_cast<long>(rng.next_u32() % (1001 - step));
    const auto seq = random_sequence(rng, 1 + rng.next_u32() % 63, rng.uniform());
    const auto base = evidence::accumulate(seq, {threshold / 1000.0, step / 1000.0});
    for (double k : {0.5, 0.1, 1e-3}) {
      const auto s = evidence::accumulate(seq, {k * threshold / 1000.0, k * step / 1000.0});
      if (s.decision != base.decision || s.stop_index != base.stop_index) c.require(false, "scale changed a decision");
    }
  }
}

// ---- 8: synthetic study ----------------------------------------------------------

void end_to_end(Check& c) {
  const auto cfg = pipeline_config();
  const auto sessions = synth::generate_study_sessions(cfg.synth_spec());
  const report::StudySessions study{sessions[0], sessions[1], sessions[2]};
  const auto rep = report::run_repro(study, cfg);

  const double cv = rep["offline_cv"]["mean"];
  c.notes << "cv " << report::fixed(cv, 3);
  c.require(cv >= kCvMin, "CV below 70%");

  auto fm = session_features(study.offline.recording, cfg.decoder);
  const double shuffled = eval::runwise_cv(eval::shuffle_labels(std::move(fm), cfg.seed), cfg.decoder.pca_k, cfg.decoder.classifier).mean;
  c.notes << ", shuffled " << report::fixed(shuffled, 3);
  c.require(shuffled >= kShuffleLo && shuffled <= kShuffleHi, "shuffled control outside [45%, 55%]");

  for (const auto& blk : rep["trial_level"]) {
    const auto& best = blk["best"];
    const double correct = best["correct_pct"], timeout = best["timeout_pct"];
    c.notes << ", " << blk["name"].get<std::string>() << " " << report::fixed(correct, 1) << "% correct/"
            << report::fixed(timeout, 1) << "% timeout";
    c.require(correct >= kTrialCorrectMin, blk["name"].get<std::string>() + " trial accuracy below 85%");
    c.require(timeout <= kTimeoutMax, blk["name"].get<std::string>() + " timeouts above 10%");
  }

  double base = 0, tuned = 0;
  for (int s = 0; s < kFinetuneSeeds; ++s) {
    auto spec = cfg.synth_spec();
    spec.seed = kStudySeed + 100 * static_cast<std::uint64_t>(s);
    const auto st = synth::generate_study_sessions(spec);
    const auto ft = eval::finetune_experiment(st[0], st[1], st[2], cfg.decoder);
    base += ft.base_online2.accuracy / kFinetuneSeeds;
    tuned += ft.tuned_online2.accuracy / kFinetuneSeeds;
  }
  c.notes << ", fine-tune " << report::fixed(tuned, 3) << " vs base " << report::fixed(base, 3);
  c.require(tuned >= base - kFinetuneSlack, "fine-tuned decoder below base");
}

// ---- 9: reproducibility ---------------------------------------------------------

void reproducibility(Check& c) {
  const auto root = fs::temp_directory_path() / "mi_decode_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);
  synth::generate_study(pipeline_config().synth_spec(), root / "study");
  io::write_text(root / "config.json", R"({"psd_fmin": 4, "psd_fmax": 30})");
  std::string reports[2];
  for (int i = 0; i < 2; ++i) {
    const auto out = root / ("repro" + std::to_string(i) + ".json");
    const std::string cmd = std::string(MI_DECODE_CLI) + " repro --study " + (root / "study").string() + " --config " +
                            (root / "config.json").string() + " --report " + out.string() + " >/dev/null";
    c.require(std::system(cmd.c_str()) == 0, "repro exited nonzero");
    reports[i] = file_text(out);
  }
  c.require(!reports[0].empty() && reports[0] == reports[1], "reports differ");
  fs::remove_all(root);
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    double limit_s;
    std::function<void(Check&)> run;
  };
  const Criterion criteria[] = {{1, 1, filter_correctness}, {2, 5, car_and_windows}, {3, 5, spectral_oracle},
                                {4, 30, pca_properties},    {5, 10, lda_oracle},     {6, 5, evidence_oracle},
                                {7, 30, grid_determinism},  {8, 60, end_to_end},     {9, 0, reproducibility}};
  int failures = 0;
  for (const auto& cr : criteria) {
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      cr.run(c);
    } catch (const std::exception& e) {
      c.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (cr.limit_s > 0 && secs >= cr.limit_s) c.require(false, "over " + report::fixed(cr.limit_s, 0) + " s");
    failures += !c.ok;
    std::printf("criterion %d: %s (%.2f s) %s\n", cr.id, c.ok ? "PASS" : "FAIL", secs, c.notes.str().c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
