#pragma once

// Feature extraction: PCA (SVD of the centered data matrix) and Welch
// power-spectral-density features.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/SVD>
#include <fftw3.h>

#include "mi_decode/dsp.hpp"
#include "mi_decode/error.hpp"
#include "mi_decode/types.hpp"

namespace mi::features {

// windows x features, with per-window provenance
struct FeatureMatrix {
  Matrix X;
  std::vector<ClassLabel> labels;
  std::vector<std::size_t> trial_index;
  std::vector<std::size_t> run_index;

  std::size_t rows() const { return static_cast<std::size_t>(X.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(X.cols()); }
};

// Rows of `fm` whose run is (or is not) `run`.
inline FeatureMatrix select_runs(const FeatureMatrix& fm, std::size_t run, bool keep) {
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < fm.rows(); ++i)
    if ((fm.run_index[i] == run) == keep) rows.push_back(static_cast<Eigen::Index>(i));
  FeatureMatrix out;
  out.X.resize(static_cast<Eigen::Index>(rows.size()), fm.X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.X.row(static_cast<Eigen::Index>(i)) = fm.X.row(rows[i]);
    out.labels.push_back(fm.labels[static_cast<std::size_t>(rows[i])]);
    out.trial_index.push_back(fm.trial_index[static_cast<std::size_t>(rows[i])]);
    out.run_index.push_back(fm.run_index[static_cast<std::size_t>(rows[i])]);
  }
  return out;
}

inline FeatureMatrix concat(const std::vector<const FeatureMatrix*>& parts) {
  FeatureMatrix out;
  Eigen::Index rows = 0, cols = parts.empty() ? 0 : parts.front()->X.cols();
  for (auto* p : parts) {
    if (p->X.cols() != cols) fail(ErrorCode::DimensionMismatch, "feature matrices differ in width");
    rows += p->X.rows();
  }
  out.X.resize(rows, cols);
  Eigen::Index at = 0;
  for (auto* p : parts) {
    out.X.middleRows(at, p->X.rows()) = p->X;
    at += p->X.rows();
    out.labels.insert(out.labels.end(), p->labels.begin(), p->labels.end());
    out.trial_index.insert(out.trial_index.end(), p->trial_index.begin(), p->trial_index.end());
    out.run_index.insert(out.run_index.end(), p->run_index.begin(), p->run_index.end());
  }
  return out;
}

// ---- PCA -------------------------------------------------------------------

struct PcaTransform {
  Vector mean;                      // length d
  Matrix components;                // k x d, orthonormal rows
  Vector explained_variance_ratio;  // length k, non-increasing
  Vector singular_values;           // length k, of the centered training matrix
  std::size_t n_train = 0;

  std::size_t k() const { return static_cast<std::size_t>(components.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(components.cols()); }

  // Leading k components of this transform; identical to refitting with k.
  PcaTransform truncated(std::size_t k_new) const {
    if (k_new < 1 || k_new > k()) fail(ErrorCode::BadK, "cannot truncate to k=" + std::to_string(k_new));
    PcaTransform t;
    t.mean = mean;
    t.components = components.topRows(static_cast<Eigen::Index>(k_new));
    t.explained_variance_ratio = explained_variance_ratio.head(static_cast<Eigen::Index>(k_new));
    t.singular_values = singular_values.head(static_cast<Eigen::Index>(k_new));
    t.n_train = n_train;
    return t;
  }
};

namespace detail {

// Full thin SVD of the centered matrix. Each right singular vector is flipped
// so its largest-magnitude entry (first on ties) is positive.
inline PcaTransform pca_fit_all(const Matrix& X) {
  const Eigen::Index n = X.rows(), d = X.cols();
  if (n < 2) fail(ErrorCode::BadK, "PCA needs at least two rows");
  if (d < 1) fail(ErrorCode::BadK, "PCA needs at least one column");
  PcaTransform t;
  t.n_train = static_cast<std::size_t>(n);
  t.mean = X.colwise().mean().transpose();
  const Matrix centered = X.rowwise() - t.mean.transpose();
  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const Matrix& V = svd.matrixV();
  const Eigen::Index m = s.size();
  t.components.resize(m, d);
  for (Eigen::Index i = 0; i < m; ++i) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double a = std::abs(V(j, i));
      if (a > best) {
        best = a;
        arg = j;
      }
    }
    const double sign = V(arg, i) < 0 ? -1.0 : 1.0;
    t.components.row(i) = sign * V.col(i).transpose();
  }
  t.singular_values = s;
  const double total = s.squaredNorm();
  t.explained_variance_ratio = total > 0 ? Vector(s.array().square() / total) : Vector(Vector::Zero(m));
  return t;
}

}  // namespace detail

// k may exceed the numeric rank of X; the surplus ratios are then ~0.
inline PcaTransform pca_fit(const Matrix& X, std::size_t k) {
  const auto limit = static_cast<std::size_t>(std::min(X.rows(), X.cols()));
  if (X.rows() < 2) fail(ErrorCode::BadK, "PCA needs at least two rows");
  if (k < 1 || k > limit)
    fail(ErrorCode::BadK, "k=" + std::to_string(k) + " outside [1, " + std::to_string(limit) + "]");
  auto full = detail::pca_fit_all(X);
  return k == full.k() ? full : full.truncated(k);
}

inline Matrix pca_transform(const PcaTransform& t, const Matrix& X) {
  if (static_cast<std::size_t>(X.cols()) != t.dim())
    fail(ErrorCode::DimensionMismatch,
         "input has " + std::to_string(X.cols()) + " columns, transform expects " + std::to_string(t.dim()));
  return (X.rowwise() - t.mean.transpose()) * t.components.transpose();
}

inline Matrix pca_inverse_transform(const PcaTransform& t, const Matrix& Y) {
  if (static_cast<std::size_t>(Y.cols()) != t.k()) fail(ErrorCode::DimensionMismatch, "projected width differs from k");
  return (Y * t.components).rowwise() + t.mean.transpose();
}

struct VariancePoint {
  std::size_t k;
  double cumulative_ratio;
};

inline std::vector<VariancePoint> variance_curve(const Matrix& X) {
  auto full = detail::pca_fit_all(X);
  std::vector<VariancePoint> out;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < full.explained_variance_ratio.size(); ++i) {
    acc += full.explained_variance_ratio(i);
    out.push_back({static_cast<std::size_t>(i + 1), std::min(acc, 1.0)});
  }
  return out;
}

// ---- Welch PSD ---------------------------------------------------------------

enum class Taper { Hann };

struct WelchSpec {
  std::size_t nperseg = 256;
  std::size_t noverlap = 128;
  Taper taper = Taper::Hann;

  std::size_t n_bins() const { return nperseg / 2 + 1; }
  std::size_t hop() const { return nperseg - noverlap; }

  void validate(std::size_t window_len) const {
    if (nperseg < 2 || noverlap >= nperseg)
      fail(ErrorCode::InvalidConfig, "Welch needs 0 <= noverlap < nperseg and nperseg >= 2");
    if (nperseg > window_len)
      fail(ErrorCode::WindowTooShort,
           "window of " + std::to_string(window_len) + " samples is shorter than nperseg=" + std::to_string(nperseg));
  }
};

// Periodic Hann taper, FFTW r2c transform and one-sided density scaling.
// Plans are created once per segment length under a lock; execution on
// per-instance buffers is thread-safe.
class Periodogram {
 public:
  explicit Periodogram(std::size_t nperseg) : n_(nperseg), taper_(nperseg) {
    for (std::size_t i = 0; i < n_; ++i)
      taper_[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n_));
    double sum_sq = 0.0;
    for (double w : taper_) sum_sq += w * w;
    in_.reset(fftw_alloc_real(n_));
    out_.reset(fftw_alloc_complex(n_ / 2 + 1));
    plan_ = plan_for(n_, in_.get(), out_.get());
    sum_sq_ = sum_sq;
  }

  std::size_t n_bins() const { return n_ / 2 + 1; }

  // One-sided density of x[0..nperseg) (strided by `stride`), written to out.
  void compute(const double* x, std::ptrdiff_t stride, double fs, std::span<double> out) {
    for (std::size_t i = 0; i < n_; ++i) in_.get()[i] = x[static_cast<std::ptrdiff_t>(i) * stride] * taper_[i];
    fftw_execute_dft_r2c(plan_, in_.get(), out_.get());
    const double scale = 1.0 / (fs * sum_sq_);
    const std::size_t nb = n_bins();
    for (std::size_t b = 0; b < nb; ++b) {
      const double re = out_.get()[b][0], im = out_.get()[b][1];
      double p = (re * re + im * im) * scale;
      const bool unpaired = b == 0 || (n_ % 2 == 0 && b == nb - 1);
      if (!unpaired) p *= 2.0;
      out[b] = p;
    }
  }

 private:
  struct RealFree {
    void operator()(double* p) const { fftw_free(p); }
  };
  struct ComplexFree {
    void operator()(fftw_complex* p) const { fftw_free(p); }
  };

  static fftw_plan plan_for(std::size_t n, double* in, fftw_complex* out) {
    static std::mutex mu;
    static std::map<std::size_t, fftw_plan> plans;
    std::lock_guard lock(mu);
    auto it = plans.find(n);
    if (it != plans.end()) return it->second;
    fftw_plan p = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
    plans.emplace(n, p);
    return p;
  }

  std::size_t n_;
  std::vector<double> taper_;
  double sum_sq_ = 0.0;
  std::unique_ptr<double, RealFree> in_;
  std::unique_ptr<fftw_complex, ComplexFree> out_;
  fftw_plan plan_ = nullptr;
};

inline std::size_t welch_segment_count(std::size_t len, const WelchSpec& spec) {
  return len < spec.nperseg ? 0 : 1 + (len - spec.nperseg) / spec.hop();
}

// n_channels x n_bins; each row is the mean of the channel's segment periodograms.
template <typename Derived>
Matrix welch_psd(const Eigen::MatrixBase<Derived>& window, const WelchSpec& spec, double fs) {
  const auto len = static_cast<std::size_t>(window.rows());
  spec.validate(len);
  const std::size_t n_seg = welch_segment_count(len, spec);
  Periodogram pg(spec.nperseg);
  const std::size_t nb = spec.n_bins();
  Matrix out = Matrix::Zero(window.cols(), static_cast<Eigen::Index>(nb));
  std::vector<double> seg(nb), col(len);
  for (Eigen::Index c = 0; c < window.cols(); ++c) {
    for (std::size_t t = 0; t < len; ++t) col[t] = window(static_cast<Eigen::Index>(t), c);
    std::vector<double> acc(nb, 0.0);
    for (std::size_t s = 0; s < n_seg; ++s) {
      pg.compute(col.data() + s * spec.hop(), 1, fs, seg);
      for (std::size_t b = 0; b < nb; ++b) acc[b] += seg[b];
    }
    for (std::size_t b = 0; b < nb; ++b) out(c, static_cast<Eigen::Index>(b)) = acc[b] / static_cast<double>(n_seg);
  }
  return out;
}

// ---- window -> feature vector ------------------------------------------------

enum class PsdLayout { PerChannel, ChannelAverage };

struct PsdFeatureSpec {
  WelchSpec welch;
  PsdLayout layout = PsdLayout::PerChannel;
  // Bins with centre frequency in [fmin_hz, fmax_hz] are kept; fmax_hz < 0
  // means up to Nyquist.
  double fmin_hz = 0.0;
  double fmax_hz = -1.0;

  std::vector<std::size_t> kept_bins(double fs) const {
    std::vector<std::size_t> out;
    const double df = fs / static_cast<double>(welch.nperseg);
    const double hi = fmax_hz < 0 ? std::numeric_limits<double>::infinity() : fmax_hz;
    for (std::size_t b = 0; b < welch.n_bins(); ++b) {
      const double f = static_cast<double>(b) * df;
      if (f >= fmin_hz - 1e-9 && f <= hi + 1e-9) out.push_back(b);
    }
    return out;
  }

  std::size_t feature_count(double fs, std::size_t n_channels) const {
    const std::size_t nb = kept_bins(fs).size();
    return layout == PsdLayout::PerChannel ? nb * n_channels : nb;
  }
};

namespace detail {

// Writes one window's features given its per-channel PSD rows.
inline void layout_psd(const Matrix& psd, const std::vector<std::size_t>& bins, PsdLayout layout,
                       std::span<double> out) {
  const Eigen::Index nc = psd.rows();
  const std::size_t nb = bins.size();
  if (layout == PsdLayout::PerChannel) {
    for (Eigen::Index c = 0; c < nc; ++c)
      for (std::size_t j = 0; j < nb; ++j)
        out[static_cast<std::size_t>(c) * nb + j] = psd(c, static_cast<Eigen::Index>(bins[j]));
  } else {
    for (std::size_t j = 0; j < nb; ++j) {
      double acc = 0.0;
      for (Eigen::Index c = 0; c < nc; ++c) acc += psd(c, static_cast<Eigen::Index>(bins[j]));
      out[j] = acc / static_cast<double>(nc);
    }
  }
}

}  // namespace detail

// Single-window feature row; used by the streaming path.
template <typename Derived>
Vector psd_feature_row(const Eigen::MatrixBase<Derived>& window, const PsdFeatureSpec& spec, double fs) {
  const Matrix psd = welch_psd(window, spec.welch, fs);
  const auto bins = spec.kept_bins(fs);
  Vector out(static_cast<Eigen::Index>(spec.feature_count(fs, static_cast<std::size_t>(window.cols()))));
  detail::layout_psd(psd, bins, spec.layout, std::span(out.data(), static_cast<std::size_t>(out.size())));
  return out;
}

template <typename Derived>
Vector raw_feature_row(const Eigen::MatrixBase<Derived>& window) {
  const Eigen::Index len = window.rows(), nc = window.cols();
  Vector out(len * nc);
  for (Eigen::Index c = 0; c < nc; ++c)
    for (Eigen::Index t = 0; t < len; ++t) out(c * len + t) = window(t, c);
  return out;
}

inline FeatureMatrix provenance_only(const dsp::WindowSet& ws) {
  FeatureMatrix fm;
  for (std::size_t i = 0; i < ws.size(); ++i) {
    fm.labels.push_back(ws.label(i));
    fm.trial_index.push_back(ws.trial_index(i));
    fm.run_index.push_back(ws.run_index(i));
  }
  return fm;
}

// Flattened windows, channel-major (c0 t0..tW-1, c1 t0..tW-1, ...).
inline FeatureMatrix raw_features(const dsp::WindowSet& ws) {
  FeatureMatrix fm = provenance_only(ws);
  const std::size_t d = ws.win_len * ws.n_channels();
  fm.X.resize(static_cast<Eigen::Index>(ws.size()), static_cast<Eigen::Index>(d));
  std::vector<double> row(d);
  for (std::size_t i = 0; i < ws.size(); ++i) {
    ws.flatten_into(i, row);
    fm.X.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(row.data(), static_cast<Eigen::Index>(d));
  }
  return fm;
}

// Per-window Welch features. Segment periodograms are shared between
// overlapping windows of the same trial; the arithmetic per window matches
// psd_feature_row exactly.
inline FeatureMatrix psd_features(const dsp::WindowSet& ws, const PsdFeatureSpec& spec) {
  FeatureMatrix fm = provenance_only(ws);
  spec.welch.validate(ws.win_len);
  const std::size_t nc = ws.n_channels();
  const std::size_t nb = spec.welch.n_bins();
  const std::size_t n_seg = welch_segment_count(ws.win_len, spec.welch);
  const auto bins = spec.kept_bins(ws.fs);
  const std::size_t d = spec.feature_count(ws.fs, nc);
  fm.X.resize(static_cast<Eigen::Index>(ws.size()), static_cast<Eigen::Index>(d));
  Periodogram pg(spec.welch.nperseg);

  std::size_t i = 0;
  while (i < ws.size()) {
    const std::size_t trial = ws.trial_index(i);
    std::size_t end = i;
    while (end < ws.size() && ws.trial_index(end) == trial) ++end;
    const auto& samples = ws.trials[trial].samples;

    // segment start (relative to trial) -> cached periodograms for all channels
    std::unordered_map<std::size_t, std::vector<double>> cache;
    auto segment = [&](std::size_t start) -> const std::vector<double>& {
      auto it = cache.find(start);
      if (it != cache.end()) return it->second;
      std::vector<double> p(nc * nb);
      for (std::size_t c = 0; c < nc; ++c)
        pg.compute(samples.data() + start * nc + c, static_cast<std::ptrdiff_t>(nc), ws.fs,
                   std::span(p.data() + c * nb, nb));
      return cache.emplace(start, std::move(p)).first->second;
    };

    Matrix psd(static_cast<Eigen::Index>(nc), static_cast<Eigen::Index>(nb));
    std::vector<double> row(d);
    for (; i < end; ++i) {
      const std::size_t off = ws.refs[i].offset;
      std::vector<const std::vector<double>*> segs;
      for (std::size_t s = 0; s < n_seg; ++s) segs.push_back(&segment(off + s * spec.welch.hop()));
      for (std::size_t c = 0; c < nc; ++c)
        for (std::size_t b = 0; b < nb; ++b) {
          double acc = 0.0;
          for (auto* p : segs) acc += (*p)[c * nb + b];
          psd(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(b)) = acc / static_cast<double>(n_seg);
        }
      detail::layout_psd(psd, bins, spec.layout, row);
      fm.X.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(row.data(), static_cast<Eigen::Index>(d));
    }
  }
  return fm;
}

}  // namespace mi::features
