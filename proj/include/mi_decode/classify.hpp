#pragma once

// Two-class linear classifiers behind a common interface. score(x) > 0 means
// Right; a score of exactly 0 is Left.

#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/SVD>
#include <json.hpp>

#include "mi_decode/error.hpp"
#include "mi_decode/types.hpp"

namespace mi::classify {

using json = nlohmann::json;

enum class ClassifierKind { Lda, NearestCentroid };

inline std::string_view to_string(ClassifierKind k) { return k == ClassifierKind::Lda ? "lda" : "centroid"; }

inline ClassifierKind parse_classifier_kind(std::string_view s) {
  if (s == "lda") return ClassifierKind::Lda;
  if (s == "centroid") return ClassifierKind::NearestCentroid;
  fail(ErrorCode::InvalidConfig, "unknown classifier '" + std::string(s) + "' (expected lda or centroid)");
}

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual ClassifierKind kind() const = 0;
  virtual std::size_t dim() const = 0;
  virtual Vector score(const Matrix& X) const = 0;
  virtual json to_json() const = 0;

  std::vector<ClassLabel> predict(const Matrix& X) const {
    const Vector s = score(X);
    std::vector<ClassLabel> out(static_cast<std::size_t>(s.size()));
    for (Eigen::Index i = 0; i < s.size(); ++i) out[static_cast<std::size_t>(i)] = s(i) > 0.0 ? ClassLabel::Right : ClassLabel::Left;
    return out;
  }

 protected:
  void check_dim(const Matrix& X) const {
    if (static_cast<std::size_t>(X.cols()) != dim())
      fail(ErrorCode::DimensionMismatch,
           "input has " + std::to_string(X.cols()) + " columns, classifier expects " + std::to_string(dim()));
  }
};

namespace detail {

struct ClassStats {
  Matrix means;  // 2 x k, row 0 = Left
  std::array<std::size_t, 2> counts{0, 0};
};

inline ClassStats class_stats(const Matrix& X, const std::vector<ClassLabel>& y) {
  if (static_cast<std::size_t>(X.rows()) != y.size())
    fail(ErrorCode::DimensionMismatch, "label count differs from row count");
  ClassStats st;
  st.means = Matrix::Zero(2, X.cols());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const int c = to_int(y[static_cast<std::size_t>(i)]);
    st.means.row(c) += X.row(i);
    ++st.counts[static_cast<std::size_t>(c)];
  }
  if (st.counts[0] == 0 || st.counts[1] == 0) fail(ErrorCode::SingleClass, "training data holds a single class");
  st.means.row(0) /= static_cast<double>(st.counts[0]);
  st.means.row(1) /= static_cast<double>(st.counts[1]);
  return st;
}

inline json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(r);
  }
  return rows;
}

inline Matrix matrix_from_json(const json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  Matrix m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != m.cols()) fail(ErrorCode::MalformedMeta, "ragged matrix in model file");
    for (std::size_t k = 0; k < rows[i].size(); ++k) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
  }
  return m;
}

inline std::vector<double> to_std(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vector from_std(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace detail

// ---- LDA ---------------------------------------------------------------------

struct LdaOptions {
  // Singular values of the pooled within-class covariance below
  // rel_tol * sigma_max are treated as zero (pseudo-inverse).
  double rel_tol = 1e-12;
};

class LdaModel final : public Classifier {
 public:
  Vector weights;
  double bias = 0.0;
  Matrix class_means;  // 2 x k, row 0 = Left, row 1 = Right
  std::array<double, 2> priors{0.5, 0.5};
  std::size_t rank = 0;           // retained singular values
  bool underdetermined = false;   // n <= k at fit time

  ClassifierKind kind() const override { return ClassifierKind::Lda; }
  std::size_t dim() const override { return static_cast<std::size_t>(weights.size()); }

  Vector score(const Matrix& X) const override {
    check_dim(X);
    return (X * weights).array() + bias;
  }

  json to_json() const override {
    return json{{"kind", "lda"},
                {"k", dim()},
                {"weights", detail::to_std(weights)},
                {"bias", bias},
                {"class_means", detail::matrix_json(class_means)},
                {"priors", {priors[0], priors[1]}},
                {"rank", rank}};
  }

  static LdaModel from_json(const json& j) {
    LdaModel m;
    try {
      m.weights = detail::from_std(j.at("weights").get<std::vector<double>>());
      m.bias = j.at("bias").get<double>();
      m.class_means = detail::matrix_from_json(j.at("class_means"));
      auto p = j.at("priors").get<std::vector<double>>();
      if (p.size() != 2) fail(ErrorCode::MalformedMeta, "priors must have two entries");
      m.priors = {p[0], p[1]};
      m.rank = j.value("rank", std::size_t{0});
    } catch (const json::exception& e) {
      fail(ErrorCode::MalformedMeta, std::string("bad lda model: ") + e.what());
    }
    if (j.contains("k") && j.at("k").get<std::size_t>() != m.dim())
      fail(ErrorCode::MalformedMeta, "lda k does not match weight length");
    return m;
  }
};

// Shared-covariance Gaussian discriminant. The pooled within-class covariance
// is decomposed by SVD and pseudo-inverted:
//   w = Sigma^+ (mu_R - mu_L),   b = -w . (mu_R + mu_L)/2 + log(pi_R / pi_L)
inline LdaModel lda_fit(const Matrix& X, const std::vector<ClassLabel>& y, const LdaOptions& opt = {}) {
  auto st = detail::class_stats(X, y);
  const Eigen::Index n = X.rows(), k = X.cols();
  Matrix centered = X;
  for (Eigen::Index i = 0; i < n; ++i) centered.row(i) -= st.means.row(to_int(y[static_cast<std::size_t>(i)]));
  const double dof = n > 2 ? static_cast<double>(n - 2) : static_cast<double>(n);
  Matrix cov = Matrix::Zero(k, k);
  cov.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose(), 1.0 / dof);
  cov.triangularView<Eigen::StrictlyUpper>() = cov.transpose();

  Eigen::BDCSVD<Matrix> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  const double cutoff = s.size() > 0 ? opt.rel_tol * s(0) : 0.0;

  LdaModel m;
  m.class_means = st.means;
  m.priors = {static_cast<double>(st.counts[0]) / static_cast<double>(n),
              static_cast<double>(st.counts[1]) / static_cast<double>(n)};
  m.underdetermined = n <= k;
  const Vector diff = (st.means.row(1) - st.means.row(0)).transpose();
  const Vector proj = svd.matrixU().transpose() * diff;
  Vector scaled = Vector::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff && s(i) > 0.0) {
      scaled(i) = proj(i) / s(i);
      ++m.rank;
    }
  }
  m.weights = svd.matrixV() * scaled;
  const Vector mid = 0.5 * (st.means.row(0) + st.means.row(1)).transpose();
  m.bias = -m.weights.dot(mid) + std::log(m.priors[1] / m.priors[0]);
  return m;
}

// ---- nearest centroid ----------------------------------------------------------

class CentroidModel final : public Classifier {
 public:
  Matrix class_means;  // 2 x k

  ClassifierKind kind() const override { return ClassifierKind::NearestCentroid; }
  std::size_t dim() const override { return static_cast<std::size_t>(class_means.cols()); }

  // (|x - mu_L|^2 - |x - mu_R|^2) / 2
  Vector score(const Matrix& X) const override {
    check_dim(X);
    Vector out(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      out(i) = 0.5 * ((X.row(i) - class_means.row(0)).squaredNorm() - (X.row(i) - class_means.row(1)).squaredNorm());
    return out;
  }

  json to_json() const override {
    return json{{"kind", "centroid"}, {"k", dim()}, {"class_means", detail::matrix_json(class_means)}};
  }

  static CentroidModel from_json(const json& j) {
    CentroidModel m;
    try {
      m.class_means = detail::matrix_from_json(j.at("class_means"));
    } catch (const json::exception& e) {
      fail(ErrorCode::MalformedMeta, std::string("bad centroid model: ") + e.what());
    }
    if (m.class_means.rows() != 2) fail(ErrorCode::MalformedMeta, "centroid model needs two class means");
    return m;
  }
};

inline CentroidModel centroid_fit(const Matrix& X, const std::vector<ClassLabel>& y) {
  CentroidModel m;
  m.class_means = detail::class_stats(X, y).means;
  return m;
}

inline std::shared_ptr<const Classifier> fit_classifier(ClassifierKind kind, const Matrix& X,
                                                        const std::vector<ClassLabel>& y) {
  if (kind == ClassifierKind::Lda) return std::make_shared<LdaModel>(lda_fit(X, y));
  return std::make_shared<CentroidModel>(centroid_fit(X, y));
}

inline std::shared_ptr<const Classifier> classifier_from_json(const json& j) {
  const auto kind = parse_classifier_kind(j.value("kind", std::string("lda")));
  if (kind == ClassifierKind::Lda) return std::make_shared<LdaModel>(LdaModel::from_json(j));
  return std::make_shared<CentroidModel>(CentroidModel::from_json(j));
}

inline std::vector<ClassLabel> predict(const Classifier& clf, const Matrix& X) { return clf.predict(X); }

}  // namespace mi::classify
