#include <cmath>

#include "support.hpp"

using namespace mi;

namespace {

struct Labeled {
  Matrix X;
  std::vector<ClassLabel> y;
};

// Two Gaussian clouds sharing the covariance L L^T.
Labeled clouds(Pcg32& rng, std::size_t n_per_class, const Vector& mu_l, const Vector& mu_r, const Matrix& L) {
  const auto d = mu_l.size();
  Labeled out;
  out.X.resize(static_cast<Eigen::Index>(2 * n_per_class), d);
  for (std::size_t i = 0; i < 2 * n_per_class; ++i) {
    Vector z(d);
    for (Eigen::Index j = 0; j < d; ++j) z(j) = rng.normal();
    const bool right = i % 2 == 1;
    out.X.row(static_cast<Eigen::Index>(i)) = ((right ? mu_r : mu_l) + L * z).transpose();
    out.y.push_back(right ? ClassLabel::Right : ClassLabel::Left);
  }
  return out;
}

double accuracy(const std::vector<ClassLabel>& a, const std::vector<ClassLabel>& b) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ok += a[i] == b[i];
  return static_cast<double>(ok) / static_cast<double>(a.size());
}

}  // namespace

TEST(Lda, MatchesClosedFormOn2D) {
  Pcg32 rng(1, 1);
  for (int it = 0; it < 20; ++it) {
    Matrix L(2, 2);
    L << 1.0 + rng.uniform(), 0.0, rng.normal(), 0.2 + rng.uniform();
    Vector ml(2), mr(2);
    ml << rng.normal(), rng.normal();
    mr << rng.normal(), rng.normal();
    const auto data = clouds(rng, 100, ml, mr, L);

    // independent oracle: scalar loops, explicit 2x2 inverse
    double m[2][2] = {{0, 0}, {0, 0}};
    int cnt[2] = {0, 0};
    for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
      const int c = to_int(data.y[static_cast<std::size_t>(i)]);
      m[c][0] += data.X(i, 0);
      m[c][1] += data.X(i, 1);
      ++cnt[c];
    }
    for (int c = 0; c < 2; ++c)
      for (int j = 0; j < 2; ++j) m[c][j] /= cnt[c];
    double s00 = 0, s01 = 0, s11 = 0;
    for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
      const int c = to_int(data.y[static_cast<std::size_t>(i)]);
      const double a = data.X(i, 0) - m[c][0], b = data.X(i, 1) - m[c][1];
      s00 += a * a;
      s01 += a * b;
      s11 += b * b;
    }
    const double det = s00 * s11 - s01 * s01;
    const double dx = m[1][0] - m[0][0], dy = m[1][1] - m[0][1];
    const double wx = (s11 * dx - s01 * dy) / det, wy = (-s01 * dx + s00 * dy) / det;

    const auto model = classify::lda_fit(data.X, data.y);
    const double cosang = (model.weights(0) * wx + model.weights(1) * wy) / (model.weights.norm() * std::hypot(wx, wy));
    EXPECT_LT(std::acos(std::min(1.0, cosang)), 1e-6);
    EXPECT_EQ(model.rank, 2u);
    EXPECT_FALSE(model.underdetermined);
  }
}

TEST(Lda, SeparatesTightClouds) {
  Pcg32 rng(2, 1);
  for (int d : {2, 5, 20}) {
    Vector ml = Vector::Zero(d), mr = Vector::Zero(d);
    mr(0) = 1.0;
    const auto data = clouds(rng, 200, ml, mr, 0.1 * Matrix::Identity(d, d));
    const auto model = classify::lda_fit(data.X, data.y);
    EXPECT_GE(accuracy(model.predict(data.X), data.y), 0.99);
  }
}

TEST(Lda, AffineInvarianceOffBoundary) {
  Pcg32 rng(3, 1);
  Matrix L = Matrix::Identity(3, 3);
  L(1, 0) = 0.5;
  Vector ml = Vector::Zero(3), mr = Vector::Ones(3);
  const auto data = clouds(rng, 150, ml, mr, L);
  Matrix A(3, 3);
  A << 2, 0.3, 0, -0.4, 1, 0.2, 0.1, 0, 3;
  Vector b(3);
  b << 10, -5, 2;
  const Matrix Xt = (data.X * A).rowwise() + b.transpose();
  const auto m1 = classify::lda_fit(data.X, data.y);
  const auto m2 = classify::lda_fit(Xt, data.y);
  const Vector s1 = m1.score(data.X), s2 = m2.score(Xt);
  const double margin = 1e-6 * s1.cwiseAbs().maxCoeff();
  int checked = 0;
  for (Eigen::Index i = 0; i < s1.size(); ++i) {
    if (std::abs(s1(i)) < margin) continue;
    EXPECT_EQ(s1(i) > 0, s2(i) > 0);
    EXPECT_NEAR(s1(i), s2(i), 1e-8 * s1.cwiseAbs().maxCoeff());
    ++checked;
  }
  EXPECT_GT(checked, 250);
  // positive rescaling is a special case
  const auto m3 = classify::lda_fit(7.5 * data.X, data.y);
  EXPECT_EQ(m3.predict(7.5 * data.X), m1.predict(data.X));
}

TEST(Lda, RankDeficientAndUnderdetermined) {
  Pcg32 rng(4, 1);
  auto data = clouds(rng, 20, Vector::Zero(3), Vector::Ones(3), Matrix::Identity(3, 3));
  Matrix X(data.X.rows(), 5);
  X << data.X, data.X.col(0), 2.0 * data.X.col(1);  // two redundant columns
  const auto m = classify::lda_fit(X, data.y);
  EXPECT_EQ(m.rank, 3u);
  EXPECT_TRUE(m.weights.allFinite());
  EXPECT_GE(accuracy(m.predict(X), data.y), 0.8);

  Matrix wide(6, 40);
  for (Eigen::Index i = 0; i < wide.size(); ++i) wide.data()[i] = rng.normal();
  const std::vector<ClassLabel> y = {ClassLabel::Left, ClassLabel::Right, ClassLabel::Left,
                                     ClassLabel::Right, ClassLabel::Left, ClassLabel::Right};
  const auto u = classify::lda_fit(wide, y);
  EXPECT_TRUE(u.underdetermined);
  EXPECT_TRUE(u.weights.allFinite());
  EXPECT_LE(u.rank, 4u);
}

TEST(Lda, ZeroScoreIsLeft) {
  classify::LdaModel m;
  m.weights = Vector::Ones(2);
  m.bias = 0.0;
  Matrix X(3, 2);
  X << 1, -1, 0, 0, 1e-300, 0;
  const auto p = m.predict(X);
  EXPECT_EQ(p[0], ClassLabel::Left);
  EXPECT_EQ(p[1], ClassLabel::Left);
  EXPECT_EQ(p[2], ClassLabel::Right);

  classify::CentroidModel c;
  c.class_means = Matrix(2, 1);
  c.class_means << -1, 1;
  Matrix mid = Matrix::Zero(1, 1);
  EXPECT_EQ(c.predict(mid)[0], ClassLabel::Left);
}

TEST(Centroid, EqualsLdaUnderIsotropicBalancedData) {
  // each class is its mean plus +-s along every axis: pooled covariance is
  // exactly a multiple of I, so LDA reduces to nearest centroid
  const int d = 4;
  Vector ml(d), mr(d);
  ml << 0, 1, -1, 2;
  mr << 1, 0, 0, 1;
  Matrix X(4 * d, d);
  std::vector<ClassLabel> y;
  Eigen::Index r = 0;
  for (int c = 0; c < 2; ++c)
    for (int j = 0; j < d; ++j)
      for (double sgn : {-1.0, 1.0}) {
        X.row(r) = (c ? mr : ml).transpose();
        X(r, j) += 0.3 * sgn;
        ++r;
        y.push_back(c ? ClassLabel::Right : ClassLabel::Left);
      }
  const auto lda = classify::lda_fit(X, y);
  const auto cen = classify::centroid_fit(X, y);
  Pcg32 rng(5, 1);
  Matrix probe(200, d);
  for (Eigen::Index i = 0; i < probe.size(); ++i) probe.data()[i] = 2 * rng.normal();
  const Vector a = lda.score(probe), b = cen.score(probe);
  const double ratio = a(0) / b(0);
  EXPECT_GT(ratio, 0.0);
  for (Eigen::Index i = 0; i < probe.rows(); ++i) EXPECT_NEAR(a(i), ratio * b(i), 1e-9 * std::abs(a(i)) + 1e-12);
}

TEST(Classifier, JsonRoundTripAndErrors) {
  Pcg32 rng(6, 1);
  const auto data = clouds(rng, 50, Vector::Zero(3), Vector::Ones(3), Matrix::Identity(3, 3));
  for (auto kind : {classify::ClassifierKind::Lda, classify::ClassifierKind::NearestCentroid}) {
    const auto m = classify::fit_classifier(kind, data.X, data.y);
    const auto back = classify::classifier_from_json(nlohmann::json::parse(m->to_json().dump()));
    EXPECT_EQ(back->kind(), kind);
    EXPECT_EQ(back->score(data.X), m->score(data.X));
    EXPECT_MI_ERROR(m->score(Matrix::Zero(1, 2)), ErrorCode::DimensionMismatch);
  }
  std::vector<ClassLabel> one(data.y.size(), ClassLabel::Left);
  EXPECT_MI_ERROR(classify::lda_fit(data.X, one), ErrorCode::SingleClass);
  EXPECT_MI_ERROR(classify::centroid_fit(data.X, one), ErrorCode::SingleClass);
}

TEST(Lda, PriorShiftsBias) {
  Pcg32 rng(7, 1);
  auto data = clouds(rng, 60, Vector::Zero(2), Vector::Ones(2), Matrix::Identity(2, 2));
  // drop half the Left rows: log prior ratio enters the bias
  Matrix X(90, 2);
  std::vector<ClassLabel> y;
  Eigen::Index r = 0;
  int left = 0;
  for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
    if (data.y[static_cast<std::size_t>(i)] == ClassLabel::Left && left++ >= 30) continue;
    X.row(r++) = data.X.row(i);
    y.push_back(data.y[static_cast<std::size_t>(i)]);
  }
  const auto m = classify::lda_fit(X, y);
  const Vector mid = 0.5 * (m.class_means.row(0) + m.class_means.row(1)).transpose();
  EXPECT_NEAR(m.bias, -m.weights.dot(mid) + std::log(60.0 / 30.0), 1e-12);
}
