#include <cmath>

#include <gtest/gtest.h>

#include "skill/taskmap_maha.hpp"

namespace skill {
namespace {

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::InvalidArgument;
}

MahaTeacherShare share_1d(std::uint32_t task, std::vector<std::vector<double>> groups) {
  MahaTeacherShare s;
  s.task_id = task;
  s.m = 5;
  s.means = Matrix(0, 1);
  for (const auto& g : groups) {
    Matrix e(0, 1);
    double mean = 0;
    for (double v : g) {
      e.append_row(std::vector<double>{v});
      mean += v / static_cast<double>(g.size());
    }
    s.means.append_row(std::vector<double>{mean});
    s.exemplars.push_back(e);
  }
  return s;
}

TEST(ClassMeans, Examples) {
  Split s(2);
  s.push(0, std::vector<double>{0, 0});
  s.push(0, std::vector<double>{2, 4});
  s.push(1, std::vector<double>{7, -1});
  const Matrix m = class_means(s, 2);
  EXPECT_EQ(m, Matrix(2, 2, std::vector<double>{1, 2, 7, -1}));
  EXPECT_EQ(code_of([&] { class_means(s, 3); }), ErrorCode::EmptyClass);
}

TEST(SampleShared, SizesAndDeterminism) {
  Split s(1);
  for (int i = 0; i < 20; ++i) s.push(0, std::vector<double>{static_cast<double>(i)});
  for (int i = 0; i < 3; ++i) s.push(1, std::vector<double>{100.0 + i});
  const auto a = sample_shared(s, 2, kDefaultExemplarsPerClass, 9, 4);
  EXPECT_EQ(a.exemplars[0].rows(), 5u);
  EXPECT_EQ(a.exemplars[1].rows(), 3u);
  EXPECT_EQ(a.exemplars[1], Matrix(3, 1, std::vector<double>{100, 101, 102}));
  EXPECT_EQ(a, sample_shared(s, 2, 5, 9, 4));
  EXPECT_NE(a, sample_shared(s, 2, 5, 10, 4));
  std::vector<double> seen(a.exemplars[0].data().begin(), a.exemplars[0].data().end());
  std::sort(seen.begin(), seen.end());
  EXPECT_EQ(std::adjacent_find(seen.begin(), seen.end()), seen.end());
  EXPECT_EQ(code_of([&] { sample_shared(s, 2, 0, 1); }), ErrorCode::InvalidArgument);
}

TEST(TiedCovariance, HandExample1d) {
  const auto bank = fit_tied_covariance({share_1d(0, {{-1, 1}, {2, 4}})});
  EXPECT_DOUBLE_EQ(bank.covariance()(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(bank.epsilon(), 1e-6);
  EXPECT_EQ(bank.pooled_count(), 4u);
}

TEST(TiedCovariance, SingleExemplarsFallBackToEpsilon) {
  const auto bank = fit_tied_covariance({share_1d(0, {{3}, {5}}), share_1d(1, {{-2}})});
  EXPECT_EQ(bank.covariance()(0, 0), 0.0);
  EXPECT_EQ(bank.epsilon(), 1e-6);
  EXPECT_EQ(map_task_maha(bank, std::vector<double>{4.9}).class_index, 1u);
}

TEST(TiedCovariance, DuplicatingExemplarsLeavesCovarianceUnchanged) {
  const auto a = fit_tied_covariance({share_1d(0, {{-1, 1, 0.5}, {2, 4}})});
  const auto b = fit_tied_covariance({share_1d(0, {{-1, 1, 0.5, -1, 1, 0.5}, {2, 4, 2, 4}})});
  EXPECT_NEAR(a.covariance()(0, 0), b.covariance()(0, 0), 1e-15);
}

TEST(TiedCovariance, ArrivalOrderInvariant) {
  std::vector<MahaTeacherShare> shares{share_1d(2, {{0, 1}}), share_1d(0, {{5, 7}, {1, 1.5}}),
                                       share_1d(1, {{-3, -4}})};
  const auto ref = fit_tied_covariance(shares);
  std::reverse(shares.begin(), shares.end());
  EXPECT_EQ(fit_tied_covariance(shares), ref);
  EXPECT_EQ(ref.tasks(), (std::vector<std::uint32_t>{0, 1, 2}));
}

TEST(TiedCovariance, DuplicateTaskRejected) {
  MahaBank bank;
  bank.add_share(share_1d(0, {{1}}));
  EXPECT_EQ(code_of([&] { bank.add_share(share_1d(0, {{1}})); }), ErrorCode::DuplicateTask);
}

TEST(MapTaskMaha, AnisotropicOracle) {
  const Matrix cov(2, 2, std::vector<double>{1, 0, 0, 100});
  const auto bank = MahaBank::from_parts({{0, 0}, {1, 0}}, Matrix(2, 2, std::vector<double>{1, 0, 0, 3}), cov);
  const std::vector<double> x{0.9, 1.0};
  const double d0 = 0.1 * 0.1 / 1.0 + 1.0 * 1.0 / 100.0;
  const double d1 = 0.9 * 0.9 / 1.0 + 2.0 * 2.0 / 100.0;
  EXPECT_NEAR(bank.distance(x, 0), d0, 1e-12);
  EXPECT_NEAR(bank.distance(x, 1), d1, 1e-12);
  const auto out = map_task_maha(bank, x);
  EXPECT_EQ(out.task_id, 0u);
  EXPECT_NEAR(out.distance, d0, 1e-12);
}

TEST(MapTaskMaha, ExactMeanHasZeroDistance) {
  const auto bank = MahaBank::from_parts({{0, 0}, {0, 1}, {3, 0}},
                                         Matrix(3, 2, std::vector<double>{0, 0, 1, 1, -2, 5}), Matrix::identity(2));
  const auto out = map_task_maha(bank, std::vector<double>{-2, 5});
  EXPECT_EQ(out.task_id, 3u);
  EXPECT_EQ(out.distance, 0.0);
}

TEST(MapTaskMaha, TieGoesToLowestOwner) {
  const auto bank = MahaBank::from_parts({{0, 0}, {1, 0}}, Matrix(2, 1, std::vector<double>{-1, 1}),
                                         Matrix::identity(1));
  EXPECT_EQ(map_task_maha(bank, std::vector<double>{0.0}).task_id, 0u);
}

TEST(MapTaskMaha, NotFinalized) {
  MahaBank bank;
  bank.add_share(share_1d(0, {{1, 2}}));
  EXPECT_EQ(code_of([&] { map_task_maha(bank, std::vector<double>{0.0}); }), ErrorCode::NotFinalized);
  bank.finalize();
  bank.finalize();
  EXPECT_TRUE(bank.finalized());
}

TEST(MapTaskMaha, IdentityCovarianceIsNearestMean) {
  RngStream rng(17);
  const std::size_t d = 6, classes = 12;
  Matrix means(classes, d);
  std::vector<MahaBank::Owner> owners;
  for (std::size_t c = 0; c < classes; ++c) {
    owners.push_back({static_cast<std::uint32_t>(c / 3), static_cast<std::uint32_t>(c % 3)});
    for (std::size_t j = 0; j < d; ++j) means(c, j) = 3.0 * rng.normal();
  }
  const auto bank = MahaBank::from_parts(owners, means, Matrix::identity(d));
  for (int q = 0; q < 1000; ++q) {
    Vector x(d);
    for (double& v : x) v = 4.0 * rng.normal();
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes; ++c) {
      double s = 0;
      for (std::size_t j = 0; j < d; ++j) s += (x[j] - means(c, j)) * (x[j] - means(c, j));
      if (s < best_d) {
        best_d = s;
        best = c;
      }
    }
    EXPECT_EQ(map_task_maha(bank, x).bank_index, best);
  }
}

TEST(MapTaskMaha, AffineInvariance) {
  RngStream rng(3);
  const std::size_t d = 3;
  for (int trial = 0; trial < 10; ++trial) {
    Matrix a(d, d), l(d, d), means(4, d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        a(i, j) = rng.normal() + (i == j ? 3.0 : 0.0);
        l(i, j) = rng.normal();
      }
    for (auto& v : means.data()) v = rng.normal();
    Matrix cov = matmul(l, transpose(l));
    for (std::size_t i = 0; i < d; ++i) cov(i, i) += 0.5;
    Vector shift(d);
    for (double& v : shift) v = rng.normal();
    const auto affine = [&](std::span<const double> v) {
      Vector y = matvec(a, v);
      for (std::size_t j = 0; j < d; ++j) y[j] += shift[j];
      return y;
    };
    Matrix tmeans(0, d);
    for (std::size_t c = 0; c < 4; ++c) tmeans.append_row(affine(means.row(c)));
    const std::vector<MahaBank::Owner> owners{{0, 0}, {0, 1}, {1, 0}, {1, 1}};
    const auto b1 = MahaBank::from_parts(owners, means, cov);
    const auto b2 = MahaBank::from_parts(owners, tmeans, matmul(matmul(a, cov), transpose(a)));
    for (int q = 0; q < 20; ++q) {
      Vector x(d);
      for (double& v : x) v = 2.0 * rng.normal();
      const Vector tx = affine(x);
      for (std::size_t c = 0; c < 4; ++c)
        EXPECT_NEAR(b1.distance(x, c), b2.distance(tx, c), 1e-8 * (1.0 + b1.distance(x, c)));
      EXPECT_EQ(map_task_maha(b1, x).bank_index, map_task_maha(b2, tx).bank_index);
    }
  }
}

TEST(ShareWire, RoundTrip) {
  Split s(3);
  RngStream rng(5);
  for (int i = 0; i < 30; ++i)
    s.push(static_cast<std::uint32_t>(i % 3), std::vector<double>{to_f32(rng.normal()), to_f32(rng.normal()), 1});
  s.push(3, std::vector<double>{0.5, 0.25, 1});
  const auto share = sample_shared(s, 4, 5, 1, 8);
  ByteWriter w;
  encode_share(w, share);
  const Bytes bytes = w.take();
  EXPECT_EQ(bytes.size(), share_wire_size(4, 3, 16));
  ByteReader r(bytes, "share");
  const auto back = decode_share(r);
  EXPECT_TRUE(r.done());
  EXPECT_EQ(back.exemplars, share.exemplars);
  EXPECT_EQ(back.task_id, 8u);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(back.means(i, j), share.means(i, j), 1e-6);
}

}  // namespace
}  // namespace skill
