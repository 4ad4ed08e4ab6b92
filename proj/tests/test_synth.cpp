#include <oneloc/synth.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace oneloc;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an oneloc::Error";
  return ErrorCode::invalid_argument;
}

constexpr double kQuarterPi = std::numbers::pi / 4;

}  // namespace

TEST(MonteCarloCov, ZeroNoiseGivesZero) {
  const Eigen::Matrix2d c = monte_carlo_cov({1, 1, 0, -kQuarterPi, 0.0}, 100, 1);
  EXPECT_EQ(c.norm(), 0.0);
}

TEST(MonteCarloCov, ScalesWithSigmaSquared) {
  const PairGeometry g{1, 1, 0, -kQuarterPi, 0.004};
  PairGeometry half = g;
  half.sigma = 0.002;
  const Eigen::Matrix2d a = monte_carlo_cov(g, 100000, 3);
  const Eigen::Matrix2d b = monte_carlo_cov(half, 100000, 3);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(b(i, j) / a(i, j), 0.25, 0.01);
  }
}

TEST(MonteCarloCov, ConvergesToAnalytic) {
  const PairGeometry g{1, 1, 0, -kQuarterPi, 0.003};
  const Eigen::Matrix2d want = cov_analytic(g);
  const Eigen::Matrix2d small = monte_carlo_cov(g, 2000, 4);
  const Eigen::Matrix2d large = monte_carlo_cov(g, 200000, 4);
  EXPECT_LT((large - want).norm() / want.norm(), 0.02);
  EXPECT_LT((large - want).norm(), (small - want).norm() + 1e-3 * want.norm());
}

TEST(MonteCarloCov, Deterministic) {
  const PairGeometry g{2, 1, 0.3, -1.0, 0.01};
  EXPECT_EQ(monte_carlo_cov(g, 5000, 8), monte_carlo_cov(g, 5000, 8));
}

TEST(MonteCarloCov, Errors) {
  EXPECT_EQ(code_of([] { monte_carlo_cov({1, 1, 0, 0, 0.1}, 100, 1); }), ErrorCode::degenerate_configuration);
  EXPECT_EQ(code_of([] { monte_carlo_cov({1, 1, 0, -kQuarterPi, 0.1}, 1, 1); }), ErrorCode::invalid_argument);
}

TEST(DirectionField, NoiselessPointsAtCenter) {
  const BBox box{50, 40, 60, 30};
  const std::vector<Point2> pts{{25, 30}, {70, 50}, {50, 28}};
  const auto preds = gen_direction_field(box, pts, 0.0, VoteTarget::center, 1);
  ASSERT_EQ(preds.size(), 3u);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const UnitDir want = center_direction(pts[i], box.center());
    EXPECT_NEAR(preds[i].dir.dx, want.dx, 1e-12);
    EXPECT_NEAR(preds[i].dir.dy, want.dy, 1e-12);
    EXPECT_EQ(preds[i].size, relative_size(pts[i], box.center(), box.size()));
    EXPECT_TRUE(preds[i].valid);
  }
}

TEST(DirectionField, CornerTargetKeepsCenterSize) {
  const BBox box{50, 40, 60, 30};
  const std::vector<Point2> pts{{60, 45}};
  const auto preds = gen_direction_field(box, pts, 0.0, VoteTarget::corner, 1);
  const UnitDir want = center_direction(pts[0], {box.x0(), box.y0()});
  EXPECT_NEAR(preds[0].dir.dx, want.dx, 1e-12);
  EXPECT_NEAR(preds[0].dir.dy, want.dy, 1e-12);
  EXPECT_NEAR(preds[0].size.sx, 10.0 / 60.0, 1e-12);
}

TEST(DirectionField, CenterPointIsInvalid) {
  const BBox box{50, 40, 60, 30};
  const std::vector<Point2> pts{{50, 40}};
  EXPECT_FALSE(gen_direction_field(box, pts, 0.1, VoteTarget::center, 1)[0].valid);
}

TEST(DirectionField, AngularNoiseHasRequestedSpread) {
  const BBox box{0, 0, 10, 10};
  const std::vector<Point2> pts(20000, Point2{3, 0});
  const auto preds = gen_direction_field(box, pts, 0.1, VoteTarget::center, 7);
  double sq = 0.0;
  for (const Prediction& p : preds) {
    const double angle = std::atan2(p.dir.dy, p.dir.dx) - std::numbers::pi;
    const double wrapped = std::remainder(angle, 2 * std::numbers::pi);
    sq += wrapped * wrapped;
  }
  EXPECT_NEAR(std::sqrt(sq / preds.size()), 0.1, 0.003);
}

TEST(ObjectEmbedding, UnitNormAndDeterministic) {
  const ObjectEmbedding a(32, 5), b(32, 5), c(32, 6);
  const auto va = a.embed(0.1, -0.2);
  double sq = 0.0;
  for (float x : va) sq += double(x) * x;
  EXPECT_NEAR(sq, 1.0, 1e-6);
  EXPECT_EQ(va, b.embed(0.1, -0.2));
  EXPECT_NE(va, c.embed(0.1, -0.2));
  EXPECT_EQ(code_of([] { ObjectEmbedding(0, 1); }), ErrorCode::invalid_argument);
}

TEST(GenScene, DeterministicAndEncodesObjectCoordinates) {
  const ObjectEmbedding emb(32, 9);
  const BBox box{80, 60, 40, 20};
  const SyntheticScene a = gen_scene(120, 160, {box}, emb, 0.05, 11);
  const SyntheticScene b = gen_scene(120, 160, {box}, emb, 0.05, 11);
  EXPECT_TRUE(std::equal(a.map.data().begin(), a.map.data().end(), b.map.data().begin()));
  ASSERT_EQ(a.boxes.size(), 1u);

  const auto pixel = a.map.at(60, 80);
  const auto clean = emb.embed(0.0, 0.0);
  double dot = 0.0;
  for (std::size_t k = 0; k < clean.size(); ++k) dot += double(pixel[k]) * clean[k];
  EXPECT_GT(dot, 0.99);

  const auto bg = a.map.at(5, 5);
  double bg_dot = 0.0, bg_sq = 0.0;
  for (std::size_t k = 0; k < clean.size(); ++k) {
    bg_dot += double(bg[k]) * clean[k];
    bg_sq += double(bg[k]) * bg[k];
  }
  EXPECT_NEAR(bg_sq, 1.0, 1e-5);
  EXPECT_LT(std::abs(bg_dot), 0.9);
}

TEST(GenScene, BoxOutOfBounds) {
  const ObjectEmbedding emb(8, 1);
  EXPECT_EQ(code_of([&] { gen_scene(100, 100, {{95, 50, 20, 20}}, emb, 0.1, 1); }),
            ErrorCode::box_out_of_bounds);
}

TEST(RandomBox, InsideImageAndScaled) {
  Rng rng = make_rng(3);
  for (int i = 0; i < 500; ++i) {
    const BBox b = random_box(480, 640, {200, 120}, 0.5, 1.5, rng);
    EXPECT_GE(b.x0(), 0.0);
    EXPECT_GE(b.y0(), 0.0);
    EXPECT_LE(b.x1(), 640.0);
    EXPECT_LE(b.y1(), 480.0);
    EXPECT_NEAR(b.w / b.h, 200.0 / 120.0, 1e-12);
    EXPECT_GE(b.w, 100.0 - 1e-9);
    EXPECT_LE(b.w, 300.0 + 1e-9);
  }
  EXPECT_EQ(code_of([&] { random_box(100, 100, {200, 50}, 1, 1, rng); }), ErrorCode::box_out_of_bounds);
}

TEST(SeparatedBoxes, DoNotOverlap) {
  Rng rng = make_rng(77);
  for (int i = 0; i < 20; ++i) {
    const auto boxes = separated_boxes(480, 640, {150, 90}, 3, 20, rng);
    ASSERT_EQ(boxes.size(), 3u);
    for (std::size_t a = 0; a < boxes.size(); ++a) {
      for (std::size_t b = a + 1; b < boxes.size(); ++b) {
        const bool apart = std::abs(boxes[a].cx - boxes[b].cx) >= 170 || std::abs(boxes[a].cy - boxes[b].cy) >= 110;
        EXPECT_TRUE(apart);
      }
    }
  }
  EXPECT_EQ(code_of([&] { separated_boxes(100, 100, {60, 60}, 4, 10, rng); }), ErrorCode::degenerate_configuration);
}

TEST(DualTexture, LeftHalfDenser) {
  const SyntheticScene s = gen_dual_texture_scene(100, 200, 4, 0.2, 10.0, 3);
  ASSERT_TRUE(s.map.has_scores());
  const auto scores = s.map.scores();
  int left = 0, right = 0;
  for (int r = 0; r < 100; ++r) {
    for (int c = 0; c < 200; ++c) {
      if (scores[static_cast<std::size_t>(r) * 200 + c] > 0.0f) (c < 100 ? left : right) += 1;
    }
  }
  EXPECT_GT(left, 5 * right);
  EXPECT_GT(right, 0);
}
