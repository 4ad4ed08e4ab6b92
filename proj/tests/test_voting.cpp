#include <oneloc/pipeline.hpp>
#include <oneloc/synth.hpp>

#include <gtest/gtest.h>

#include <cmath>

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

Prediction toward(Point2 from, Point2 to, RelSize size = {}) {
  const Point2 d = to - from;
  const double n = norm(d);
  return {{d.x / n, d.y / n}, size, true};
}

}  // namespace

TEST(Accumulate, SinglePairVotesAtIntersection) {
  const std::vector<Point2> pts{{90, 50}, {100, 40}};
  const std::vector<Prediction> preds{{{1, 0}, {-0.25, 0}, true}, {{0, 1}, {0, -0.5}, true}};
  const std::vector<IndexPair> pairs{{0, 1}};
  const AccumulatorGrid g = accumulate(200, 200, 10, pts, preds, pairs);
  EXPECT_EQ(g.total_votes(), 1.0);
  EXPECT_EQ(g.votes(5, 10), 1.0);
  const auto win = g.window(5, 10);
  EXPECT_DOUBLE_EQ(win.centroid.x, 100.0);
  EXPECT_DOUBLE_EQ(win.centroid.y, 50.0);
  ASSERT_TRUE(win.w);
  ASSERT_TRUE(win.h);
  EXPECT_NEAR(*win.w, 40.0, 1e-12);
  EXPECT_NEAR(*win.h, 20.0, 1e-12);
}

TEST(Accumulate, ParallelPairsCastNothing) {
  const std::vector<Point2> pts{{10, 10}, {10, 30}, {10, 50}};
  const std::vector<Prediction> preds(3, Prediction{{1, 0}, {}, true});
  const std::vector<IndexPair> pairs{{0, 1}, {1, 2}, {0, 2}};
  const AccumulatorGrid g = accumulate(100, 100, 5, pts, preds, pairs);
  EXPECT_EQ(g.total_votes(), 0.0);
  EXPECT_EQ(code_of([&] { find_peak(g); }), ErrorCode::empty_grid);
}

TEST(Accumulate, InvalidPredictionsAndOffImageVotesSkipped) {
  const std::vector<Point2> pts{{10, 10}, {20, 10}, {30, 10}};
  std::vector<Prediction> preds{toward({10, 10}, {15, -40}), toward({20, 10}, {15, -40}), {}};
  const std::vector<IndexPair> pairs{{0, 1}, {1, 2}};
  const AccumulatorGrid g = accumulate(100, 100, 5, pts, preds, pairs);
  EXPECT_EQ(g.total_votes(), 0.0);
}

TEST(Accumulate, ShapeMismatch) {
  const std::vector<Point2> pts{{1, 1}, {2, 2}};
  const std::vector<Prediction> preds(1);
  EXPECT_EQ(code_of([&] { accumulate(10, 10, 2, pts, preds, {}); }), ErrorCode::shape_mismatch);
}

TEST(Accumulate, NoiselessFieldPeaksAtCenter) {
  const BBox box{320, 240, 200, 120};
  std::vector<Point2> pts;
  for (const Point2& p : stratified_sample(480, 640, 9, 1)) {
    if (box.contains(p)) pts.push_back(p);
  }
  const auto preds = gen_direction_field(box, pts, 0.0, VoteTarget::center, 1);
  const auto pairs = sample_pairs(pts, 160, 5000, 2);
  const AccumulatorGrid g = accumulate(480, 640, 9, pts, preds, pairs);
  const Detection d = find_peak(g);
  EXPECT_LE(std::abs(d.box.cx - box.cx), 9.0);
  EXPECT_LE(std::abs(d.box.cy - box.cy), 9.0);
  EXPECT_NEAR(d.box.w, box.w, 2.0);
  EXPECT_NEAR(d.box.h, box.h, 2.0);
  EXPECT_LE(g.total_votes(), static_cast<double>(pairs.size()));
  const auto [r, c] = g.cell_of(box.center());
  EXPECT_LE(g.size_count_w(r, c), static_cast<std::uint32_t>(2 * g.votes(r, c)));
}

TEST(Accumulate, Deterministic) {
  const BBox box{200, 150, 120, 80};
  std::vector<Point2> pts;
  for (const Point2& p : stratified_sample(300, 400, 6, 3)) {
    if (box.contains(p)) pts.push_back(p);
  }
  const auto preds = gen_direction_field(box, pts, 0.2, VoteTarget::center, 4);
  const auto pairs = sample_pairs(pts, 100, 2000, 5);
  const AccumulatorGrid a = accumulate(300, 400, 6, pts, preds, pairs);
  const AccumulatorGrid b = accumulate(300, 400, 6, pts, preds, pairs);
  EXPECT_TRUE(std::equal(a.votes().begin(), a.votes().end(), b.votes().begin()));
}

TEST(SizeEvidence, InverseVarianceWeights) {
  const SizeEstimate u = size_evidence({130, 90}, {100, 100}, {0.5, -0.25}, {});
  ASSERT_TRUE(u.w && u.h);
  EXPECT_DOUBLE_EQ(*u.w, 60.0);
  EXPECT_DOUBLE_EQ(*u.h, 40.0);
  EXPECT_EQ(u.weight_w, 1.0);
  const SizeEstimate v = size_evidence({130, 90}, {100, 100}, {0.5, -0.25}, {}, SizeWeighting::inverse_variance);
  EXPECT_DOUBLE_EQ(v.weight_w, 0.25);
  EXPECT_DOUBLE_EQ(v.weight_h, 0.0625);
}

TEST(SizeEvidence, AbsoluteMode) {
  const TargetConfig abs_cfg{SizeTarget::absolute, 100.0};
  const SizeEstimate e = size_evidence({0, 0}, {5, 5}, {1.2, -0.1}, abs_cfg);
  ASSERT_TRUE(e.w);
  EXPECT_DOUBLE_EQ(*e.w, 120.0);
  EXPECT_FALSE(e.h);
}

TEST(Grid, WeightedWindowAverage) {
  AccumulatorGrid g(100, 100, 10);
  const auto i = g.add_vote({55, 55});
  ASSERT_TRUE(i);
  SizeEstimate a;
  a.w = 40;
  a.weight_w = 3.0;
  SizeEstimate b;
  b.w = 80;
  b.weight_w = 1.0;
  g.add_size(*i, a);
  g.add_size(*i, b);
  const auto win = g.window(5, 5);
  ASSERT_TRUE(win.w);
  EXPECT_DOUBLE_EQ(*win.w, 50.0);
  EXPECT_FALSE(win.h);
}

TEST(Grid, OffImageVoteRejected) {
  AccumulatorGrid g(100, 100, 10);
  EXPECT_FALSE(g.add_vote({-0.1, 50}));
  EXPECT_FALSE(g.add_vote({50, 100}));
  EXPECT_TRUE(g.add_vote({99.9, 0}));
  EXPECT_EQ(code_of([] { AccumulatorGrid(10, 10, 0.5); }), ErrorCode::invalid_argument);
}

TEST(Grid, SumOfGridsEqualsCombinedVotes) {
  AccumulatorGrid a(50, 50, 5), b(50, 50, 5), both(50, 50, 5);
  for (int k = 0; k < 30; ++k) {
    const Point2 p{1.3 * k, 47.0 - 1.1 * k};
    (k % 2 ? a : b).add_vote(p);
    both.add_vote(p);
  }
  a += b;
  EXPECT_TRUE(std::equal(a.votes().begin(), a.votes().end(), both.votes().begin()));
  AccumulatorGrid other(50, 60, 5);
  EXPECT_EQ(code_of([&] { a += other; }), ErrorCode::shape_mismatch);
}

TEST(FindPeak, HandBuiltCell) {
  AccumulatorGrid g(100, 100, 10);
  g.set_cell(3, 4, 5, {200, 150}, 5, 5);
  const Detection d = find_peak(g);
  EXPECT_DOUBLE_EQ(d.box.cx, 45.0);
  EXPECT_DOUBLE_EQ(d.box.cy, 35.0);
  EXPECT_DOUBLE_EQ(d.box.w, 40.0);
  EXPECT_DOUBLE_EQ(d.box.h, 30.0);
  EXPECT_EQ(d.score, 5.0);
}

TEST(FindPeak, TiesGoToSmallerRow) {
  AccumulatorGrid g(100, 100, 10);
  g.set_cell(7, 1, 4, {40, 40}, 1, 1);
  g.set_cell(2, 8, 4, {20, 20}, 1, 1);
  const Detection d = find_peak(g);
  EXPECT_DOUBLE_EQ(d.box.cy, 25.0);
  EXPECT_DOUBLE_EQ(d.box.w, 20.0);
}

TEST(FindPeak, Errors) {
  const AccumulatorGrid empty(100, 100, 10);
  EXPECT_EQ(code_of([&] { find_peak(empty); }), ErrorCode::empty_grid);
  AccumulatorGrid no_size(100, 100, 10);
  no_size.set_cell(3, 3, 2, {}, 0, 0);
  EXPECT_EQ(code_of([&] { find_peak(no_size); }), ErrorCode::no_size_evidence);
}

TEST(FindPeaks, MinScoreAndNmsRadius) {
  AccumulatorGrid g(100, 100, 10);
  g.set_cell(1, 1, 9, {90, 90}, 3, 3);
  g.set_cell(1, 3, 7, {90, 90}, 3, 3);
  g.set_cell(8, 8, 5, {90, 90}, 3, 3);
  EXPECT_TRUE(detect_in_grid(g, 3, 10.0, 10).empty());
  EXPECT_EQ(detect_in_grid(g, 1, 0.0, 10).size(), 3u);
  EXPECT_EQ(detect_in_grid(g, 2, 0.0, 10).size(), 2u);
  EXPECT_EQ(detect_in_grid(g, 10, 0.0, 10).size(), 1u);
  EXPECT_EQ(detect_in_grid(g, 1, 0.0, 2).size(), 2u);
  EXPECT_EQ(detect_in_grid(g, 1, 6.0, 10).size(), 2u);
  EXPECT_EQ(code_of([&] { find_peaks(g, 0, 0.0, 10); }), ErrorCode::invalid_argument);
}

TEST(FindPeaks, ScoresDescending) {
  AccumulatorGrid g(200, 200, 10);
  for (int k = 0; k < 6; ++k) g.set_cell(3 * k + 1, 19 - 3 * k, 1 + (k * 7) % 5, {30, 30}, 1, 1);
  const auto dets = detect_in_grid(g, 1, 0.0, 10);
  for (std::size_t k = 1; k < dets.size(); ++k) EXPECT_GE(dets[k - 1].score, dets[k].score);
}

TEST(SizeAtCenter, UsesRaysPassingNearTheCenter) {
  const Point2 center{100, 100};
  const std::vector<Point2> pts{{70, 100}, {100, 130}, {160, 160}, {130, 130}};
  std::vector<Prediction> preds{toward(pts[0], center, {-0.5, 0}), toward(pts[1], center, {0, 0.25}),
                                {{1, 0}, {0.5, 0.5}, true}, toward(pts[3], center, {0.25, 0.25})};
  preds[3].dir = {-preds[3].dir.dx, -preds[3].dir.dy};  // points away: ignored
  const SizeEstimate e = size_at_center(center, pts, preds, 5.0, VoteConfig{});
  ASSERT_TRUE(e.w && e.h);
  EXPECT_DOUBLE_EQ(*e.w, 60.0);
  EXPECT_DOUBLE_EQ(*e.h, 120.0);
}

namespace {

struct TrainedCase {
  Mlp<float> net;
  SyntheticScene query;
};

const TrainedCase& trained_case() {
  static const TrainedCase c = [] {
    const ObjectEmbedding emb(16, 21);
    Rng rng = make_rng(22);
    std::vector<FrameSamples> frames;
    for (int i = 0; i < 6; ++i) {
      const BBox box = random_box(240, 320, {100, 60}, 0.9, 1.1, rng);
      const SyntheticScene s = gen_scene(240, 320, {box}, emb, 0.1, 30 + i);
      frames.push_back(make_frame_samples(s.map, box, SamplerConfig{}, i));
    }
    TrainConfig tc;
    tc.epochs = 40;
    tc.hidden = 64;
    tc.blocks = 4;
    tc.adam.learning_rate = 1e-3;
    const BBox qbox{150, 110, 100, 60};
    return TrainedCase{train(frames, tc).weights, gen_scene(240, 320, {qbox}, emb, 0.1, 99)};
  }();
  return c;
}

}  // namespace

TEST(Pipeline, LocalizeFindsTrainedObject) {
  const TrainedCase& c = trained_case();
  const Detection d = localize(c.query.map, c.net);
  const BBox& gt = c.query.boxes.front();
  EXPECT_LT(std::abs(d.box.cx - gt.cx), 0.25 * gt.w);
  EXPECT_LT(std::abs(d.box.cy - gt.cy), 0.25 * gt.h);
  EXPECT_EQ(localize(c.query.map, c.net).box, d.box);
}

TEST(Pipeline, FindPeakMatchesFirstDetection) {
  const TrainedCase& c = trained_case();
  const PipelineConfig cfg;
  const VoteResult votes = cast_votes(c.query.map, c.net, cfg);
  const Detection single = find_peak(votes.grid);
  const auto dets = detect(votes, cfg, 1, 0.0, 10);
  ASSERT_FALSE(dets.empty());
  EXPECT_EQ(dets.front().box, single.box);
  EXPECT_TRUE(detect(votes, cfg, 3, votes.grid.max_votes() + 1.0, 10).empty());
  EXPECT_LE(detect(votes, cfg, 1000, 0.0, 10).size(), 1u);
}

TEST(Pipeline, AtPeakAggregation) {
  const TrainedCase& c = trained_case();
  PipelineConfig cfg;
  cfg.vote.size_aggregation = SizeAggregation::at_peak;
  const Detection d = localize(c.query.map, c.net, cfg);
  EXPECT_GT(d.box.w, 0.0);
  EXPECT_GT(d.box.h, 0.0);
}

TEST(Pipeline, NoiseMapDoesNotCrash) {
  const Mlp<float> net = Mlp<float>::random({16, 32, 2}, 5);
  const ObjectEmbedding emb(16, 1);
  const SyntheticScene noise = gen_scene(120, 160, {}, emb, 0.0, 8);
  try {
    const Detection d = localize(noise.map, net);
    EXPECT_TRUE(std::isfinite(d.box.cx));
  } catch (const Error& e) {
    EXPECT_TRUE(e.code() == ErrorCode::empty_grid || e.code() == ErrorCode::no_size_evidence);
  }
  EXPECT_NO_THROW(detect(noise.map, net));
}

TEST(Pipeline, DimensionMismatch) {
  const Mlp<float> net = Mlp<float>::random({8, 16, 1}, 5);
  const DescriptorMap m(100, 100, 4);
  EXPECT_EQ(code_of([&] { localize(m, net); }), ErrorCode::shape_mismatch);
}
