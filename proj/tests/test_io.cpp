#include <oneloc/config.hpp>
#include <oneloc/io.hpp>

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <limits>

#include <unistd.h>

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

std::string message_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

DescriptorMap sample_map(bool with_scores) {
  DescriptorMap m(3, 5, 4);
  float v = -1.0f;
  for (float& x : m.data()) {
    x = v;
    v += 0.0625f;
  }
  m.at(1, 2)[3] = 1e-30f;
  if (with_scores) {
    std::vector<float> s(15);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<float>(i) / 14.0f;
    m.set_scores(s);
  }
  return m;
}

bool bit_equal(std::span<const float> a, std::span<const float> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

}  // namespace

TEST(MapFormat, RoundTripIsBitIdentical) {
  for (bool scores : {false, true}) {
    const DescriptorMap m = sample_map(scores);
    const auto bytes = encode_descriptor_map(m);
    EXPECT_EQ(bytes.size(), kMapHeaderSize + 4 * 15 * 4 + (scores ? 4 * 15 : 0));
    const DescriptorMap back = decode_descriptor_map(bytes);
    EXPECT_EQ(back.height(), 3);
    EXPECT_EQ(back.width(), 5);
    EXPECT_EQ(back.dim(), 4);
    EXPECT_TRUE(bit_equal(back.data(), m.data()));
    EXPECT_EQ(back.has_scores(), scores);
    if (scores) EXPECT_TRUE(bit_equal(back.scores(), m.scores()));
  }
}

TEST(MapFormat, HeaderLayoutIsLittleEndian) {
  const auto bytes = encode_descriptor_map(sample_map(true));
  EXPECT_EQ(std::string(bytes.data(), 4), "ODMP");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(bytes[6], 1);
  EXPECT_EQ(bytes[8], 3);
  EXPECT_EQ(bytes[12], 5);
  EXPECT_EQ(bytes[16], 4);
}

TEST(MapFormat, RejectsBadMagicVersionAndFlags) {
  auto bytes = encode_descriptor_map(sample_map(false));
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_EQ(code_of([&] { decode_descriptor_map(bad); }), ErrorCode::format_error);
  EXPECT_NE(message_of([&] { decode_descriptor_map(bad); }).find("offset 0"), std::string::npos);
  bad = bytes;
  bad[4] = 2;
  EXPECT_NE(message_of([&] { decode_descriptor_map(bad); }).find("offset 4"), std::string::npos);
  bad = bytes;
  bad[6] = 4;
  EXPECT_NE(message_of([&] { decode_descriptor_map(bad); }).find("offset 6"), std::string::npos);
  bad = bytes;
  std::memset(bad.data() + 8, 0, 4);
  EXPECT_NE(message_of([&] { decode_descriptor_map(bad); }).find("offset 8"), std::string::npos);
}

TEST(MapFormat, RejectsTruncationAndTrailingBytes) {
  const auto bytes = encode_descriptor_map(sample_map(true));
  for (std::size_t n : {std::size_t{0}, std::size_t{3}, std::size_t{10}, kMapHeaderSize, bytes.size() - 1}) {
    const std::vector<char> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(n));
    EXPECT_EQ(code_of([&] { decode_descriptor_map(cut); }), ErrorCode::format_error) << n;
  }
  auto longer = bytes;
  longer.push_back(0);
  EXPECT_NE(message_of([&] { decode_descriptor_map(longer); }).find("trailing"), std::string::npos);
}

TEST(MapFormat, RejectsNonFiniteAndOutOfRangeScores) {
  auto bytes = encode_descriptor_map(sample_map(true));
  const float nan = std::numeric_limits<float>::quiet_NaN();
  auto bad = bytes;
  std::memcpy(bad.data() + kMapHeaderSize + 8, &nan, 4);
  EXPECT_EQ(code_of([&] { decode_descriptor_map(bad); }), ErrorCode::format_error);
  bad = bytes;
  const float big = 1.5f;
  std::memcpy(bad.data() + bytes.size() - 4, &big, 4);
  EXPECT_NE(message_of([&] { decode_descriptor_map(bad); }).find("offset " + std::to_string(bytes.size() - 4)),
            std::string::npos);
}

TEST(WeightsFormat, RoundTripIsBitIdentical) {
  const Mlp<float> net = Mlp<float>::random({6, 8, 3}, 4);
  const auto bytes = encode_weights(net);
  EXPECT_EQ(bytes.size(), kWeightsHeaderSize + 4 * net.arch().parameter_count());
  const Mlp<float> back = decode_weights(bytes);
  EXPECT_EQ(back.arch(), net.arch());
  EXPECT_TRUE(bit_equal(back.parameters(), net.parameters()));

  auto bad = bytes;
  bad[1] = 'X';
  EXPECT_EQ(code_of([&] { decode_weights(bad); }), ErrorCode::format_error);
  const std::vector<char> cut(bytes.begin(), bytes.end() - 2);
  EXPECT_EQ(code_of([&] { decode_weights(cut); }), ErrorCode::format_error);
  auto longer = bytes;
  longer.push_back(1);
  EXPECT_EQ(code_of([&] { decode_weights(longer); }), ErrorCode::format_error);
}

TEST(Files, RoundTripAndMissingFile) {
  const auto dir = std::filesystem::temp_directory_path() / ("oneloc_io_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  const DescriptorMap m = sample_map(true);
  write_descriptor_map(dir / "a.odmp", m);
  EXPECT_TRUE(bit_equal(read_descriptor_map(dir / "a.odmp").data(), m.data()));
  const Mlp<float> net = Mlp<float>::random({4, 4, 1}, 1);
  write_weights(dir / "w.olwt", net);
  EXPECT_TRUE(bit_equal(read_weights(dir / "w.olwt").parameters(), net.parameters()));
  EXPECT_EQ(code_of([&] { read_descriptor_map(dir / "missing.odmp"); }), ErrorCode::io_error);
  std::filesystem::remove_all(dir);
}

TEST(Annotations, ParseAndFormat) {
  const std::string text = "# comment\nobj/0001 10 20 30 40\n\nobj/0002 1 2 3 4 5 6 7 8\n";
  const auto frames = parse_annotations(text);
  ASSERT_EQ(frames.size(), 2u);
  EXPECT_EQ(frames[0].frame_id, "obj/0001");
  EXPECT_EQ(frames[0].boxes.front(), (BBox{10, 20, 30, 40}));
  EXPECT_EQ(frames[1].boxes.size(), 2u);
  EXPECT_EQ(parse_annotations(format_annotations(frames))[1].boxes[1], (BBox{5, 6, 7, 8}));
}

TEST(Annotations, Errors) {
  EXPECT_EQ(code_of([] { parse_annotations("a 1 2 3\n"); }), ErrorCode::format_error);
  EXPECT_EQ(code_of([] { parse_annotations("a 1 2 3 x\n"); }), ErrorCode::format_error);
  EXPECT_EQ(code_of([] { parse_annotations("a 1 2 0 4\n"); }), ErrorCode::format_error);
  EXPECT_EQ(code_of([] { parse_annotations("a 1 2 3 4\na 1 2 3 4\n"); }), ErrorCode::format_error);
  EXPECT_NE(message_of([] { parse_annotations("a 1 2 3 4\nb 1 2 3 nan\n"); }).find("line 2"), std::string::npos);
}

TEST(Predictions, ParseFormatAndErrors) {
  const std::vector<FrameDetections> frames{{"o/1", {{{1.5, 2.25, 3, 4}, 0.125}}}, {"o/2", {}}};
  const auto back = parse_predictions(format_predictions(frames));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].detections[0].box, frames[0].detections[0].box);
  EXPECT_EQ(back[0].detections[0].score, 0.125);
  EXPECT_TRUE(back[1].detections.empty());
  EXPECT_EQ(code_of([] { parse_predictions("a 1 2 3 4\n"); }), ErrorCode::format_error);
  EXPECT_EQ(code_of([] { parse_predictions("a 1 2 3 4 5\na\n"); }), ErrorCode::format_error);
}

TEST(Records, JoinByFrameId) {
  const std::vector<FrameBoxes> truth{{"cup/1", {{5, 5, 2, 2}}}, {"cup/2", {{5, 5, 2, 2}}}, {"plain", {{1, 1, 1, 1}}}};
  const std::vector<FrameDetections> preds{{"cup/2", {{{5, 5, 2, 2}, 3.0}}}, {"other", {}}};
  const auto recs = join_records(truth, preds);
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[0].object_id, "cup");
  EXPECT_TRUE(recs[0].predictions.empty());
  EXPECT_EQ(recs[1].predictions.size(), 1u);
  EXPECT_EQ(recs[2].object_id, "");
  EXPECT_EQ(object_of("a/b/c"), "a/b");
}

TEST(RunConfigText, RoundTrip) {
  RunConfig c;
  c.pipeline.sampler.pair_count = 1234;
  c.pipeline.vote.ray_check = RayCheck::one;
  c.pipeline.vote.size_weighting = SizeWeighting::uniform;
  c.train.loss.variant = LossVariant::neg_sq_cos;
  c.train.adam.learning_rate = 1.0 / 3.0;
  c.train.seed = 18446744073709551615ull;
  const RunConfig back = parse_run_config(format_run_config(c));
  EXPECT_EQ(format_run_config(back), format_run_config(c));
  EXPECT_EQ(back.train.adam.learning_rate, 1.0 / 3.0);
  EXPECT_EQ(back.train.seed, c.train.seed);
}

TEST(RunConfigText, ParsesCommentsAndWhitespace) {
  const RunConfig c = parse_run_config("# header\n  epochs = 7  # trailing\n\nsampling=sparse\n");
  EXPECT_EQ(c.train.epochs, 7);
  EXPECT_EQ(c.pipeline.sampling, SamplingMode::sparse);
}

TEST(RunConfigText, Errors) {
  EXPECT_EQ(code_of([] { parse_run_config("bogus = 1\n"); }), ErrorCode::config_error);
  EXPECT_EQ(code_of([] { parse_run_config("epochs\n"); }), ErrorCode::config_error);
  EXPECT_EQ(code_of([] { parse_run_config("epochs = 1.5\n"); }), ErrorCode::config_error);
  EXPECT_EQ(code_of([] { parse_run_config("epochs = 0\n"); }), ErrorCode::config_error);
  EXPECT_EQ(code_of([] { parse_run_config("ray_check = sometimes\n"); }), ErrorCode::config_error);
  EXPECT_EQ(code_of([] { parse_run_config("learning_rate = -1\n"); }), ErrorCode::config_error);
}

TEST(Heatmap, PgmHeaderAndScaling) {
  AccumulatorGrid g(20, 30, 10);
  g.add_vote({5, 5});
  g.add_vote({5, 5});
  g.add_vote({25, 15});
  const auto pgm = encode_heatmap_pgm(g);
  const std::string header = "P5\n3 2\n255\n";
  ASSERT_EQ(pgm.size(), header.size() + 6);
  EXPECT_EQ(std::string(pgm.data(), header.size()), header);
  EXPECT_EQ(static_cast<unsigned char>(pgm[header.size()]), 255);
  EXPECT_EQ(static_cast<unsigned char>(pgm[header.size() + 5]), 128);
  EXPECT_EQ(static_cast<unsigned char>(pgm[header.size() + 1]), 0);
}
