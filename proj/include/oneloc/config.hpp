#pragma once

// Run configuration as a plain key=value document. Unknown keys and
// malformed values are rejected.

#include <array>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "oneloc/error.hpp"
#include "oneloc/io.hpp"
#include "oneloc/pipeline.hpp"
#include "oneloc/training.hpp"

namespace oneloc {

struct RunConfig {
  PipelineConfig pipeline;
  TrainConfig train;

  TargetConfig& targets() { return pipeline.vote.targets; }
  const TargetConfig& targets() const { return pipeline.vote.targets; }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  if constexpr (std::is_floating_point_v<T>) {
    try {
      std::size_t used = 0;
      out = static_cast<T>(std::stod(value, &used));
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::exception&) {
      fail(ErrorCode::config_error, "'" + key + "': not a number: '" + value + "'");
    }
  } else {
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
      fail(ErrorCode::config_error, "'" + key + "': not an integer: '" + value + "'");
    }
  }
  return out;
}

template <typename E, std::size_t N>
using NameTable = std::array<std::pair<std::string_view, E>, N>;

template <typename E, std::size_t N>
E parse_enum(const std::string& key, const std::string& value, const NameTable<E, N>& options) {
  for (const auto& [name, v] : options) {
    if (value == name) return v;
  }
  std::string allowed;
  for (const auto& [name, v] : options) allowed += (allowed.empty() ? "" : "|") + std::string(name);
  fail(ErrorCode::config_error, "'" + key + "': expected " + allowed + ", got '" + value + "'");
}

template <typename E, std::size_t N>
std::string_view enum_name(E v, const NameTable<E, N>& options) {
  for (const auto& [name, o] : options) {
    if (o == v) return name;
  }
  return "?";
}

inline constexpr NameTable<RayCheck, 2> kRayCheckNames = {{
    {"one", RayCheck::one}, {"both", RayCheck::both}}};
inline constexpr NameTable<SizeAggregation, 2> kAggregationNames = {{
    {"intersection", SizeAggregation::at_intersection}, {"peak", SizeAggregation::at_peak}}};
inline constexpr NameTable<SizeWeighting, 2> kWeightingNames = {{
    {"uniform", SizeWeighting::uniform}, {"inverse_variance", SizeWeighting::inverse_variance}}};
inline constexpr NameTable<LossVariant, 3> kLossNames = {{
    {"one_minus_cos_sq", LossVariant::one_minus_cos_sq},
    {"neg_cos_sq", LossVariant::neg_cos_sq},
    {"neg_sq_cos", LossVariant::neg_sq_cos}}};
inline constexpr NameTable<SizeTarget, 2> kSizeTargetNames = {{
    {"relative", SizeTarget::relative}, {"absolute", SizeTarget::absolute}}};
inline constexpr NameTable<SamplingMode, 2> kSamplingNames = {{
    {"dense", SamplingMode::dense}, {"sparse", SamplingMode::sparse}}};

}  // namespace detail

inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  using namespace detail;
  auto& s = c.pipeline.sampler;
  auto& v = c.pipeline.vote;
  auto& t = c.train;
  auto positive = [&](double x) {
    if (!(x > 0.0)) fail(ErrorCode::config_error, "'" + key + "' must be positive");
    return x;
  };
  auto at_least_one = [&](long long x) {
    if (x < 1) fail(ErrorCode::config_error, "'" + key + "' must be >= 1");
    return static_cast<int>(x);
  };

  if (key == "strata_divisor") s.strata_divisor = at_least_one(parse_number<long long>(key, value));
  else if (key == "pair_distance_fraction") {
    const double f = parse_number<double>(key, value);
    if (!(f > 0.0 && f <= 1.0)) fail(ErrorCode::config_error, "'pair_distance_fraction' must be in (0, 1]");
    s.pair_distance_fraction = f;
  }
  else if (key == "pair_count") s.pair_count = at_least_one(parse_number<long long>(key, value));
  else if (key == "sample_seed") s.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "sampling") c.pipeline.sampling = parse_enum(key, value, kSamplingNames);
  else if (key == "sparse_nms_radius") c.pipeline.sparse.nms_radius = positive(parse_number<double>(key, value));
  else if (key == "sparse_threshold") c.pipeline.sparse.threshold = parse_number<double>(key, value);
  else if (key == "sparse_max_points") c.pipeline.sparse.max_points = at_least_one(parse_number<long long>(key, value));
  else if (key == "ray_check") v.ray_check = parse_enum(key, value, kRayCheckNames);
  else if (key == "size_aggregation") v.size_aggregation = parse_enum(key, value, kAggregationNames);
  else if (key == "size_weighting") v.size_weighting = parse_enum(key, value, kWeightingNames);
  else if (key == "size_target") v.targets.size_target = parse_enum(key, value, kSizeTargetNames);
  else if (key == "abs_size_unit") v.targets.abs_size_unit = positive(parse_number<double>(key, value));
  else if (key == "nms_cells") c.pipeline.nms_cells = at_least_one(parse_number<long long>(key, value));
  else if (key == "min_score_fraction") {
    const double f = parse_number<double>(key, value);
    if (!(f >= 0.0)) fail(ErrorCode::config_error, "'min_score_fraction' must be >= 0");
    c.pipeline.min_score_fraction = f;
  }
  else if (key == "max_instances") c.pipeline.max_instances = at_least_one(parse_number<long long>(key, value));
  else if (key == "loss_variant") t.loss.variant = parse_enum(key, value, kLossNames);
  else if (key == "lambda") t.loss.lambda = positive(parse_number<double>(key, value));
  else if (key == "learning_rate") t.adam.learning_rate = positive(parse_number<double>(key, value));
  else if (key == "weight_decay") {
    const double wd = parse_number<double>(key, value);
    if (!(wd >= 0.0)) fail(ErrorCode::config_error, "'weight_decay' must be >= 0");
    t.adam.weight_decay = wd;
  }
  else if (key == "adam_beta1") t.adam.beta1 = positive(parse_number<double>(key, value));
  else if (key == "adam_beta2") t.adam.beta2 = positive(parse_number<double>(key, value));
  else if (key == "adam_eps") t.adam.eps = positive(parse_number<double>(key, value));
  else if (key == "epochs") t.epochs = at_least_one(parse_number<long long>(key, value));
  else if (key == "frames_per_batch") t.frames_per_batch = at_least_one(parse_number<long long>(key, value));
  else if (key == "hidden") t.hidden = at_least_one(parse_number<long long>(key, value));
  else if (key == "blocks") t.blocks = at_least_one(parse_number<long long>(key, value));
  else if (key == "train_seed") t.seed = parse_number<std::uint64_t>(key, value);
  else fail(ErrorCode::config_error, "unknown key '" + key + "'");
}

inline RunConfig parse_run_config(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string body = detail::trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      fail(ErrorCode::config_error, "line " + std::to_string(line_no) + ": expected key=value");
    }
    set_config_value(c, detail::trim(body.substr(0, eq)), detail::trim(body.substr(eq + 1)));
  }
  return c;
}

inline RunConfig read_run_config(const std::filesystem::path& path) {
  return parse_run_config(detail::read_text(path));
}

inline std::string format_run_config(const RunConfig& c) {
  using namespace detail;
  std::ostringstream o;
  o << std::setprecision(17);
  const auto& s = c.pipeline.sampler;
  const auto& v = c.pipeline.vote;
  const auto& t = c.train;
  o << "strata_divisor = " << s.strata_divisor << '\n'
    << "pair_distance_fraction = " << s.pair_distance_fraction << '\n'
    << "pair_count = " << s.pair_count << '\n'
    << "sample_seed = " << s.seed << '\n'
    << "sampling = " << enum_name(c.pipeline.sampling, kSamplingNames) << '\n'
    << "sparse_nms_radius = " << c.pipeline.sparse.nms_radius << '\n'
    << "sparse_threshold = " << c.pipeline.sparse.threshold << '\n'
    << "sparse_max_points = " << c.pipeline.sparse.max_points << '\n'
    << "ray_check = " << enum_name(v.ray_check, kRayCheckNames) << '\n'
    << "size_aggregation = " << enum_name(v.size_aggregation, kAggregationNames) << '\n'
    << "size_weighting = " << enum_name(v.size_weighting, kWeightingNames) << '\n'
    << "size_target = " << enum_name(v.targets.size_target, kSizeTargetNames) << '\n'
    << "abs_size_unit = " << v.targets.abs_size_unit << '\n'
    << "nms_cells = " << c.pipeline.nms_cells << '\n'
    << "min_score_fraction = " << c.pipeline.min_score_fraction << '\n'
    << "max_instances = " << c.pipeline.max_instances << '\n'
    << "loss_variant = " << enum_name(t.loss.variant, kLossNames) << '\n'
    << "lambda = " << t.loss.lambda << '\n'
    << "learning_rate = " << t.adam.learning_rate << '\n'
    << "weight_decay = " << t.adam.weight_decay << '\n'
    << "adam_beta1 = " << t.adam.beta1 << '\n'
    << "adam_beta2 = " << t.adam.beta2 << '\n'
    << "adam_eps = " << t.adam.eps << '\n'
    << "epochs = " << t.epochs << '\n'
    << "frames_per_batch = " << t.frames_per_batch << '\n'
    << "hidden = " << t.hidden << '\n'
    << "blocks = " << t.blocks << '\n'
    << "train_seed = " << t.seed << '\n';
  return o.str();
}

}  // namespace oneloc
