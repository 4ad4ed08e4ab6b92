// oneloc command-line tool.
//
// Exit codes: 0 success, 2 file or format error, 3 configuration error,
// 4 pipeline error. Command-line usage errors use CLI11's own codes.

#include <oneloc.hpp>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace oneloc;

namespace {

enum ExitCode { kOk = 0, kFormatError = 2, kConfigError = 3, kPipelineError = 4 };

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::format_error:
    case ErrorCode::io_error:
      return kFormatError;
    case ErrorCode::config_error:
      return kConfigError;
    default:
      return kPipelineError;
  }
}

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
};

RunConfig load_config(const CommonOptions& o) {
  RunConfig cfg = o.config_path.empty() ? RunConfig{} : read_run_config(o.config_path);
  for (const std::string& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) fail(ErrorCode::config_error, "--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
  }
  return cfg;
}

fs::path map_path(const fs::path& dir, const std::string& frame_id) { return dir / (frame_id + ".odmp"); }

DescriptorMap load_query_map(const fs::path& path) {
  DescriptorMap map = read_descriptor_map(path);
  const bool landscape = map.height() == 480 && map.width() == 640;
  const bool portrait = map.height() == 640 && map.width() == 480;
  if (!landscape && !portrait) {
    std::cerr << "warning: " << path.string() << " is " << map.width() << "x" << map.height()
              << "; query maps are expected at 640x480 or 480x640\n";
  }
  return map;
}

json box_json(const BBox& b) { return {{"cx", b.cx}, {"cy", b.cy}, {"w", b.w}, {"h", b.h}}; }

json detection_json(const Detection& d) { return {{"box", box_json(d.box)}, {"score", d.score}}; }

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    detail::write_text(path, text);
  }
}

// --- simulate ---------------------------------------------------------------

struct SimulateOptions {
  std::string out_dir;
  std::string object = "synthetic";
  int frames = 20;
  int height = 480;
  int width = 640;
  int dim = 64;
  int instances = 1;
  double box_w = 200.0;
  double box_h = 120.0;
  double scale_lo = 0.85;
  double scale_hi = 1.15;
  double noise = 0.1;
  std::uint64_t object_seed = 7;
  std::uint64_t seed = 1;
};

int run_simulate(const SimulateOptions& o) {
  const ObjectEmbedding embedding(o.dim, o.object_seed);
  Rng rng = make_rng(o.seed);
  std::uniform_real_distribution<double> scale(o.scale_lo, o.scale_hi);
  std::vector<FrameBoxes> truth;
  for (int i = 0; i < o.frames; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%04d", i);
    const std::string id = o.object + "/" + name;
    std::vector<BBox> boxes;
    if (o.instances == 1) {
      boxes.push_back(random_box(o.height, o.width, {o.box_w, o.box_h}, o.scale_lo, o.scale_hi, rng));
    } else {
      const double k = scale(rng);
      boxes = separated_boxes(o.height, o.width, {o.box_w * k, o.box_h * k}, o.instances, 20.0, rng);
    }
    const SyntheticScene scene = gen_scene(o.height, o.width, boxes, embedding, o.noise, mix_seed(o.seed, i + 1));
    const fs::path path = map_path(o.out_dir, id);
    fs::create_directories(path.parent_path());
    write_descriptor_map(path, scene.map);
    truth.push_back({id, boxes});
  }
  detail::write_text(fs::path(o.out_dir) / "annotations.txt", format_annotations(truth));
  std::cout << "wrote " << o.frames << " frames to " << o.out_dir << "\n";
  return kOk;
}

// --- extract-targets --------------------------------------------------------

int run_extract_targets(const CommonOptions& common, const std::string& maps_dir, const std::string& annotations,
                        const std::string& out) {
  const RunConfig cfg = load_config(common);
  std::ostringstream lines;
  const auto frames = read_annotations(annotations);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const DescriptorMap map = read_descriptor_map(map_path(maps_dir, frames[i].frame_id));
    const int stratum = strata_size(map.height(), map.width(), cfg.pipeline.sampler.strata_divisor);
    const auto points =
        stratified_sample(map.height(), map.width(), stratum, mix_seed(cfg.pipeline.sampler.seed, i));
    json targets = json::array();
    for (const BBox& box : frames[i].boxes) {
      for (const auto& [index, t] : compute_targets(points, box, cfg.targets())) {
        const Point2 p = clamp_to_map(map, points[index]);
        targets.push_back({{"x", p.x}, {"y", p.y}, {"dx", t.dir.dx}, {"dy", t.dir.dy}, {"sx", t.size.sx},
                           {"sy", t.size.sy}});
      }
    }
    lines << json{{"frame_id", frames[i].frame_id}, {"targets", targets}}.dump() << '\n';
  }
  write_output(out, lines.str());
  return kOk;
}

// --- train ------------------------------------------------------------------

int run_train(const CommonOptions& common, const std::string& maps_dir, const std::string& annotations,
              const std::string& out, const std::string& log_path) {
  const RunConfig cfg = load_config(common);
  const auto frames = read_annotations(annotations);
  if (frames.empty()) fail(ErrorCode::format_error, "annotation file lists no frames");

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<FrameSamples> samples;
  samples.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const DescriptorMap map = read_descriptor_map(map_path(maps_dir, frames[i].frame_id));
    FrameSamples fs_;
    for (std::size_t b = 0; b < frames[i].boxes.size(); ++b) {
      const std::uint64_t frame_seed = mix_seed(cfg.pipeline.sampler.seed, i);
      const std::uint64_t seed = b == 0 ? frame_seed : mix_seed(frame_seed, b);
      FrameSamples part = make_frame_samples(map, frames[i].boxes[b], cfg.pipeline.sampler, seed, cfg.targets());
      fs_.insert(fs_.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    samples.push_back(std::move(fs_));
  }

  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path);
    if (!log) fail(ErrorCode::io_error, "cannot open '" + log_path + "' for writing");
    log << "epoch,loss\n";
  }
  const TrainResult r = train(samples, cfg.train, [&](int epoch, double loss) {
    std::cout << "epoch " << epoch << " loss " << loss << "\n";
    if (log) log << epoch << ',' << detail::fmt_double(loss) << '\n';
  });
  write_weights(out, r.weights);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "trained on " << frames.size() << " frames, " << r.steps << " steps, " << secs << " s -> " << out
            << "\n";
  return kOk;
}

// --- localize / detect ------------------------------------------------------

struct InferOptions {
  std::string weights;
  std::string map;
  std::string frame_id;
  std::string maps_dir;
  std::string frames_from;
  std::string out;
  std::string json_out;
  std::optional<double> min_score;
  std::optional<int> nms_cells;
  std::optional<int> max_instances;
};

int run_infer(const CommonOptions& common, const InferOptions& o, bool detection) {
  const RunConfig cfg = load_config(common);
  const Mlp<float> net = read_weights(o.weights);

  std::vector<std::pair<std::string, fs::path>> jobs;
  if (!o.map.empty()) {
    jobs.emplace_back(o.frame_id.empty() ? fs::path(o.map).stem().string() : o.frame_id, o.map);
  } else {
    if (o.maps_dir.empty() || o.frames_from.empty()) {
      fail(ErrorCode::config_error, "give either --map or both --maps-dir and --frames");
    }
    for (const FrameBoxes& f : read_annotations(o.frames_from)) jobs.emplace_back(f.frame_id, map_path(o.maps_dir, f.frame_id));
  }

  const PipelineConfig& p = cfg.pipeline;
  std::vector<FrameDetections> results;
  json machine = json::array();
  for (const auto& [id, path] : jobs) {
    const DescriptorMap map = load_query_map(path);
    FrameDetections fd{id, {}};
    if (detection) {
      fd.detections = detect(map, net, p, o.nms_cells.value_or(p.nms_cells),
                             o.min_score.value_or(p.min_score_fraction * p.sampler.pair_count),
                             o.max_instances.value_or(p.max_instances));
    } else {
      fd.detections.push_back(localize(map, net, p));
    }
    json dets = json::array();
    for (const Detection& d : fd.detections) dets.push_back(detection_json(d));
    machine.push_back({{"frame_id", id}, {"detections", dets}});
    results.push_back(std::move(fd));
  }
  write_output(o.out, format_predictions(results));
  if (!o.json_out.empty()) write_output(o.json_out, machine.dump(2) + "\n");
  return kOk;
}

// --- eval -------------------------------------------------------------------

int run_eval(const std::string& predictions, const std::string& annotations, const std::string& mode,
             const std::string& json_out) {
  const auto truth = read_annotations(annotations);
  const auto preds = parse_predictions(detail::read_text(predictions));
  const auto records = join_records(truth, preds);
  MetricsReport report;
  if (mode == "localization") {
    report = localization_report(records);
  } else {
    report = detection_report(records);
  }
  const char* label = mode == "localization" ? "mRec" : "AP";
  std::printf("%s over %zu frames, %zu object(s)\n", report.mode.c_str(), report.frames, report.objects);
  std::printf("%s25 %.4f\n%s50 %.4f\n", label, report.at25, label, report.at50);
  if (!json_out.empty()) {
    const std::string key = mode == "localization" ? "mrec" : "ap";
    write_output(json_out, json{{"mode", report.mode},
                                {"frames", report.frames},
                                {"objects", report.objects},
                                {key + "25", report.at25},
                                {key + "50", report.at50}}
                                   .dump(2) +
                               "\n");
  }
  return kOk;
}

// --- analyze-variance -------------------------------------------------------

struct VarianceOptions {
  double a = 1.0;
  double b = 1.0;
  double sigma = 0.005;
  std::size_t samples = 200000;
  std::uint64_t seed = 1;
  double field_sigma = 0.2;
  int points = 500;
  int pairs = 5000;
  int trials = 20;
  std::string json_out;
};

int run_analyze_variance(const VarianceOptions& o) {
  json rows = json::array();
  std::printf("%10s %12s %12s %12s %12s %12s %12s\n", "beta", "det(J)", "sxx_an", "sxx_mc", "syy_an", "syy_mc",
              "det_ratio");
  for (const double beta_deg : {-150.0, -120.0, -90.0, -60.0, -45.0, -30.0, -15.0, -5.0}) {
    const PairGeometry g{o.a, o.b, 0.0, beta_deg * std::numbers::pi / 180.0, o.sigma};
    try {
      const Eigen::Matrix2d an = cov_analytic(g);
      const Eigen::Matrix2d mc = monte_carlo_cov(g, o.samples, o.seed);
      const double det_mc = mc(0, 0) * mc(1, 1) - mc(0, 1) * mc(1, 0);
      const double ratio = det_mc / cov_det_analytic(g);
      std::printf("%10.1f %12.4g %12.4g %12.4g %12.4g %12.4g %12.4f\n", beta_deg, jacobian_det(g), an(0, 0), mc(0, 0),
                  an(1, 1), mc(1, 1), ratio);
      rows.push_back({{"beta_deg", beta_deg},
                      {"det_j", jacobian_det(g)},
                      {"cov_analytic", {an(0, 0), an(0, 1), an(1, 1)}},
                      {"cov_monte_carlo", {mc(0, 0), mc(0, 1), mc(1, 1)}},
                      {"det_ratio", ratio}});
    } catch (const Error& e) {
      std::printf("%10.1f  skipped: %s\n", beta_deg, e.what());
    }
  }

  const BBox box{320.0, 240.0, 200.0, 120.0};
  double center_sum = 0.0;
  double corner_sum = 0.0;
  int wins = 0;
  for (int s = 0; s < o.trials; ++s) {
    const std::uint64_t seed = mix_seed(o.seed, static_cast<std::uint64_t>(s));
    Rng rng = make_rng(seed);
    std::uniform_real_distribution<double> ux(box.x0(), box.x1());
    std::uniform_real_distribution<double> uy(box.y0(), box.y1());
    std::vector<Point2> points(static_cast<std::size_t>(o.points));
    for (Point2& p : points) p = {ux(rng), uy(rng)};
    const auto pairs = sample_pairs(points, pair_max_distance(480, 640, 0.25), o.pairs, mix_seed(seed, 1));
    double frac[2];
    for (int t = 0; t < 2; ++t) {
      const auto preds = gen_direction_field(box, points, o.field_sigma, t ? VoteTarget::corner : VoteTarget::center,
                                             mix_seed(seed, 2));
      const AccumulatorGrid grid = accumulate(480, 640, 9.0, points, preds, pairs, VoteConfig{});
      frac[t] = grid.total_votes() > 0.0 ? grid.max_votes() / grid.total_votes() : 0.0;
    }
    center_sum += frac[0];
    corner_sum += frac[1];
    wins += frac[0] > frac[1];
  }
  std::printf("\npeak-cell vote fraction (sigma %.3f rad, %d trials): center %.4f, corner %.4f, center higher in %d\n",
              o.field_sigma, o.trials, center_sum / o.trials, corner_sum / o.trials, wins);
  if (!o.json_out.empty()) {
    write_output(o.json_out, json{{"covariance", rows},
                                  {"peak_fraction", {{"center", center_sum / o.trials},
                                                     {"corner", corner_sum / o.trials},
                                                     {"center_wins", wins},
                                                     {"trials", o.trials}}}}
                                     .dump(2) +
                                 "\n");
  }
  return kOk;
}

// --- heatmap ----------------------------------------------------------------

int run_heatmap(const CommonOptions& common, const std::string& weights, const std::string& map_file,
                const std::string& out) {
  const RunConfig cfg = load_config(common);
  const Mlp<float> net = read_weights(weights);
  const DescriptorMap map = load_query_map(map_file);
  const VoteResult votes = cast_votes(map, net, cfg.pipeline);
  write_heatmap_pgm(out, votes.grid);
  std::cout << "wrote " << votes.grid.cols() << "x" << votes.grid.rows() << " heatmap (" << votes.grid.total_votes()
            << " votes) to " << out << "\n";
  return kOk;
}

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config_path, "key=value run configuration file");
  cmd->add_option("--set", o.overrides, "override a configuration key (key=value); repeatable");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"oneloc: one-shot object localization by pairwise center voting"};
  app.require_subcommand(1);
  CommonOptions common;

  SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "generate synthetic descriptor maps and annotations");
  simulate->add_option("-o,--out", sim.out_dir, "output directory")->required();
  simulate->add_option("--object", sim.object, "object name used as the frame-id prefix");
  simulate->add_option("--frames", sim.frames, "number of frames")->check(CLI::PositiveNumber);
  simulate->add_option("--height", sim.height, "map height")->check(CLI::PositiveNumber);
  simulate->add_option("--width", sim.width, "map width")->check(CLI::PositiveNumber);
  simulate->add_option("--dim", sim.dim, "descriptor dimension")->check(CLI::PositiveNumber);
  simulate->add_option("--instances", sim.instances, "object instances per frame")->check(CLI::PositiveNumber);
  simulate->add_option("--box-w", sim.box_w, "base box width");
  simulate->add_option("--box-h", sim.box_h, "base box height");
  simulate->add_option("--scale-lo", sim.scale_lo, "minimum box scale factor");
  simulate->add_option("--scale-hi", sim.scale_hi, "maximum box scale factor");
  simulate->add_option("--noise", sim.noise, "relative descriptor noise inside boxes");
  simulate->add_option("--object-seed", sim.object_seed, "seed of the object's appearance");
  simulate->add_option("--seed", sim.seed, "seed for placement and noise");

  std::string maps_dir, annotations, out, log_path;
  auto* extract = app.add_subcommand("extract-targets", "dump per-point training targets as JSON lines");
  add_common(extract, common);
  extract->add_option("--maps-dir", maps_dir, "directory of <frame_id>.odmp files")->required();
  extract->add_option("--annotations", annotations, "annotation file")->required();
  extract->add_option("-o,--out", out, "output file (default stdout)");

  auto* train_cmd = app.add_subcommand("train", "train the direction/size network");
  add_common(train_cmd, common);
  train_cmd->add_option("--maps-dir", maps_dir, "directory of <frame_id>.odmp files")->required();
  train_cmd->add_option("--annotations", annotations, "annotation file")->required();
  train_cmd->add_option("-o,--out", out, "weights file to write")->required();
  train_cmd->add_option("--log", log_path, "per-epoch loss CSV");

  InferOptions infer;
  auto add_infer = [&](CLI::App* cmd) {
    add_common(cmd, common);
    cmd->add_option("-w,--weights", infer.weights, "weights file")->required();
    cmd->add_option("-m,--map", infer.map, "single query map");
    cmd->add_option("--frame-id", infer.frame_id, "frame id reported for --map");
    cmd->add_option("--maps-dir", infer.maps_dir, "directory of <frame_id>.odmp files");
    cmd->add_option("--frames", infer.frames_from, "annotation-format file listing the frames to process");
    cmd->add_option("-o,--out", infer.out, "predictions file (default stdout)");
    cmd->add_option("--json", infer.json_out, "also write JSON results to this file ('-' for stdout)");
  };
  auto* localize_cmd = app.add_subcommand("localize", "predict one box per query map");
  add_infer(localize_cmd);
  auto* detect_cmd = app.add_subcommand("detect", "predict scored boxes for every instance");
  add_infer(detect_cmd);
  detect_cmd->add_option("--min-score", infer.min_score, "absolute vote floor (default min_score_fraction * pair_count)");
  detect_cmd->add_option("--nms-cells", infer.nms_cells, "suppression radius in grid cells")->check(CLI::PositiveNumber);
  detect_cmd->add_option("--max-instances", infer.max_instances, "maximum detections")->check(CLI::PositiveNumber);

  std::string predictions, mode = "localization", json_out;
  auto* eval_cmd = app.add_subcommand("eval", "score predictions against annotations");
  eval_cmd->add_option("-p,--predictions", predictions, "predictions file")->required();
  eval_cmd->add_option("--annotations", annotations, "annotation file")->required();
  eval_cmd->add_option("--mode", mode, "localization (mRec) or detection (AP)")
      ->check(CLI::IsMember({"localization", "detection"}));
  eval_cmd->add_option("--json", json_out, "also write the report as JSON");

  VarianceOptions var;
  auto* variance = app.add_subcommand("analyze-variance", "analytic vs Monte-Carlo vote covariance");
  variance->add_option("--a", var.a, "x of the second point");
  variance->add_option("--b", var.b, "y of the second point");
  variance->add_option("--sigma", var.sigma, "angular noise for the covariance sweep (rad)");
  variance->add_option("--samples", var.samples, "Monte-Carlo draws per configuration");
  variance->add_option("--seed", var.seed, "random seed");
  variance->add_option("--field-sigma", var.field_sigma, "angular noise for the center/corner comparison (rad)");
  variance->add_option("--points", var.points, "points per trial");
  variance->add_option("--pairs", var.pairs, "pairs per trial");
  variance->add_option("--trials", var.trials, "number of seeded trials")->check(CLI::PositiveNumber);
  variance->add_option("--json", var.json_out, "also write the results as JSON");

  std::string weights, map_file;
  auto* heatmap = app.add_subcommand("heatmap", "write the vote grid as an 8-bit PGM image");
  add_common(heatmap, common);
  heatmap->add_option("-w,--weights", weights, "weights file")->required();
  heatmap->add_option("-m,--map", map_file, "query map")->required();
  heatmap->add_option("-o,--out", out, "output .pgm")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate) return run_simulate(sim);
    if (*extract) return run_extract_targets(common, maps_dir, annotations, out);
    if (*train_cmd) return run_train(common, maps_dir, annotations, out, log_path);
    if (*localize_cmd) return run_infer(common, infer, false);
    if (*detect_cmd) return run_infer(common, infer, true);
    if (*eval_cmd) return run_eval(predictions, annotations, mode, json_out);
    if (*variance) return run_analyze_variance(var);
    if (*heatmap) return run_heatmap(common, weights, map_file, out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFormatError;
  }
  return kOk;
}
