// pipeline.hpp — end-to-end runs: training, inference, evaluation and fixture
// generation. The CLI is a thin argument parser over the functions here, and
// every run is a pure function of (config, seed, input files): identical
// invocations produce identical bytes on disk.
#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "meshdeform/checkpoint.hpp"
#include "meshdeform/dataset.hpp"
#include "meshdeform/gcn.hpp"
#include "meshdeform/io.hpp"
#include "meshdeform/losses.hpp"
#include "meshdeform/metrics.hpp"
#include "meshdeform/optimizer.hpp"
#include "meshdeform/png_io.hpp"
#include "meshdeform/pipeline_runconfig.hpp"

namespace meshdeform {

// Sampling seed for an example: shared by fixture generation and evaluation so
// a prediction identical to a target's source mesh evaluates to a perfect
// score (the same points get drawn on both sides).
inline std::uint64_t example_sample_seed(std::uint64_t seed, const std::string& example_id) {
  return Rng::derive(seed, stable_hash(example_id));
}

// ---------------------------------------------------------------------------
// Example loading
// ---------------------------------------------------------------------------

struct LoadedExample {
  std::string id;
  CameraIntrinsics intrinsics;
  TargetShape target;
  std::optional<ImageGrid> image;
  std::optional<FeaturePyramid> pyramid;  // constant when precomputed
};

inline LoadedExample load_example(const Example& e) {
  LoadedExample out;
  out.id = e.id;
  out.intrinsics = read_intrinsics(e.intrinsics_path);
  out.target = read_point_cloud(e.target_path);
  if (!e.pyramid_path.empty())
    out.pyramid = read_pyramid(e.pyramid_path);
  else
    out.image = read_image(e.image_path);
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainResult {
  std::size_t steps_run = 0;
  bool aborted = false;
  std::size_t abort_step = 0;
  std::string abort_reason;
  double final_total = 0.0;
  std::string final_checkpoint;
  std::string log_path;
};

using TrainObserver = std::function<void(std::size_t step, const LossReport&)>;

namespace detail {

inline void save_model_checkpoint(const CascadeModel& model, std::size_t step,
                                  const std::string& path) {
  Checkpoint ck;
  model.save_params(ck);
  ck.metadata["model"] = model.config().to_json();
  ck.metadata["step"] = step;
  ck.save(path);
}

}  // namespace detail

// Steps round-robin through the manifest with batch size 1. Writes a JSON-lines
// loss log plus periodic and final checkpoints under out_dir. A non-finite
// loss or gradient aborts the run; previously written checkpoints survive and
// the abort step is reported in the result and the log.
inline TrainResult train(const RunConfig& cfg, const TrainObserver& observer = {}) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  Manifest manifest = load_manifest(cfg.manifest_path);
  std::vector<LoadedExample> examples;
  examples.reserve(manifest.examples.size());
  for (const Example& e : manifest.examples) examples.push_back(load_example(e));

  Rng rng(cfg.seed);
  CascadeModel model(cfg.model, make_ellipsoid_156(cfg.ellipsoid_radii, cfg.ellipsoid_center),
                     rng);
  AdamOptimizer::Options opts;
  opts.weight_decay = cfg.weight_decay;
  AdamOptimizer optimizer(model.params(), cfg.schedule(), opts, model.param_names());

  TrainResult result;
  result.log_path = (std::filesystem::path(cfg.out_dir) / "train_log.jsonl").string();
  result.final_checkpoint = (std::filesystem::path(cfg.out_dir) / "checkpoint_final.ckpt").string();
  std::ofstream log(result.log_path, std::ios::trunc);
  if (!log) throw std::runtime_error("cannot open loss log: " + result.log_path);

  if (cfg.steps == 0) {
    detail::save_model_checkpoint(model, 0, result.final_checkpoint);
    return result;
  }

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const LoadedExample& ex = examples[step % examples.size()];
    FeaturePyramid pyramid =
        ex.pyramid ? *ex.pyramid : model.extractor().forward(*ex.image);
    CascadeOutput cascade = model.forward(pyramid, ex.intrinsics);
    TotalLoss loss = total_loss(cascade, ex.target, cfg.weights);

    nlohmann::json line = loss.report.to_json();
    line["step"] = step;
    line["example"] = ex.id;
    line["lr"] = cfg.schedule().at(step);
    line["projection_clamps"] = cascade.projection_clamps;

    if (!std::isfinite(loss.report.total)) {
      result.aborted = true;
      result.abort_step = step;
      result.abort_reason = "non-finite loss";
      line["abort"] = result.abort_reason;
      log << line.dump() << '\n';
      break;
    }

    optimizer.zero_grad();
    backward(loss.loss);
    try {
      optimizer.step();
    } catch (const std::domain_error& e) {
      result.aborted = true;
      result.abort_step = step;
      result.abort_reason = e.what();
      line["abort"] = result.abort_reason;
      log << line.dump() << '\n';
      break;
    }

    log << line.dump() << '\n';
    if (observer) observer(step, loss.report);
    result.final_total = loss.report.total;
    result.steps_run = step + 1;

    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 &&
        step + 1 < cfg.steps) {
      std::string path = (std::filesystem::path(cfg.out_dir) /
                          ("checkpoint_step" + std::to_string(step + 1) + ".ckpt")).string();
      detail::save_model_checkpoint(model, step + 1, path);
    }
  }

  if (!result.aborted)
    detail::save_model_checkpoint(model, result.steps_run, result.final_checkpoint);
  return result;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

struct InferResult {
  std::vector<std::string> mesh_paths;  // one per cascade stage
  double seconds = 0.0;
};

// Rebuilds the model from the checkpoint's embedded config and writes
// mesh1.obj .. meshN.obj for the example under out_dir.
inline InferResult infer(const std::string& checkpoint_path, const LoadedExample& ex,
                         const std::string& out_dir, Vec3 ellipsoid_radii = {0.2, 0.2, 0.4},
                         Vec3 ellipsoid_center = {0.0, 0.0, 0.8}) {
  Checkpoint ck = Checkpoint::load(checkpoint_path);
  if (!ck.metadata.contains("model"))
    throw std::runtime_error("checkpoint lacks embedded model config: " + checkpoint_path);
  ModelConfig config = ModelConfig::from_json(ck.metadata.at("model"));
  Rng rng(0);  // initialization is immediately overwritten by the checkpoint
  CascadeModel model(config, make_ellipsoid_156(ellipsoid_radii, ellipsoid_center), rng);
  model.load_params(ck);

  std::filesystem::create_directories(out_dir);
  auto start = std::chrono::steady_clock::now();
  FeaturePyramid pyramid = ex.pyramid ? *ex.pyramid : model.extractor().forward(*ex.image);
  CascadeOutput cascade = model.forward(pyramid, ex.intrinsics);
  auto stop = std::chrono::steady_clock::now();

  InferResult result;
  result.seconds = std::chrono::duration<double>(stop - start).count();
  for (std::size_t i = 0; i < cascade.stages.size(); ++i) {
    std::string path =
        (std::filesystem::path(out_dir) / ("mesh" + std::to_string(i + 1) + ".obj")).string();
    write_obj(realize_mesh(cascade.stages[i]), path);
    result.mesh_paths.push_back(path);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalSummary {
  std::size_t evaluated = 0;
  std::size_t failed = 0;
  std::string jsonl_path;
  std::string csv_path;
};

namespace detail {

inline std::size_t eval_thread_count(std::size_t jobs) {
  unsigned hw = std::thread::hardware_concurrency();
  std::size_t threads = hw == 0 ? 1 : hw;
  if (const char* env = std::getenv("MESHDEFORM_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) threads = std::min<std::size_t>(threads, static_cast<std::size_t>(v));
  }
  return std::max<std::size_t>(1, std::min(threads, jobs));
}

// The prediction for an example is <pred_dir>/<id>.obj, or the final stage of
// an inference layout, <pred_dir>/<id>/mesh<highest>.obj.
inline std::string find_prediction(const std::string& pred_dir, const std::string& id) {
  namespace fs = std::filesystem;
  fs::path direct = fs::path(pred_dir) / (id + ".obj");
  if (fs::exists(direct)) return direct.string();
  fs::path nested = fs::path(pred_dir) / id;
  for (int stage = 9; stage >= 1; --stage) {
    fs::path candidate = nested / ("mesh" + std::to_string(stage) + ".obj");
    if (fs::exists(candidate)) return candidate.string();
  }
  return {};
}

inline std::string csv_number(double v) { return format_g17(v); }

}  // namespace detail

// Evaluates prediction meshes against target point clouds. Per-example metric
// jobs are pure and fan out across MESHDEFORM_THREADS workers (default: one
// per hardware thread); output files are written in manifest order, so the
// report bytes do not depend on the thread count. Missing or unreadable
// predictions are recorded as failures and the run continues.
inline EvalSummary evaluate(const std::string& pred_dir, const std::string& manifest_path,
                            const std::string& out_dir, double tau = 1e-4,
                            std::size_t samples = 2466, std::size_t emd_samples = kDefaultEmdCap,
                            std::uint64_t seed = 42) {
  if (tau <= 0.0) throw std::invalid_argument("tau must be positive");
  Manifest manifest = load_manifest(manifest_path);
  std::filesystem::create_directories(out_dir);

  std::size_t n = manifest.examples.size();
  std::vector<std::optional<MetricReport>> reports(n);
  std::vector<std::string> errors(n);
  std::atomic<std::size_t> next{0};

  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      const Example& e = manifest.examples[i];
      try {
        std::string pred_path = detail::find_prediction(pred_dir, e.id);
        if (pred_path.empty())
          throw std::runtime_error("no prediction found under " + pred_dir + " for '" + e.id + "'");
        Mesh pred = read_obj(pred_path);
        TargetShape gt = read_point_cloud(e.target_path);
        TargetShape pred_samples =
            sample_surface_target(pred, samples, example_sample_seed(seed, e.id));
        MetricReport r =
            evaluate_point_sets(pred_samples.points, gt.points, tau, emd_samples);
        r.example_id = e.id;
        reports[i] = r;
      } catch (const std::exception& ex) {
        errors[i] = ex.what();
      }
    }
  };
  std::size_t thread_count = detail::eval_thread_count(n);
  if (thread_count <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(thread_count);
    for (std::size_t t = 0; t < thread_count; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  EvalSummary summary;
  summary.jsonl_path = (std::filesystem::path(out_dir) / "metrics.jsonl").string();
  summary.csv_path = (std::filesystem::path(out_dir) / "metrics.csv").string();
  std::ofstream jsonl(summary.jsonl_path, std::ios::trunc);
  std::ofstream csv(summary.csv_path, std::ios::trunc);
  if (!jsonl || !csv) throw std::runtime_error("cannot open metric reports under " + out_dir);

  csv << "example_id,f_tau,f_2tau,precision,recall,cd,emd,hausdorff\n";
  MetricReport mean;
  for (std::size_t i = 0; i < n; ++i) {
    if (reports[i]) {
      const MetricReport& r = *reports[i];
      jsonl << r.to_json().dump() << '\n';
      csv << r.example_id << ',' << detail::csv_number(r.f_tau) << ','
          << detail::csv_number(r.f_2tau) << ',' << detail::csv_number(r.precision) << ','
          << detail::csv_number(r.recall) << ',' << detail::csv_number(r.cd) << ','
          << detail::csv_number(r.emd) << ',' << detail::csv_number(r.hausdorff) << '\n';
      mean.f_tau += r.f_tau;
      mean.f_2tau += r.f_2tau;
      mean.precision += r.precision;
      mean.recall += r.recall;
      mean.cd += r.cd;
      mean.emd += r.emd;
      mean.hausdorff += r.hausdorff;
      ++summary.evaluated;
    } else {
      nlohmann::json fail{{"example_id", manifest.examples[i].id},
                          {"status", "failed"},
                          {"error", errors[i]}};
      jsonl << fail.dump() << '\n';
      ++summary.failed;
    }
  }
  if (summary.evaluated > 0) {
    double d = static_cast<double>(summary.evaluated);
    csv << "mean," << detail::csv_number(mean.f_tau / d) << ','
        << detail::csv_number(mean.f_2tau / d) << ',' << detail::csv_number(mean.precision / d)
        << ',' << detail::csv_number(mean.recall / d) << ',' << detail::csv_number(mean.cd / d)
        << ',' << detail::csv_number(mean.emd / d) << ','
        << detail::csv_number(mean.hausdorff / d) << '\n';
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Fixture generation
// ---------------------------------------------------------------------------

// Writes the deterministic fixture tree used by the test suite and CLI demos:
//
//   ellipsoid_156.obj       canonical 156-vertex initial mesh
//   intrinsics.json         64x64 pinhole camera looking down +z
//   images/<id>.txt         procedural RGB grids
//   targets/<id>.xyzn       synthetic target point clouds
//   meshes/<id>.obj         eval source meshes
//   predictions/<id>.obj    copies of the source meshes (eval identity check)
//   manifest_train.json     one cube-target overfit example
//   manifest_eval.json      three eval examples
//   train_config.json       ready-to-run training configuration
inline void make_fixtures(const std::string& out_dir, std::uint64_t seed = 42) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "targets");
  fs::create_directories(fs::path(out_dir) / "meshes");
  fs::create_directories(fs::path(out_dir) / "predictions");
  fs::path root(out_dir);

  Mesh ellipsoid = make_ellipsoid_156();
  write_obj(ellipsoid, (root / "ellipsoid_156.obj").string());

  CameraIntrinsics k;
  k.f_x = k.f_y = 48.0;
  k.c_x = k.c_y = 32.0;
  k.width = k.height = 64;
  write_intrinsics(k, (root / "intrinsics.json").string());

  // Training example: deform the ellipsoid toward an axis-aligned cube.
  CubeParams cube;
  write_point_cloud(make_cube_target(cube, 2048, Rng::derive(seed, stable_hash("tgt:train_cube"))),
                    (root / "targets" / "train_cube.xyzn").string());
  write_image_grid(make_procedural_image(64, 64, Rng::derive(seed, stable_hash("img:train_cube"))),
                   (root / "images" / "train_cube.txt").string());
  nlohmann::json train_manifest{
      {"split", "train"},
      {"examples", nlohmann::json::array({{{"id", "train_cube"},
                                           {"image", "images/train_cube.txt"},
                                           {"intrinsics", "intrinsics.json"},
                                           {"target", "targets/train_cube.xyzn"}}})}};
  std::ofstream(root / "manifest_train.json") << train_manifest.dump(2) << '\n';

  // Eval examples: targets sampled from known meshes with the same seed
  // convention `evaluate` uses, so predicting the source mesh scores 100%.
  struct EvalCase {
    std::string id;
    Mesh mesh;
  };
  std::vector<EvalCase> cases;
  cases.push_back({"eval_ellipsoid", make_ellipsoid_156()});
  cases.push_back({"eval_sphere", make_ellipsoid({0.25, 0.25, 0.25}, {0.0, 0.0, 0.8}, 2)});
  cases.push_back({"eval_box", make_box_mesh({0.0, 0.0, 0.8}, {0.15, 0.15, 0.15})});
  nlohmann::json eval_examples = nlohmann::json::array();
  for (const EvalCase& c : cases) {
    write_obj(c.mesh, (root / "meshes" / (c.id + ".obj")).string());
    write_obj(c.mesh, (root / "predictions" / (c.id + ".obj")).string());
    write_point_cloud(sample_surface_target(c.mesh, 2466, example_sample_seed(seed, c.id)),
                      (root / "targets" / (c.id + ".xyzn")).string());
    write_image_grid(make_procedural_image(64, 64, Rng::derive(seed, stable_hash("img:" + c.id))),
                     (root / "images" / (c.id + ".txt")).string());
    eval_examples.push_back({{"id", c.id},
                             {"image", "images/" + c.id + ".txt"},
                             {"intrinsics", "intrinsics.json"},
                             {"target", "targets/" + c.id + ".xyzn"}});
  }
  nlohmann::json eval_manifest{{"split", "test"}, {"examples", eval_examples}};
  std::ofstream(root / "manifest_eval.json") << eval_manifest.dump(2) << '\n';

  nlohmann::json train_config{{"manifest", "manifest_train.json"},
                              {"out_dir", "runs/overfit"},
                              {"seed", seed},
                              {"steps", 200},
                              {"checkpoint_every", 100},
                              {"model", ModelConfig{}.to_json()},
                              {"loss_weights", LossWeights{}.to_json()}};
  std::ofstream(root / "train_config.json") << train_config.dump(2) << '\n';
}

}  // namespace meshdeform
