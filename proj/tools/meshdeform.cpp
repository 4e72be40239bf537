// Command-line front end: train / infer / eval / unpool / make-ellipsoid /
// make-fixtures. Every command is deterministic given its inputs and seed,
// and exits 0 only when all requested work completed.
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "CLI11.hpp"
#include "meshdeform/meshdeform.hpp"

namespace fs = std::filesystem;
using namespace meshdeform;

namespace {

int cmd_train(const std::string& config_path, long long seed_override,
              const std::string& out_override) {
  RunConfig cfg = RunConfig::from_file(config_path);
  if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
  if (!out_override.empty()) cfg.out_dir = out_override;
  cfg.validate();
  TrainResult res = train(cfg, [](std::size_t step, const LossReport& report) {
    if (step % 25 == 0)
      std::printf("step %zu total %.6f chamfer %.6f\n", step, report.total, report.chamfer);
  });
  if (res.aborted) {
    std::fprintf(stderr, "train aborted at step %zu: %s (last checkpoint retained)\n",
                 res.abort_step, res.abort_reason.c_str());
    return 1;
  }
  std::printf("trained %zu steps, final total %.6f\ncheckpoint: %s\nlog: %s\n", res.steps_run,
              res.final_total, res.final_checkpoint.c_str(), res.log_path.c_str());
  return 0;
}

int cmd_infer(const std::string& checkpoint, const std::string& manifest_path,
              const std::string& out_dir) {
  Manifest manifest = load_manifest(manifest_path);
  fs::create_directories(out_dir);
  int failures = 0;
  for (const Example& e : manifest.examples) {
    try {
      LoadedExample ex = load_example(e);
      InferResult res = infer(checkpoint, ex, (fs::path(out_dir) / e.id).string());
      std::printf("%s: %zu meshes in %.2f ms\n", e.id.c_str(), res.mesh_paths.size(),
                  res.seconds * 1e3);
    } catch (const std::exception& err) {
      std::fprintf(stderr, "%s: failed: %s\n", e.id.c_str(), err.what());
      ++failures;
    }
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cascaded graph-convolutional mesh deformation"};
  app.require_subcommand(1);

  std::string config_path, manifest_path, checkpoint, out_path, pred_dir, input_path, output_path;
  std::string mode = "edge";
  long long seed = -1;
  double tau = 1e-4;

  CLI::App* train_cmd = app.add_subcommand("train", "Train from a JSON run config");
  train_cmd->add_option("--config", config_path, "Run config JSON")->required();
  train_cmd->add_option("--seed", seed, "Override config seed");
  train_cmd->add_option("--out", out_path, "Override output directory");

  CLI::App* infer_cmd = app.add_subcommand("infer", "Write cascade meshes for every example");
  infer_cmd->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  infer_cmd->add_option("--manifest", manifest_path, "Dataset manifest JSON")->required();
  infer_cmd->add_option("--out", out_path, "Output directory")->required();

  CLI::App* eval_cmd = app.add_subcommand("eval", "Score predictions against a manifest");
  eval_cmd->add_option("pred_dir", pred_dir, "Directory of predicted meshes")->required();
  eval_cmd->add_option("--manifest", manifest_path, "Dataset manifest JSON")->required();
  eval_cmd->add_option("--out", out_path, "Output directory")->required();
  eval_cmd->add_option("--tau", tau, "F-score squared-distance threshold");
  eval_cmd->add_option("--seed", seed, "Sampling seed");

  CLI::App* unpool_cmd = app.add_subcommand("unpool", "Subdivide a mesh (edge or face mode)");
  unpool_cmd->add_option("input", input_path, "Input OBJ")->required();
  unpool_cmd->add_option("output", output_path, "Output OBJ")->required();
  unpool_cmd->add_option("mode", mode, "edge|face")->check(CLI::IsMember({"edge", "face"}));

  CLI::App* ell_cmd = app.add_subcommand("make-ellipsoid", "Write the initial ellipsoid mesh");
  ell_cmd->add_option("--out", out_path, "Output OBJ path")->required();

  CLI::App* fix_cmd = app.add_subcommand("make-fixtures", "Generate the deterministic fixture tree");
  fix_cmd->add_option("--out", out_path, "Output directory")->required();
  fix_cmd->add_option("--seed", seed, "Fixture seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return cmd_train(config_path, seed, out_path);
    if (infer_cmd->parsed()) return cmd_infer(checkpoint, manifest_path, out_path);
    if (eval_cmd->parsed()) {
      EvalSummary s = evaluate(pred_dir, manifest_path, out_path, tau, 2466, kDefaultEmdCap,
                               seed >= 0 ? static_cast<std::uint64_t>(seed) : 42);
      std::printf("evaluated %zu examples (%zu failed)\nreport: %s\ncsv: %s\n", s.evaluated,
                  s.failed, s.jsonl_path.c_str(), s.csv_path.c_str());
      return s.failed == 0 ? 0 : 1;
    }
    if (unpool_cmd->parsed()) {
      Mesh mesh = read_obj(input_path);
      Mesh out = mode == "edge" ? unpool_edge(mesh) : unpool_face(mesh);
      write_obj(out, output_path);
      std::printf("%zu -> %zu vertices\n", mesh.vertices.size(), out.vertices.size());
      return 0;
    }
    if (ell_cmd->parsed()) {
      write_obj(make_ellipsoid_156(), out_path);
      return 0;
    }
    if (fix_cmd->parsed()) {
      make_fixtures(out_path, seed >= 0 ? static_cast<std::uint64_t>(seed) : 42);
      std::printf("fixtures written to %s\n", out_path.c_str());
      return 0;
    }
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 1;
  }
  return 1;
}
