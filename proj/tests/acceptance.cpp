// Release gate: seven end-to-end criteria, each reported as a single
// [PASS]/[FAIL] line with its measured runtime.  Every criterion is also a
// regular GoogleTest case, so `ctest` fails whenever a line fails.
#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "meshdeform/dataset.hpp"
#include "meshdeform/features.hpp"
#include "meshdeform/gcn.hpp"
#include "meshdeform/io.hpp"
#include "meshdeform/losses.hpp"
#include "meshdeform/mesh.hpp"
#include "meshdeform/metrics.hpp"
#include "meshdeform/pipeline.hpp"
#include "test_support.hpp"

#ifndef MESHDEFORM_DATA_DIR
#define MESHDEFORM_DATA_DIR "data"
#endif

using namespace meshdeform;
using mdtest::brute_chamfer_mean;
using mdtest::brute_emd;
using mdtest::brute_hausdorff;
using mdtest::fd_max_rel;
using mdtest::make_tetrahedron;
using mdtest::random_points;
using mdtest::random_rotation;
using mdtest::random_tensor;
using mdtest::read_bytes;
using mdtest::transform_points;
using mdtest::TempDir;

namespace {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

void report(int criterion, const std::string& label, double secs) {
  const bool ok = !::testing::Test::HasFailure();
  std::printf("[%s] criterion %d: %s (%.2f s)\n", ok ? "PASS" : "FAIL", criterion, label.c_str(),
              secs);
  std::fflush(stdout);
}

std::string fixture_path(const std::string& name) {
  return std::string(MESHDEFORM_DATA_DIR) + "/" + name;
}

void expect_closed(const Mesh& mesh, std::size_t verts, std::size_t edges, std::size_t faces) {
  EXPECT_EQ(mesh.vertices.size(), verts);
  EXPECT_EQ(mesh.edges.size(), edges);
  EXPECT_EQ(mesh.faces.size(), faces);
  const long long v = static_cast<long long>(mesh.vertices.size());
  const long long e = static_cast<long long>(mesh.edges.size());
  const long long f = static_cast<long long>(mesh.faces.size());
  EXPECT_EQ(v - e + f, 2);
  EXPECT_EQ(3 * f, 2 * e);
}

double variance(const std::vector<int>& values) {
  double mean = 0.0;
  for (int v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double acc = 0.0;
  for (int v : values) acc += (v - mean) * (v - mean);
  return acc / static_cast<double>(values.size());
}

using NearestMap = std::shared_ptr<const std::vector<std::size_t>>;

NearestMap nearest_of(std::vector<std::size_t> indices) {
  return std::make_shared<const std::vector<std::size_t>>(std::move(indices));
}

std::vector<Vec3> unit_normals(Rng& rng, std::size_t n) {
  std::vector<Vec3> out(n);
  for (Vec3& v : out) {
    v = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    while (norm(v) < 1e-3) v = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    v = normalized(v);
  }
  return out;
}

// Locations kept well inside one bilinear cell, or well outside the border
// clamp, so a finite-difference step never straddles an interpolation knot.
Tensor safe_locations(Rng& rng, std::size_t n, std::size_t width, std::size_t height) {
  std::vector<double> data;
  for (std::size_t i = 0; i < n; ++i) {
    if (rng.below(4) == 0) {
      data.push_back(-2.5 - rng.uniform(0.0, 1.0));
      data.push_back(static_cast<double>(height) + 0.5 + rng.uniform(0.0, 1.0));
    } else {
      data.push_back(static_cast<double>(rng.below(width - 1)) + 0.2 + rng.uniform(0.0, 0.6));
      data.push_back(static_cast<double>(rng.below(height - 1)) + 0.2 + rng.uniform(0.0, 0.6));
    }
  }
  return Tensor::from_data({n, 2}, data, true);
}

Tensor positive_depth_points(Rng& rng, std::size_t n) {
  std::vector<double> data;
  for (std::size_t i = 0; i < n; ++i) {
    data.push_back(rng.uniform(-0.5, 0.5));
    data.push_back(rng.uniform(-0.5, 0.5));
    data.push_back(rng.uniform(0.5, 2.0));
  }
  return Tensor::from_data({n, 3}, data, true);
}

}  // namespace

TEST(AcceptanceGate, Criterion1TopologyCascade) {
  Stopwatch sw;
  Mesh mesh;
  ASSERT_NO_THROW(mesh = read_obj(fixture_path("ellipsoid_156.obj")));
  expect_closed(mesh, 156, 462, 308);
  Mesh mid = unpool_edge(mesh);
  expect_closed(mid, 618, 1848, 1232);
  Mesh fine = unpool_edge(mid);
  expect_closed(fine, 2466, 7392, 4928);
  EXPECT_LT(sw.seconds(), 1.0);
  report(1, "topology cascade 156 -> 618 -> 2466", sw.seconds());
}

TEST(AcceptanceGate, Criterion2GradientChecks) {
  Stopwatch sw;
  constexpr int kConfigs = 20;
  constexpr double kTol = 1e-4;

  {  // Chamfer loss.
    Rng rng(101);
    for (int c = 0; c < kConfigs; ++c) {
      Tensor pred = random_tensor(rng, {2 + rng.below(6), 3});
      std::vector<Vec3> target = random_points(rng, 2 + rng.below(6));
      auto f = [&]() { return chamfer_loss(pred, target).loss; };
      EXPECT_LT(fd_max_rel(f, pred, rng, 6), kTol) << "chamfer config " << c;
    }
  }
  {  // Normal loss.
    Rng rng(102);
    AdjacencyRef adj = share_adjacency(make_tetrahedron());
    for (int c = 0; c < kConfigs; ++c) {
      Tensor coords = random_tensor(rng, {4, 3});
      std::vector<Vec3> normals = unit_normals(rng, 3);
      std::vector<std::size_t> picks(4);
      for (std::size_t& q : picks) q = rng.below(3);
      NearestMap nearest = nearest_of(picks);
      auto f = [&]() { return normal_loss(coords, adj, normals, nearest); };
      EXPECT_LT(fd_max_rel(f, coords, rng, 6), kTol) << "normal config " << c;
    }
  }
  {  // Laplacian loss, alternating the differentiated argument.
    Rng rng(103);
    AdjacencyRef adj = share_adjacency(make_tetrahedron());
    for (int c = 0; c < kConfigs; ++c) {
      Tensor before = random_tensor(rng, {4, 3});
      Tensor after = random_tensor(rng, {4, 3});
      auto f = [&]() { return laplacian_loss(before, after, adj); };
      Tensor& leaf = (c % 2 == 0) ? after : before;
      EXPECT_LT(fd_max_rel(f, leaf, rng, 6), kTol) << "laplacian config " << c;
    }
  }
  {  // Edge-length loss.
    Rng rng(104);
    const std::vector<std::pair<int, int>> edges = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {0, 2}};
    for (int c = 0; c < kConfigs; ++c) {
      Tensor coords = random_tensor(rng, {4, 3});
      auto f = [&]() { return edge_length_loss(coords, edges); };
      EXPECT_LT(fd_max_rel(f, coords, rng, 6), kTol) << "edge config " << c;
    }
  }
  {  // Combined loss over a two-stage cascade of tetrahedra.
    Rng rng(105);
    Mesh mesh1 = make_tetrahedron();
    Mesh mesh2 = make_tetrahedron();
    for (int c = 0; c < kConfigs; ++c) {
      Tensor in1 = random_tensor(rng, {4, 3});
      Tensor out1 = random_tensor(rng, {4, 3});
      Tensor in2 = random_tensor(rng, {4, 3});
      Tensor out2 = random_tensor(rng, {4, 3});
      TargetShape target;
      target.points = random_points(rng, 6);
      target.normals = unit_normals(rng, 6);
      CascadeOutput cascade;
      cascade.stages.push_back({in1, out1, Tensor(), &mesh1});
      cascade.stages.push_back({in2, out2, Tensor(), &mesh2});
      auto f = [&]() { return total_loss(cascade, target, LossWeights{}).loss; };
      Tensor& leaf = (c % 2 == 0) ? out2 : out1;
      EXPECT_LT(fd_max_rel(f, leaf, rng, 6), kTol) << "total config " << c;
    }
  }
  {  // Graph convolution, rotating the differentiated parameter.
    Rng rng(106);
    AdjacencyRef adj = share_adjacency(make_tetrahedron());
    for (int c = 0; c < kConfigs; ++c) {
      const std::size_t d_in = 1 + rng.below(5), d_out = 1 + rng.below(5);
      GraphConvLayer layer(d_in, d_out, rng, true);
      Tensor features = random_tensor(rng, {4, d_in});
      auto f = [&]() {
        Tensor y = graph_conv(features, adj, layer);
        return sum(mul(y, y));
      };
      std::vector<Tensor*> leaves = {&features, &layer.w0, &layer.w1, &layer.bias};
      EXPECT_LT(fd_max_rel(f, *leaves[c % leaves.size()], rng, 6), kTol)
          << "graph conv config " << c;
    }
  }
  {  // Bilinear pooling, in both the map and the locations.
    Rng rng(107);
    for (int c = 0; c < kConfigs; ++c) {
      const std::size_t h = 3 + rng.below(4), w = 3 + rng.below(4), ch = 1 + rng.below(3);
      const std::size_t n = 2 + rng.below(5);
      Tensor map = random_tensor(rng, {h, w, ch});
      Tensor locations = safe_locations(rng, n, w, h);
      Tensor weights = random_tensor(rng, {n, ch}, -1.0, 1.0, false);
      auto f = [&]() { return sum(mul(bilinear_pool(map, locations), weights)); };
      Tensor& leaf = (c % 3 == 0) ? locations : map;
      EXPECT_LT(fd_max_rel(f, leaf, rng, 6), kTol) << "bilinear config " << c;
    }
  }
  {  // Camera projection, positions kept away from the depth clamp.
    Rng rng(108);
    const CameraIntrinsics cam{40.0, 44.0, 32.0, 30.0, 64, 60};
    for (int c = 0; c < kConfigs; ++c) {
      const std::size_t n = 2 + rng.below(6);
      Tensor positions = positive_depth_points(rng, n);
      Tensor weights = random_tensor(rng, {n, 2}, -1.0, 1.0, false);
      auto f = [&]() { return sum(mul(project_points(positions, cam), weights)); };
      EXPECT_LT(fd_max_rel(f, positions, rng, 6), kTol) << "projection config " << c;
    }
  }
  {  // Feature extractor, rotating over its convolution parameters.
    Rng rng(109);
    for (int c = 0; c < kConfigs; ++c) {
      FeatureExtractor extractor(ExtractorConfig{{1, 1, 1}}, rng);
      ImageGrid image = make_procedural_image(8, 8, 100 + static_cast<std::uint64_t>(c));
      std::vector<Tensor> params = extractor.params();
      auto f = [&]() {
        Tensor acc;
        FeaturePyramid pyr = extractor.forward(image);
        for (const Tensor& level : pyr.levels) {
          Tensor s = sum(mul(level, level));
          acc = acc.defined() ? add(acc, s) : s;
        }
        return acc;
      };
      EXPECT_LT(fd_max_rel(f, params[static_cast<std::size_t>(c) % params.size()], rng, 4), kTol)
          << "extractor config " << c;
    }
  }

  EXPECT_LT(sw.seconds(), 60.0);
  report(2, "finite-difference gradient suite", sw.seconds());
}

TEST(AcceptanceGate, Criterion3MetricOracles) {
  Stopwatch sw;
  {  // Chamfer distance and Hausdorff against O(N^2) brute force, exact.
    Rng rng(201);
    for (int c = 0; c < 100; ++c) {
      std::vector<Vec3> a = random_points(rng, 1 + rng.below(50));
      std::vector<Vec3> b = random_points(rng, 1 + rng.below(50));
      EXPECT_DOUBLE_EQ(chamfer_distance(a, b), brute_chamfer_mean(a, b)) << "pair " << c;
      EXPECT_DOUBLE_EQ(hausdorff(a, b), brute_hausdorff(a, b)) << "pair " << c;
    }
  }
  {  // EMD against the exhaustive-permutation oracle.
    Rng rng(202);
    for (int c = 0; c < 50; ++c) {
      const std::size_t n = 1 + rng.below(8);
      std::vector<Vec3> a = random_points(rng, n);
      std::vector<Vec3> b = random_points(rng, n);
      EXPECT_NEAR(emd(a, b), brute_emd(a, b), 1e-9) << "pair " << c;
    }
  }
  {  // F-score: perfect prediction scores 100%; loosening tau never hurts.
    Rng rng(203);
    for (int c = 0; c < 10; ++c) {
      std::vector<Vec3> pts = random_points(rng, 30 + rng.below(30));
      EXPECT_DOUBLE_EQ(f_score(pts, pts, 1e-4).f, 100.0);
      std::vector<Vec3> pred = random_points(rng, 40);
      std::vector<Vec3> gt = random_points(rng, 40);
      double prev = -1.0;
      for (double tau : {1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0}) {
        const double f = f_score(pred, gt, tau).f;
        EXPECT_GE(f, prev) << "tau " << tau;
        prev = f;
      }
      EXPECT_DOUBLE_EQ(prev, 100.0);
    }
  }
  EXPECT_LT(sw.seconds(), 30.0);
  report(3, "metric oracles (chamfer, hausdorff, emd, f-score)", sw.seconds());
}

TEST(AcceptanceGate, Criterion4OverfitSmokeTest) {
  Stopwatch sw;
  TempDir dir;
  make_fixtures(dir.path.string(), 42);

  RunConfig cfg;
  ASSERT_EQ(cfg.model.blocks, 3u);
  ASSERT_EQ(cfg.model.channels, 128u);
  ASSERT_EQ(cfg.model.extractor.perceptual_dim(), 48u);
  cfg.manifest_path = dir.file("manifest_train.json");
  cfg.out_dir = dir.file("overfit");
  cfg.steps = 400;
  cfg.seed = 42;

  std::vector<double> totals;
  TrainResult result =
      train(cfg, [&](std::size_t, const LossReport& rep) { totals.push_back(rep.total); });
  ASSERT_FALSE(result.aborted) << result.abort_reason;
  ASSERT_EQ(result.steps_run, 400u);
  ASSERT_EQ(totals.size(), 400u);

  // Mean total loss over consecutive 100-step windows must strictly decrease.
  std::vector<double> window_means;
  for (std::size_t w = 0; w + 100 <= totals.size(); w += 100) {
    window_means.push_back(std::accumulate(totals.begin() + static_cast<long>(w),
                                           totals.begin() + static_cast<long>(w) + 100, 0.0) /
                           100.0);
  }
  ASSERT_EQ(window_means.size(), 4u);
  for (std::size_t w = 1; w < window_means.size(); ++w)
    EXPECT_LT(window_means[w], window_means[w - 1]) << "window " << w;

  // Vertex-to-target Chamfer must end below 10% of its step-0 value.  A fresh
  // offset-mode model is the identity map, so the step-0 prediction is the
  // twice-unpooled initial ellipsoid.
  Manifest manifest = load_manifest(cfg.manifest_path);
  ASSERT_EQ(manifest.examples.size(), 1u);
  LoadedExample example = load_example(manifest.examples[0]);
  Mesh initial = unpool_edge(unpool_edge(make_ellipsoid_156()));
  const double cd_start = chamfer_distance(initial.vertices, example.target.points);
  ASSERT_GT(cd_start, 0.0);

  InferResult inferred = infer(result.final_checkpoint, example, dir.file("overfit_infer"));
  ASSERT_EQ(inferred.mesh_paths.size(), 3u);
  Mesh final_mesh = read_obj(inferred.mesh_paths.back());
  const double cd_final = chamfer_distance(final_mesh.vertices, example.target.points);
  EXPECT_LT(cd_final, 0.10 * cd_start) << "start " << cd_start << " final " << cd_final;

  // The deformed mesh must stay free of self-intersections.
  EXPECT_EQ(count_self_intersections(final_mesh, 1000, 4242), 0u);

  EXPECT_LT(sw.seconds(), 900.0);
  report(4, "single-example overfit, chamfer below 10% of start", sw.seconds());
}

TEST(AcceptanceGate, Criterion5EquivarianceInvariance) {
  Stopwatch sw;
  constexpr double kTol = 1e-9;

  {  // Graph convolution commutes with vertex relabeling.
    Rng rng(301);
    Mesh m = make_ellipsoid_156();
    const std::size_t n = m.vertices.size();
    for (int trial = 0; trial < 3; ++trial) {
      std::vector<int> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
      std::vector<int> inv(n);
      for (std::size_t i = 0; i < n; ++i) inv[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);

      std::vector<Vec3> verts(n);
      for (std::size_t i = 0; i < n; ++i) verts[i] = m.vertices[static_cast<std::size_t>(perm[i])];
      std::vector<std::array<int, 3>> faces;
      for (const auto& face : m.faces)
        faces.push_back({inv[static_cast<std::size_t>(face[0])],
                         inv[static_cast<std::size_t>(face[1])],
                         inv[static_cast<std::size_t>(face[2])]});
      Mesh pm = Mesh::create(verts, faces);

      const std::size_t d_in = 2 + rng.below(3), d_out = 2 + rng.below(3);
      GraphConvLayer layer(d_in, d_out, rng, true);
      Tensor f = random_tensor(rng, {n, d_in}, -1, 1, false);
      std::vector<double> pf_data(n * d_in);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d_in; ++c)
          pf_data[i * d_in + c] = f.at(static_cast<std::size_t>(perm[i]), c);
      Tensor pf = Tensor::from_data({n, d_in}, pf_data);

      Tensor out = graph_conv(f, share_adjacency(m), layer);
      Tensor pout = graph_conv(pf, share_adjacency(pm), layer);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d_out; ++c)
          EXPECT_NEAR(pout.at(i, c), out.at(static_cast<std::size_t>(perm[i]), c), kTol);
    }
  }
  {  // Normal, Laplacian, and edge losses are rigid-motion invariant.
    Rng rng(302);
    AdjacencyRef adj = share_adjacency(make_tetrahedron());
    const std::vector<std::pair<int, int>> edges = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {0, 2}, {1, 3}};
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<Vec3> before = random_points(rng, 4);
      std::vector<Vec3> coords = random_points(rng, 4);
      std::vector<Vec3> normals = unit_normals(rng, 5);
      std::vector<std::size_t> picks(4);
      for (std::size_t& q : picks) q = rng.below(5);
      NearestMap nearest = nearest_of(picks);

      const Mat3 rot = random_rotation(rng);
      const Vec3 shift = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
      std::vector<Vec3> before_rt = transform_points(before, rot, shift);
      std::vector<Vec3> coords_rt = transform_points(coords, rot, shift);
      std::vector<Vec3> normals_rt;
      for (const Vec3& v : normals) normals_rt.push_back(rot * v);

      const double n0 =
          normal_loss(Tensor::from_points(coords), adj, normals, nearest).value();
      const double n1 =
          normal_loss(Tensor::from_points(coords_rt), adj, normals_rt, nearest).value();
      EXPECT_NEAR(n1, n0, kTol * std::max(1.0, std::abs(n0)));

      const double l0 =
          laplacian_loss(Tensor::from_points(before), Tensor::from_points(coords), adj).value();
      const double l1 = laplacian_loss(Tensor::from_points(before_rt),
                                       Tensor::from_points(coords_rt), adj)
                            .value();
      EXPECT_NEAR(l1, l0, kTol * std::max(1.0, std::abs(l0)));

      const double e0 = edge_length_loss(Tensor::from_points(coords), edges).value();
      const double e1 = edge_length_loss(Tensor::from_points(coords_rt), edges).value();
      EXPECT_NEAR(e1, e0, kTol * std::max(1.0, std::abs(e0)));
    }
  }
  {  // Every evaluation metric is rigid-motion invariant.
    Rng rng(303);
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<Vec3> a = random_points(rng, 20 + rng.below(20));
      std::vector<Vec3> b = random_points(rng, 20 + rng.below(20));
      const Mat3 rot = random_rotation(rng);
      const Vec3 shift = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
      std::vector<Vec3> a_rt = transform_points(a, rot, shift);
      std::vector<Vec3> b_rt = transform_points(b, rot, shift);
      EXPECT_NEAR(f_score(a_rt, b_rt, 1e-2).f, f_score(a, b, 1e-2).f, kTol);
      EXPECT_NEAR(chamfer_distance(a_rt, b_rt), chamfer_distance(a, b), kTol);
      EXPECT_NEAR(hausdorff(a_rt, b_rt), hausdorff(a, b), kTol);
      EXPECT_NEAR(emd(a_rt, b_rt), emd(a, b), kTol);
    }
  }
  {  // Projection is invariant to uniform scaling of camera-space positions.
    Rng rng(304);
    const CameraIntrinsics cam{48.0, 48.0, 32.0, 32.0, 64, 64};
    for (int trial = 0; trial < 5; ++trial) {
      const std::size_t n = 3 + rng.below(5);
      Tensor positions = positive_depth_points(rng, n);
      Tensor base = project_points(positions, cam);
      for (double scale : {0.5, 2.0, 50.0}) {
        std::vector<double> scaled = positions.data();
        for (double& v : scaled) v *= scale;
        Tensor pix = project_points(Tensor::from_data({n, 3}, scaled), cam);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(pix.at(i, c), base.at(i, c), kTol);
      }
    }
  }
  {  // Bilinear pooling reproduces bilinear functions exactly.
    Rng rng(305);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t h = 4 + rng.below(4), w = 4 + rng.below(4), ch = 1 + rng.below(3);
      std::vector<std::array<double, 4>> coeff(ch);
      for (auto& cs : coeff)
        for (double& v : cs) v = rng.uniform(-2, 2);
      std::vector<double> data(h * w * ch);
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          for (std::size_t c = 0; c < ch; ++c) {
            const auto& cs = coeff[c];
            data[(y * w + x) * ch + c] = cs[0] + cs[1] * static_cast<double>(x) +
                                         cs[2] * static_cast<double>(y) +
                                         cs[3] * static_cast<double>(x) * static_cast<double>(y);
          }
      Tensor map = Tensor::from_data({h, w, ch}, data);
      for (int i = 0; i < 8; ++i) {
        const double x = rng.uniform(0.0, static_cast<double>(w - 1));
        const double y = rng.uniform(0.0, static_cast<double>(h - 1));
        Tensor pooled = bilinear_pool(map, Tensor::from_data({1, 2}, {x, y}));
        for (std::size_t c = 0; c < ch; ++c) {
          const auto& cs = coeff[c];
          EXPECT_NEAR(pooled.at(0, c), cs[0] + cs[1] * x + cs[2] * y + cs[3] * x * y, 1e-12);
        }
      }
    }
  }

  EXPECT_LT(sw.seconds(), 30.0);
  report(5, "equivariance and invariance suite", sw.seconds());
}

TEST(AcceptanceGate, Criterion6UnpoolingComparison) {
  Stopwatch sw;
  Mesh mesh = make_ellipsoid_156();
  const double var_edge = variance(vertex_degrees(unpool_edge(mesh)));
  const double var_face = variance(vertex_degrees(unpool_face(mesh)));
  EXPECT_GT(var_face, var_edge);
  EXPECT_LT(sw.seconds(), 1.0);
  report(6, "face unpooling degree variance exceeds edge unpooling", sw.seconds());
}

TEST(AcceptanceGate, Criterion7Determinism) {
  Stopwatch sw;
  TempDir dir;
  make_fixtures(dir.path.string(), 42);

  RunConfig cfg;
  cfg.model.channels = 32;
  cfg.model.layers_per_block = 4;
  cfg.manifest_path = dir.file("manifest_train.json");
  cfg.steps = 12;
  cfg.seed = 7;

  // Two identical training runs must produce bitwise-identical outputs.
  cfg.out_dir = dir.file("run_a");
  TrainResult a = train(cfg);
  cfg.out_dir = dir.file("run_b");
  TrainResult b = train(cfg);
  ASSERT_FALSE(a.aborted);
  ASSERT_FALSE(b.aborted);
  EXPECT_EQ(read_bytes(a.final_checkpoint), read_bytes(b.final_checkpoint));
  EXPECT_EQ(read_bytes(a.log_path), read_bytes(b.log_path));

  // Inference from one checkpoint is byte-stable across invocations.
  Manifest manifest = load_manifest(cfg.manifest_path);
  LoadedExample example = load_example(manifest.examples[0]);
  InferResult infer_a = infer(a.final_checkpoint, example, dir.file("infer_a"));
  InferResult infer_b = infer(a.final_checkpoint, example, dir.file("infer_b"));
  ASSERT_EQ(infer_a.mesh_paths.size(), infer_b.mesh_paths.size());
  for (std::size_t i = 0; i < infer_a.mesh_paths.size(); ++i)
    EXPECT_EQ(read_bytes(infer_a.mesh_paths[i]), read_bytes(infer_b.mesh_paths[i]));

  // Evaluation over the fixture manifest is byte-stable across invocations.
  EvalSummary eval_a =
      evaluate(dir.file("predictions"), dir.file("manifest_eval.json"), dir.file("eval_a"));
  EvalSummary eval_b =
      evaluate(dir.file("predictions"), dir.file("manifest_eval.json"), dir.file("eval_b"));
  EXPECT_EQ(eval_a.failed, 0u);
  EXPECT_EQ(read_bytes(eval_a.jsonl_path), read_bytes(eval_b.jsonl_path));
  EXPECT_EQ(read_bytes(eval_a.csv_path), read_bytes(eval_b.csv_path));

  report(7, "bitwise-deterministic train, infer, and eval", sw.seconds());
}
