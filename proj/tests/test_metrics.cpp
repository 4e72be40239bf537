// Evaluation metrics: F-score, Chamfer distance (mean convention), exact EMD
// and Hausdorff, plus the assignment solver and nearest-neighbor index they
// are built on. Every numeric expectation comes from an independent oracle.
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "test_support.hpp"

using namespace meshdeform;
using mdtest::brute_chamfer_mean;
using mdtest::brute_emd;
using mdtest::brute_hausdorff;
using mdtest::brute_min_sq;
using mdtest::random_points;
using mdtest::random_rotation;
using mdtest::transform_points;

TEST(FScore, PerfectPredictionScoresHundred) {
  Rng rng(31);
  std::vector<Vec3> pts = random_points(rng, 40);
  FScoreResult r = f_score(pts, pts, 1e-4);
  EXPECT_DOUBLE_EQ(r.f, 100.0);
  EXPECT_DOUBLE_EQ(r.precision, 100.0);
  EXPECT_DOUBLE_EQ(r.recall, 100.0);
}

TEST(FScore, HalfPrecisionFullRecall) {
  std::vector<Vec3> pred = {{0, 0, 0}, {10, 0, 0}};
  std::vector<Vec3> gt = {{0, 0, 0}};
  FScoreResult r = f_score(pred, gt, 1e-4);
  EXPECT_DOUBLE_EQ(r.precision, 50.0);
  EXPECT_DOUBLE_EQ(r.recall, 100.0);
  EXPECT_NEAR(r.f, 200.0 / 3.0, 1e-12);
}

TEST(FScore, ThresholdAppliesToSquaredDistance) {
  // With tau = 1e-4 a Euclidean gap of 0.009 (squared 8.1e-5) is inside and
  // 0.011 (squared 1.21e-4) is outside.
  std::vector<Vec3> gt = {{0, 0, 0}};
  EXPECT_DOUBLE_EQ(f_score({{0.009, 0, 0}}, gt, 1e-4).f, 100.0);
  EXPECT_DOUBLE_EQ(f_score({{0.011, 0, 0}}, gt, 1e-4).f, 0.0);
}

TEST(FScore, ZeroOverlapGivesZeroNotNaN) {
  FScoreResult r = f_score({{0, 0, 0}}, {{100, 100, 100}}, 1e-4);
  EXPECT_DOUBLE_EQ(r.f, 0.0);
  EXPECT_DOUBLE_EQ(r.precision, 0.0);
  EXPECT_DOUBLE_EQ(r.recall, 0.0);
}

TEST(FScore, MonotoneInTau) {
  Rng rng(33);
  std::vector<Vec3> pred = random_points(rng, 60);
  std::vector<Vec3> gt = random_points(rng, 45);
  double prev = -1.0;
  for (double tau : {1e-6, 1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0}) {
    double f = f_score(pred, gt, tau).f;
    EXPECT_GE(f, prev);
    prev = f;
  }
  EXPECT_DOUBLE_EQ(prev, 100.0);  // tau beyond the diameter captures everything
}

TEST(FScore, RejectsEmptyAndNonPositiveTau) {
  std::vector<Vec3> pts = {{0, 0, 0}};
  EXPECT_THROW(f_score({}, pts, 1e-4), std::invalid_argument);
  EXPECT_THROW(f_score(pts, {}, 1e-4), std::invalid_argument);
  EXPECT_THROW(f_score(pts, pts, 0.0), std::invalid_argument);
  EXPECT_THROW(f_score(pts, pts, -1.0), std::invalid_argument);
}

TEST(ChamferDistance, HandValues) {
  std::vector<Vec3> pts = {{1, 2, 3}, {-1, 0, 4}};
  EXPECT_DOUBLE_EQ(chamfer_distance(pts, pts), 0.0);
  EXPECT_DOUBLE_EQ(chamfer_distance({{0, 0, 0}}, {{2, 0, 0}}), 8.0);
}

TEST(ChamferDistance, MatchesBruteForceOracle) {
  Rng rng(35);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t na = 1 + rng.below(50), nb = 1 + rng.below(50);
    std::vector<Vec3> a = random_points(rng, na), b = random_points(rng, nb);
    EXPECT_DOUBLE_EQ(chamfer_distance(a, b), brute_chamfer_mean(a, b));
  }
}

TEST(Hausdorff, HandValues) {
  std::vector<Vec3> pts = {{5, 5, 5}, {6, 6, 6}};
  EXPECT_DOUBLE_EQ(hausdorff(pts, pts), 0.0);
  EXPECT_DOUBLE_EQ(hausdorff({{0, 0, 0}}, {{3, 4, 0}}), 5.0);
}

TEST(Hausdorff, DirectedSubsetAsymmetryIsAbsorbedByMax) {
  // pred ⊂ gt: the pred→gt direction is zero, but the lone far gt point keeps
  // the symmetric value large.
  std::vector<Vec3> gt = {{0, 0, 0}, {1, 0, 0}, {0, 7, 0}};
  std::vector<Vec3> pred = {{0, 0, 0}, {1, 0, 0}};
  EXPECT_DOUBLE_EQ(hausdorff(pred, gt), std::sqrt(brute_min_sq({0, 7, 0}, pred)));
}

TEST(Hausdorff, MatchesBruteForceOracle) {
  Rng rng(37);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t na = 1 + rng.below(50), nb = 1 + rng.below(50);
    std::vector<Vec3> a = random_points(rng, na), b = random_points(rng, nb);
    EXPECT_DOUBLE_EQ(hausdorff(a, b), brute_hausdorff(a, b));
  }
}

TEST(Emd, IdenticalAndPermutedSetsCostZero) {
  Rng rng(39);
  std::vector<Vec3> pts = random_points(rng, 30);
  EXPECT_DOUBLE_EQ(emd(pts, pts), 0.0);
  std::vector<Vec3> shuffled = pts;
  for (std::size_t i = shuffled.size(); i > 1; --i)
    std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
  EXPECT_NEAR(emd(shuffled, pts), 0.0, 1e-12);
}

TEST(Emd, MatchesExhaustivePermutationOracle) {
  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t n = 1 + rng.below(8);
    std::vector<Vec3> a = random_points(rng, n), b = random_points(rng, n);
    EXPECT_NEAR(emd(a, b), brute_emd(a, b), 1e-9);
  }
}

TEST(Emd, SymmetricUpToResampling) {
  Rng rng(43);
  std::vector<Vec3> a = random_points(rng, 12), b = random_points(rng, 12);
  EXPECT_NEAR(emd(a, b), emd(b, a), 1e-12);
}

TEST(Emd, UnequalSizesResampleEvenly) {
  Rng rng(45);
  std::vector<Vec3> small = random_points(rng, 4), big = random_points(rng, 8);
  std::vector<Vec3> expected_subset = {big[0], big[2], big[4], big[6]};
  EXPECT_NEAR(emd(small, big), brute_emd(small, expected_subset), 1e-9);
}

TEST(Emd, CapIsEnforcedAndEmptyRejected) {
  Rng rng(47);
  std::vector<Vec3> pts = random_points(rng, 9);
  EXPECT_THROW(emd(pts, pts, 8), std::invalid_argument);
  EXPECT_NO_THROW(emd(pts, pts, 9));
  EXPECT_THROW(emd({}, pts), std::invalid_argument);
  EXPECT_THROW(emd(pts, {}), std::invalid_argument);
}

TEST(Metrics, RigidMotionInvariance) {
  Rng rng(49);
  std::vector<Vec3> pred = random_points(rng, 40), gt = random_points(rng, 32);
  double f0 = f_score(pred, gt, 1e-2).f;
  double cd0 = chamfer_distance(pred, gt);
  double emd0 = emd(pred, gt);
  double h0 = hausdorff(pred, gt);
  for (int trial = 0; trial < 5; ++trial) {
    Mat3 r = random_rotation(rng);
    Vec3 t = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
    std::vector<Vec3> rp = transform_points(pred, r, t), rg = transform_points(gt, r, t);
    EXPECT_NEAR(f_score(rp, rg, 1e-2).f, f0, 1e-9 * std::max(1.0, f0));
    EXPECT_NEAR(chamfer_distance(rp, rg), cd0, 1e-9 * std::max(1.0, cd0));
    EXPECT_NEAR(emd(rp, rg), emd0, 1e-9 * std::max(1.0, emd0));
    EXPECT_NEAR(hausdorff(rp, rg), h0, 1e-9 * std::max(1.0, h0));
  }
}

TEST(Assignment, HandMatrices) {
  AssignmentResult r = solve_assignment({4, 1, 2, 3}, 2);
  EXPECT_DOUBLE_EQ(r.cost, 3.0);
  EXPECT_EQ(r.column_of_row[0], 1u);
  EXPECT_EQ(r.column_of_row[1], 0u);

  // Diagonal is optimal here; greedily taking the 1 at (0,1) would cost 12.
  AssignmentResult d = solve_assignment({2, 1, 9, 9, 3, 9, 9, 9, 4}, 3);
  EXPECT_DOUBLE_EQ(d.cost, 9.0);
}

TEST(Assignment, RecoversPlantedPermutation) {
  Rng rng(51);
  for (int trial = 0; trial < 10; ++trial) {
    std::size_t n = 2 + rng.below(7);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0u);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    std::vector<double> cost(n * n, 1.0);
    for (std::size_t i = 0; i < n; ++i) cost[i * n + perm[i]] = 0.0;
    AssignmentResult r = solve_assignment(cost, n);
    EXPECT_DOUBLE_EQ(r.cost, 0.0);
    EXPECT_EQ(r.column_of_row, perm);
  }
}

TEST(Assignment, MatchesExhaustiveSearch) {
  Rng rng(53);
  for (int trial = 0; trial < 30; ++trial) {
    std::size_t n = 1 + rng.below(6);
    std::vector<double> cost(n * n);
    for (double& c : cost) c = rng.uniform(0, 10);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0u);
    double best = std::numeric_limits<double>::infinity();
    do {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) total += cost[i * n + perm[i]];
      best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_NEAR(solve_assignment(cost, n).cost, best, 1e-12);
  }
}

TEST(Assignment, RejectsBadDimensions) {
  EXPECT_THROW(solve_assignment({}, 0), std::invalid_argument);
  EXPECT_THROW(solve_assignment({1.0, 2.0, 3.0}, 2), std::invalid_argument);
}

TEST(KdTree, AgreesWithBruteForceAcrossSizes) {
  Rng rng(55);
  for (std::size_t n : {1u, 2u, 17u, 63u, 64u, 65u, 200u}) {
    std::vector<Vec3> pts = random_points(rng, n);
    KdTree tree(pts);
    for (int q = 0; q < 50; ++q) {
      Vec3 query = {rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)};
      NearestHit hit = tree.nearest(query);
      double expect = brute_min_sq(query, pts);
      EXPECT_DOUBLE_EQ(hit.sq_dist, expect);
      EXPECT_DOUBLE_EQ(sq_dist(query, pts[hit.index]), expect);
    }
  }
}

TEST(KdTree, TiesResolveToLowestIndexInTreeMode) {
  // >=64 points forces the tree path; the two equidistant candidates straddle
  // the likely split so the far-subtree-on-equality rule is exercised.
  std::vector<Vec3> pts = {{1, 0, 0}, {-1, 0, 0}};
  Rng rng(57);
  for (int i = 0; i < 70; ++i)
    pts.push_back({rng.uniform(5, 9), rng.uniform(-9, 9), rng.uniform(-9, 9)});
  KdTree tree(pts);
  NearestHit hit = tree.nearest({0, 0, 0});
  EXPECT_EQ(hit.index, 0u);
  EXPECT_DOUBLE_EQ(hit.sq_dist, 1.0);

  // Exact duplicate points: the earlier one wins.
  std::vector<Vec3> dup = pts;
  dup[40] = dup[20];
  KdTree dup_tree(dup);
  EXPECT_EQ(dup_tree.nearest(dup[20]).index, 20u);
}

TEST(KdTree, NearestAllMatchesPerQueryCalls) {
  Rng rng(59);
  std::vector<Vec3> pts = random_points(rng, 80);
  std::vector<Vec3> queries = random_points(rng, 25);
  KdTree tree(pts);
  std::vector<NearestHit> hits = nearest_all(tree, queries);
  ASSERT_EQ(hits.size(), queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    NearestHit single = tree.nearest(queries[i]);
    EXPECT_EQ(hits[i].index, single.index);
    EXPECT_DOUBLE_EQ(hits[i].sq_dist, single.sq_dist);
  }
}

TEST(EvaluatePointSets, WiresAllMetricsTogether) {
  Rng rng(61);
  std::vector<Vec3> pts = random_points(rng, 100);
  MetricReport r = evaluate_point_sets(pts, pts, 1e-4, 32);
  EXPECT_DOUBLE_EQ(r.f_tau, 100.0);
  EXPECT_DOUBLE_EQ(r.f_2tau, 100.0);
  EXPECT_DOUBLE_EQ(r.cd, 0.0);
  EXPECT_NEAR(r.emd, 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(r.hausdorff, 0.0);
  EXPECT_EQ(r.pred_count, 100u);
  EXPECT_EQ(r.gt_count, 100u);
  EXPECT_DOUBLE_EQ(r.tau, 1e-4);
}

TEST(EvaluatePointSets, EmdSampleBudgetKeepsLargeSetsSolvable) {
  Rng rng(63);
  std::vector<Vec3> pred = random_points(rng, 600), gt = random_points(rng, 590);
  MetricReport r = evaluate_point_sets(pred, gt, 1e-4, 16);
  std::vector<Vec3> ps, gs;
  for (std::size_t i = 0; i < 16; ++i) {
    ps.push_back(pred[i * pred.size() / 16]);
    gs.push_back(gt[i * gt.size() / 16]);
  }
  EXPECT_NEAR(r.emd, emd(ps, gs), 1e-12);
  EXPECT_DOUBLE_EQ(r.cd, chamfer_distance(pred, gt));  // CD uses the full sets
}
