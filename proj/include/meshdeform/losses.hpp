// losses.hpp — the four deformation losses and their weighted per-block sum:
// Chamfer, normal, Laplacian and edge-length. All are differentiable; the
// Chamfer nearest assignments are held fixed during backward (the standard
// piecewise-constant subgradient) and reused by the normal loss.
#pragma once

#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "meshdeform/gcn.hpp"
#include "meshdeform/kdtree.hpp"
#include "meshdeform/mesh.hpp"
#include "meshdeform/tensor.hpp"

namespace meshdeform {

struct LossWeights {
  double normal = 1.6e-4;
  double laplacian = 0.3;
  double edge = 0.1;

  void validate() const {
    if (normal < 0.0 || laplacian < 0.0 || edge < 0.0)
      throw std::invalid_argument("loss weights must be nonnegative");
  }

  nlohmann::json to_json() const {
    return {{"normal", normal}, {"laplacian", laplacian}, {"edge", edge}};
  }

  static LossWeights from_json(const nlohmann::json& j) {
    LossWeights w;
    w.normal = j.value("normal", w.normal);
    w.laplacian = j.value("laplacian", w.laplacian);
    w.edge = j.value("edge", w.edge);
    w.validate();
    return w;
  }
};

// ---------------------------------------------------------------------------
// Chamfer loss
// ---------------------------------------------------------------------------

struct ChamferResult {
  Tensor loss;  // scalar: Σ_p min_q ‖p−q‖² + Σ_q min_p ‖p−q‖²
  // For each prediction row, the index of its nearest target point (the q
  // reused by the normal loss), and the reverse map for the second direction.
  std::shared_ptr<const std::vector<std::size_t>> nearest_target;
  std::shared_ptr<const std::vector<std::size_t>> nearest_pred;
};

inline ChamferResult chamfer_loss(const Tensor& pred, const std::vector<Vec3>& target) {
  if (pred.shape().size() != 2 || pred.cols() != 3)
    throw std::invalid_argument("chamfer_loss: predictions must be Nx3, got " +
                                shape_str(pred.shape()));
  if (pred.rows() == 0 || target.empty())
    throw std::invalid_argument("chamfer_loss: empty point set");

  std::vector<Vec3> pred_pts = pred.to_points();
  KdTree target_tree(target);
  KdTree pred_tree(pred_pts);

  auto to_target = std::make_shared<std::vector<std::size_t>>(pred_pts.size());
  auto to_pred = std::make_shared<std::vector<std::size_t>>(target.size());
  double total = 0.0;
  for (std::size_t p = 0; p < pred_pts.size(); ++p) {
    NearestHit hit = target_tree.nearest(pred_pts[p]);
    (*to_target)[p] = hit.index;
    total += hit.sq_dist;
  }
  for (std::size_t q = 0; q < target.size(); ++q) {
    NearestHit hit = pred_tree.nearest(target[q]);
    (*to_pred)[q] = hit.index;
    total += hit.sq_dist;
  }

  auto target_copy = std::make_shared<const std::vector<Vec3>>(target);
  Tensor loss = make_op_result(
      {1}, {total}, {pred},
      [pred, target_copy, to_target, to_pred](detail::TensorNode& self) {
        if (!pred.requires_grad()) return;
        pred.node()->ensure_grad();
        double g = self.grad[0];
        std::vector<double>& grad = pred.node()->grad;
        // d/dp ‖p−q‖² = 2(p−q) for p's nearest q, plus the mirror term for
        // every target point assigned to p.
        for (std::size_t p = 0; p < to_target->size(); ++p) {
          const Vec3 q = (*target_copy)[(*to_target)[p]];
          grad[p * 3 + 0] += g * 2.0 * (pred.at(p, 0) - q.x);
          grad[p * 3 + 1] += g * 2.0 * (pred.at(p, 1) - q.y);
          grad[p * 3 + 2] += g * 2.0 * (pred.at(p, 2) - q.z);
        }
        for (std::size_t qi = 0; qi < to_pred->size(); ++qi) {
          const Vec3 q = (*target_copy)[qi];
          std::size_t p = (*to_pred)[qi];
          grad[p * 3 + 0] += g * 2.0 * (pred.at(p, 0) - q.x);
          grad[p * 3 + 1] += g * 2.0 * (pred.at(p, 1) - q.y);
          grad[p * 3 + 2] += g * 2.0 * (pred.at(p, 2) - q.z);
        }
      });
  return {loss, to_target, to_pred};
}

// ---------------------------------------------------------------------------
// Normal loss
// ---------------------------------------------------------------------------

// Σ_p Σ_{k∈N(p)} ⟨p−k, n_q⟩² with q = the Chamfer-nearest target point of p.
// Zero exactly when every edge at p lies in the tangent plane of its target
// normal — i.e. locally planar agreement with the observed surface.
inline Tensor normal_loss(const Tensor& coords, const AdjacencyRef& adj,
                          const std::vector<Vec3>& target_normals,
                          const std::shared_ptr<const std::vector<std::size_t>>& nearest_target) {
  if (coords.shape().size() != 2 || coords.cols() != 3)
    throw std::invalid_argument("normal_loss: coordinates must be Nx3, got " +
                                shape_str(coords.shape()));
  std::size_t n = coords.rows();
  if (adj->size() != n)
    throw std::invalid_argument("normal_loss: adjacency covers " + std::to_string(adj->size()) +
                                " vertices, coordinates " + std::to_string(n));
  if (!nearest_target || nearest_target->size() != n)
    throw std::invalid_argument("normal_loss: nearest-target map missing or wrong size");
  for (std::size_t p = 0; p < n; ++p)
    if ((*nearest_target)[p] >= target_normals.size())
      throw std::invalid_argument("normal_loss: nearest index out of range at vertex " +
                                  std::to_string(p));

  auto normals = std::make_shared<const std::vector<Vec3>>(target_normals);
  double total = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const Vec3& nrm = (*normals)[(*nearest_target)[p]];
    Vec3 vp = coords.row3(p);
    for (int k : (*adj)[p]) {
      Vec3 d = vp - coords.row3(static_cast<std::size_t>(k));
      double ip = dot(d, nrm);
      total += ip * ip;
    }
  }
  return make_op_result({1}, {total}, {coords},
                        [coords, adj, normals, nearest_target, n](detail::TensorNode& self) {
    if (!coords.requires_grad()) return;
    coords.node()->ensure_grad();
    double g = self.grad[0];
    std::vector<double>& grad = coords.node()->grad;
    for (std::size_t p = 0; p < n; ++p) {
      const Vec3& nrm = (*normals)[(*nearest_target)[p]];
      Vec3 vp = coords.row3(p);
      for (int kk : (*adj)[p]) {
        std::size_t k = static_cast<std::size_t>(kk);
        Vec3 d = vp - coords.row3(k);
        double coeff = g * 2.0 * dot(d, nrm);
        grad[p * 3 + 0] += coeff * nrm.x;
        grad[p * 3 + 1] += coeff * nrm.y;
        grad[p * 3 + 2] += coeff * nrm.z;
        grad[k * 3 + 0] -= coeff * nrm.x;
        grad[k * 3 + 1] -= coeff * nrm.y;
        grad[k * 3 + 2] -= coeff * nrm.z;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Laplacian and edge-length losses
// ---------------------------------------------------------------------------

// δ per vertex: coordinate minus the mean of its graph neighbors.
inline Tensor laplacian_delta(const Tensor& coords, const AdjacencyRef& adj) {
  if (coords.rows() != adj->size())
    throw std::invalid_argument("laplacian_delta: adjacency covers " +
                                std::to_string(adj->size()) + " vertices, coordinates " +
                                std::to_string(coords.rows()));
  std::vector<double> inv_degree(adj->size());
  for (std::size_t p = 0; p < adj->size(); ++p) {
    if ((*adj)[p].empty())
      throw std::domain_error("laplacian_delta: vertex " + std::to_string(p) + " is isolated");
    inv_degree[p] = 1.0 / static_cast<double>((*adj)[p].size());
  }
  return sub(coords, scale_rows(neighbor_sum(coords, adj), std::move(inv_degree)));
}

// Σ_p ‖δ'_p − δ_p‖² between the coordinates entering and leaving a block.
inline Tensor laplacian_loss(const Tensor& coords_before, const Tensor& coords_after,
                             const AdjacencyRef& adj) {
  check_same_shape(coords_before, coords_after, "laplacian_loss");
  Tensor diff = sub(laplacian_delta(coords_after, adj), laplacian_delta(coords_before, adj));
  return sum(mul(diff, diff));
}

// Σ_p Σ_{k∈N(p)} ‖p−k‖²: each edge contributes from both endpoints, so this is
// twice the sum over undirected edges (reported as-is; human-readable
// summaries may divide by two).
inline Tensor edge_length_loss(const Tensor& coords, const std::vector<std::pair<int, int>>& edges) {
  if (coords.shape().size() != 2 || coords.cols() != 3)
    throw std::invalid_argument("edge_length_loss: coordinates must be Nx3, got " +
                                shape_str(coords.shape()));
  std::vector<int> first, second;
  first.reserve(edges.size());
  second.reserve(edges.size());
  for (const auto& [a, b] : edges) {
    first.push_back(a);
    second.push_back(b);
  }
  Tensor diff = sub(gather_rows(coords, first), gather_rows(coords, second));
  return scale(sum(mul(diff, diff)), 2.0);
}

// ---------------------------------------------------------------------------
// Total loss
// ---------------------------------------------------------------------------

struct LossReport {
  struct BlockTerms {
    double chamfer = 0.0, normal = 0.0, laplacian = 0.0, edge = 0.0, total = 0.0;
  };
  std::vector<BlockTerms> blocks;
  double chamfer = 0.0, normal = 0.0, laplacian = 0.0, edge = 0.0, total = 0.0;

  nlohmann::json to_json() const {
    nlohmann::json per_block = nlohmann::json::array();
    for (const BlockTerms& b : blocks)
      per_block.push_back({{"chamfer", b.chamfer},
                           {"normal", b.normal},
                           {"laplacian", b.laplacian},
                           {"edge", b.edge},
                           {"total", b.total}});
    return {{"chamfer", chamfer}, {"normal", normal},   {"laplacian", laplacian},
            {"edge", edge},       {"total", total},     {"blocks", per_block}};
  }
};

struct TotalLoss {
  Tensor loss;  // differentiable scalar
  LossReport report;
};

// l_all = l_c + λ_n·l_n + λ_lap·l_lap + λ_e·l_loc, per block, summed across
// blocks with equal weight.
inline TotalLoss total_loss(const CascadeOutput& cascade, const TargetShape& target,
                            const LossWeights& weights) {
  weights.validate();
  target.validate();
  if (cascade.stages.empty()) throw std::invalid_argument("total_loss: cascade has no stages");

  TotalLoss out;
  Tensor acc;
  for (const StageOutput& stage : cascade.stages) {
    AdjacencyRef adj = share_adjacency(*stage.graph);
    ChamferResult chamfer = chamfer_loss(stage.coords, target.points);
    Tensor l_n = normal_loss(stage.coords, adj, target.normals, chamfer.nearest_target);
    Tensor l_lap = laplacian_loss(stage.coords_in, stage.coords, adj);
    Tensor l_e = edge_length_loss(stage.coords, stage.graph->edges);
    Tensor block_total = add(add(chamfer.loss, scale(l_n, weights.normal)),
                             add(scale(l_lap, weights.laplacian), scale(l_e, weights.edge)));
    acc = acc.defined() ? add(acc, block_total) : block_total;

    LossReport::BlockTerms terms;
    terms.chamfer = chamfer.loss.value();
    terms.normal = l_n.value();
    terms.laplacian = l_lap.value();
    terms.edge = l_e.value();
    terms.total = block_total.value();
    out.report.blocks.push_back(terms);
    out.report.chamfer += terms.chamfer;
    out.report.normal += terms.normal;
    out.report.laplacian += terms.laplacian;
    out.report.edge += terms.edge;
  }
  out.loss = acc;
  out.report.total = acc.value();
  return out;
}

}  // namespace meshdeform
