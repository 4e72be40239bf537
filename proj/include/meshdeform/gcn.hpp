// gcn.hpp — graph convolutions on mesh vertices, residual deformation blocks
// with a coordinate branch, and the coarse-to-fine cascade that alternates
// deformation with edge-based graph unpooling.
#pragma once

#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "meshdeform/checkpoint.hpp"
#include "meshdeform/features.hpp"
#include "meshdeform/mesh.hpp"
#include "meshdeform/rng.hpp"
#include "meshdeform/tensor.hpp"

namespace meshdeform {

// Graph structure captured by tensor ops; shared so tapes stay valid however
// long the caller keeps loss tensors around.
using AdjacencyRef = std::shared_ptr<const std::vector<std::vector<int>>>;

inline AdjacencyRef share_adjacency(const Mesh& mesh) {
  return std::make_shared<const std::vector<std::vector<int>>>(mesh.adjacency);
}

// out[p] = Σ_{q ∈ N(p)} f[q] — the unnormalized neighbor aggregation. The
// adjacency is symmetric, so the backward pass is the same aggregation applied
// to the output gradient.
inline Tensor neighbor_sum(const Tensor& features, const AdjacencyRef& adj) {
  if (features.shape().size() != 2 || features.rows() != adj->size())
    throw std::invalid_argument("neighbor_sum: " + std::to_string(adj->size()) +
                                " vertices vs features " + shape_str(features.shape()));
  std::size_t n = features.rows(), d = features.cols();
  std::vector<double> out(n * d, 0.0);
  for (std::size_t p = 0; p < n; ++p)
    for (int q : (*adj)[p])
      for (std::size_t j = 0; j < d; ++j)
        out[p * d + j] += features.at(static_cast<std::size_t>(q), j);
  return make_op_result(features.shape(), std::move(out), {features},
                        [features, adj, n, d](detail::TensorNode& self) {
    if (!features.requires_grad()) return;
    features.node()->ensure_grad();
    for (std::size_t p = 0; p < n; ++p)
      for (int q : (*adj)[p])
        for (std::size_t j = 0; j < d; ++j)
          features.node()->grad[p * d + j] += self.grad[static_cast<std::size_t>(q) * d + j];
  });
}

// One graph convolution: f'_p = w0·f_p + Σ_{q∈N(p)} w1·f_q (+ bias).
struct GraphConvLayer {
  Tensor w0, w1, bias;
  bool has_bias = true;

  GraphConvLayer() = default;

  GraphConvLayer(std::size_t d_in, std::size_t d_out, Rng& rng, bool with_bias = true)
      : w0(Tensor::glorot(d_in, d_out, rng)),
        w1(Tensor::glorot(d_in, d_out, rng)),
        bias(Tensor::zeros({d_out}, true)),
        has_bias(with_bias) {}

  // Zero-initialized variant for the coordinate branch.
  static GraphConvLayer zeros(std::size_t d_in, std::size_t d_out, bool with_bias = true) {
    GraphConvLayer layer;
    layer.w0 = Tensor::zeros({d_in, d_out}, true);
    layer.w1 = Tensor::zeros({d_in, d_out}, true);
    layer.bias = Tensor::zeros({d_out}, true);
    layer.has_bias = with_bias;
    return layer;
  }

  std::size_t d_in() const { return w0.rows(); }
  std::size_t d_out() const { return w0.cols(); }

  std::vector<Tensor> params() const {
    std::vector<Tensor> out{w0, w1};
    if (has_bias) out.push_back(bias);
    return out;
  }

  std::vector<std::string> param_names(const std::string& prefix) const {
    std::vector<std::string> out{prefix + ".w0", prefix + ".w1"};
    if (has_bias) out.push_back(prefix + ".bias");
    return out;
  }

  void save_params(Checkpoint& ck, const std::string& prefix) const {
    ck.add(prefix + ".w0", w0);
    ck.add(prefix + ".w1", w1);
    if (has_bias) ck.add(prefix + ".bias", bias);
  }

  void load_params(const Checkpoint& ck, const std::string& prefix) {
    ck.load_into(prefix + ".w0", w0);
    ck.load_into(prefix + ".w1", w1);
    if (has_bias) ck.load_into(prefix + ".bias", bias);
  }
};

inline Tensor graph_conv(const Tensor& features, const AdjacencyRef& adj,
                         const GraphConvLayer& layer) {
  if (features.cols() != layer.d_in())
    throw std::invalid_argument("graph_conv: features " + shape_str(features.shape()) +
                                " vs layer input dim " + std::to_string(layer.d_in()));
  Tensor out = add(matmul(features, layer.w0), matmul(neighbor_sum(features, adj), layer.w1));
  return layer.has_bias ? add_rows(out, layer.bias) : out;
}

// ---------------------------------------------------------------------------
// Deformation block
// ---------------------------------------------------------------------------

struct ModelConfig {
  std::size_t blocks = 3;
  std::size_t channels = 128;
  std::size_t layers_per_block = 14;  // residual layers; an input projection conv precedes them
  std::size_t residual_stride = 2;    // conv layers per shortcut
  bool use_bias = true;
  bool absolute_coords = false;       // default: coordinate branch predicts an offset
  ExtractorConfig extractor;

  void validate() const {
    if (blocks == 0) throw std::invalid_argument("model needs at least one block");
    if (channels == 0) throw std::invalid_argument("channels must be positive");
    if (residual_stride == 0) throw std::invalid_argument("residual stride must be positive");
    if (layers_per_block % residual_stride != 0)
      throw std::invalid_argument("layers_per_block (" + std::to_string(layers_per_block) +
                                  ") must be a multiple of residual_stride (" +
                                  std::to_string(residual_stride) + ")");
  }

  nlohmann::json to_json() const {
    return {{"blocks", blocks},
            {"channels", channels},
            {"layers_per_block", layers_per_block},
            {"residual_stride", residual_stride},
            {"use_bias", use_bias},
            {"absolute_coords", absolute_coords},
            {"extractor_channels", extractor.stage_channels}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.blocks = j.value("blocks", c.blocks);
    c.channels = j.value("channels", c.channels);
    c.layers_per_block = j.value("layers_per_block", c.layers_per_block);
    c.residual_stride = j.value("residual_stride", c.residual_stride);
    c.use_bias = j.value("use_bias", c.use_bias);
    c.absolute_coords = j.value("absolute_coords", c.absolute_coords);
    if (j.contains("extractor_channels"))
      c.extractor.stage_channels = j.at("extractor_channels").get<std::vector<std::size_t>>();
    c.validate();
    return c;
  }
};

// One cascade stage: an input projection conv lifting the pooled+vertex
// feature concat to `channels`, a stack of residual conv layers (shortcut
// every `residual_stride` convs), and a linear coordinate branch. The branch
// starts at zero, so a fresh model is the identity deformation in offset mode.
struct DeformationBlock {
  GraphConvLayer input_conv;
  std::vector<GraphConvLayer> res_convs;
  GraphConvLayer coord_conv;
  std::size_t residual_stride = 2;
  bool absolute_coords = false;

  DeformationBlock() = default;

  DeformationBlock(std::size_t d_in, const ModelConfig& cfg, Rng& rng)
      : input_conv(d_in, cfg.channels, rng, cfg.use_bias),
        coord_conv(GraphConvLayer::zeros(cfg.channels, 3, cfg.use_bias)),
        residual_stride(cfg.residual_stride),
        absolute_coords(cfg.absolute_coords) {
    res_convs.reserve(cfg.layers_per_block);
    for (std::size_t i = 0; i < cfg.layers_per_block; ++i) {
      // The closing conv of each residual unit starts at zero so every unit is
      // an identity map at initialization. Without this the unnormalized
      // neighbor sums compound across the stack and activations leave the
      // range the optimizer can compensate for.
      bool closes_unit =
          cfg.residual_stride >= 2 && i % cfg.residual_stride == cfg.residual_stride - 1;
      if (closes_unit)
        res_convs.push_back(GraphConvLayer::zeros(cfg.channels, cfg.channels, cfg.use_bias));
      else
        res_convs.emplace_back(cfg.channels, cfg.channels, rng, cfg.use_bias);
    }
  }

  std::vector<Tensor> params() const {
    std::vector<Tensor> out = input_conv.params();
    for (const GraphConvLayer& layer : res_convs)
      for (const Tensor& t : layer.params()) out.push_back(t);
    for (const Tensor& t : coord_conv.params()) out.push_back(t);
    return out;
  }

  std::vector<std::string> param_names(const std::string& prefix) const {
    std::vector<std::string> out = input_conv.param_names(prefix + ".in");
    for (std::size_t i = 0; i < res_convs.size(); ++i)
      for (std::string& n : res_convs[i].param_names(prefix + ".conv" + std::to_string(i)))
        out.push_back(std::move(n));
    for (std::string& n : coord_conv.param_names(prefix + ".coord")) out.push_back(std::move(n));
    return out;
  }

  void save_params(Checkpoint& ck, const std::string& prefix) const {
    input_conv.save_params(ck, prefix + ".in");
    for (std::size_t i = 0; i < res_convs.size(); ++i)
      res_convs[i].save_params(ck, prefix + ".conv" + std::to_string(i));
    coord_conv.save_params(ck, prefix + ".coord");
  }

  void load_params(const Checkpoint& ck, const std::string& prefix) {
    input_conv.load_params(ck, prefix + ".in");
    for (std::size_t i = 0; i < res_convs.size(); ++i)
      res_convs[i].load_params(ck, prefix + ".conv" + std::to_string(i));
    coord_conv.load_params(ck, prefix + ".coord");
  }

  // `pooled_and_features` is the concat of perceptual features with incoming
  // vertex features; `coords_in` the positions the block deforms.
  // Returns (new coordinates, 128-dim output features).
  std::pair<Tensor, Tensor> forward(const Tensor& pooled_and_features, const Tensor& coords_in,
                                    const AdjacencyRef& adj) const {
    Tensor x = relu(graph_conv(pooled_and_features, adj, input_conv));
    for (std::size_t i = 0; i + residual_stride <= res_convs.size(); i += residual_stride) {
      Tensor h = x;
      for (std::size_t k = 0; k < residual_stride; ++k)
        h = relu(graph_conv(h, adj, res_convs[i + k]));
      x = add(x, h);
    }
    Tensor branch = graph_conv(x, adj, coord_conv);
    Tensor coords_out = absolute_coords ? branch : add(branch, coords_in);
    return {coords_out, x};
  }
};

// ---------------------------------------------------------------------------
// Cascade
// ---------------------------------------------------------------------------

// Appends one midpoint row per edge: the tensor-level mirror of unpool_edge.
inline Tensor unpool_features(const Tensor& features, const std::vector<std::pair<int, int>>& edges) {
  std::vector<int> first, second;
  first.reserve(edges.size());
  second.reserve(edges.size());
  for (const auto& [a, b] : edges) {
    first.push_back(a);
    second.push_back(b);
  }
  Tensor mid = scale(add(gather_rows(features, first), gather_rows(features, second)), 0.5);
  return concat_rows(features, mid);
}

struct StageOutput {
  Tensor coords_in;    // positions entering the block (post-unpool)
  Tensor coords;       // positions the block predicts
  Tensor features;     // the block's final vertex features
  const Mesh* graph;   // topology the block ran on
};

struct CascadeOutput {
  std::vector<StageOutput> stages;
  std::size_t projection_clamps = 0;  // depth-floor hits across all poolings

  const StageOutput& final_stage() const { return stages.back(); }
};

// Builds a mesh from a stage's predicted coordinates on its graph topology.
inline Mesh realize_mesh(const StageOutput& stage) {
  return Mesh::create(stage.coords.to_points(), stage.graph->faces);
}

class CascadeModel {
 public:
  CascadeModel(ModelConfig config, Mesh initial_mesh, Rng& rng)
      : config_(std::move(config)), extractor_(config_.extractor, rng) {
    config_.validate();
    topologies_.reserve(config_.blocks);
    topologies_.push_back(std::move(initial_mesh));
    for (std::size_t i = 1; i < config_.blocks; ++i)
      topologies_.push_back(unpool_edge(topologies_[i - 1]));
    std::size_t d_perc = config_.extractor.perceptual_dim();
    blocks_.reserve(config_.blocks);
    for (std::size_t i = 0; i < config_.blocks; ++i) {
      std::size_t d_in = d_perc + (i == 0 ? 3 : config_.channels);
      blocks_.emplace_back(d_in, config_, rng);
    }
  }

  const ModelConfig& config() const { return config_; }
  const Mesh& initial_mesh() const { return topologies_.front(); }
  const Mesh& topology(std::size_t i) const { return topologies_.at(i); }
  FeatureExtractor& extractor() { return extractor_; }
  const FeatureExtractor& extractor() const { return extractor_; }

  std::vector<Tensor> params() const {
    std::vector<Tensor> out = extractor_.params();
    for (const DeformationBlock& b : blocks_)
      for (const Tensor& t : b.params()) out.push_back(t);
    return out;
  }

  std::vector<std::string> param_names() const {
    std::vector<std::string> out = extractor_.param_names();
    for (std::size_t i = 0; i < blocks_.size(); ++i)
      for (std::string& n : blocks_[i].param_names("block" + std::to_string(i)))
        out.push_back(std::move(n));
    return out;
  }

  void save_params(Checkpoint& ck) const {
    extractor_.save_params(ck);
    for (std::size_t i = 0; i < blocks_.size(); ++i)
      blocks_[i].save_params(ck, "block" + std::to_string(i));
  }

  void load_params(const Checkpoint& ck) {
    extractor_.load_params(ck);
    for (std::size_t i = 0; i < blocks_.size(); ++i)
      blocks_[i].load_params(ck, "block" + std::to_string(i));
  }

  // Runs the cascade against a precomputed pyramid. Block 1 sees the initial
  // ellipsoid coordinates as its vertex features; later blocks see the
  // previous block's 128-dim features, both midpoint-interpolated across the
  // unpooling that separates consecutive blocks.
  CascadeOutput forward(const FeaturePyramid& pyramid, const CameraIntrinsics& k) const {
    pyramid.validate();
    std::size_t d_perc = config_.extractor.perceptual_dim();
    if (pyramid.channel_sum() != d_perc)
      throw std::invalid_argument("pyramid channel sum " + std::to_string(pyramid.channel_sum()) +
                                  " does not match configured perceptual dim " +
                                  std::to_string(d_perc));
    CascadeOutput out;
    Tensor coords = Tensor::from_points(topologies_.front().vertices);
    Tensor vertex_feats = coords;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const Mesh& graph = topologies_[i];
      if (i > 0) {
        const std::vector<std::pair<int, int>>& edges = topologies_[i - 1].edges;
        coords = unpool_features(coords, edges);
        vertex_feats = unpool_features(vertex_feats, edges);
      }
      AdjacencyRef adj = share_adjacency(graph);
      Tensor pooled = perceptual_pool(coords, pyramid, k, &out.projection_clamps);
      Tensor block_in = concat_cols(pooled, vertex_feats);
      auto [new_coords, new_feats] = blocks_[i].forward(block_in, coords, adj);
      out.stages.push_back({coords, new_coords, new_feats, &graph});
      coords = new_coords;
      vertex_feats = new_feats;
    }
    return out;
  }

  CascadeOutput forward(const ImageGrid& image, const CameraIntrinsics& k) const {
    return forward(extractor_.forward(image), k);
  }

 private:
  ModelConfig config_;
  FeatureExtractor extractor_;
  std::vector<DeformationBlock> blocks_;
  std::vector<Mesh> topologies_;
};

}  // namespace meshdeform
