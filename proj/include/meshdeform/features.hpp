// features.hpp — the 2D feature pathway: a small strided convolutional
// extractor producing a multi-scale pyramid, differentiable bilinear pooling,
// and the per-vertex perceptual pooling that ties image features to mesh
// vertices via camera projection.
#pragma once

#include <cmath>
#include <cstddef>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "meshdeform/camera.hpp"
#include "meshdeform/checkpoint.hpp"
#include "meshdeform/io.hpp"
#include "meshdeform/rng.hpp"
#include "meshdeform/tensor.hpp"

namespace meshdeform {

// Multi-scale feature maps. Level k is an H_k x W_k x C_k tensor whose pixel
// (row i, col j) sits at image coordinate (j/scale_k, i/scale_k); equivalently
// an image-space location (x, y) lands at level coordinate (x*scale_k,
// y*scale_k). Channel counts across levels sum to the perceptual dimension.
struct FeaturePyramid {
  std::vector<Tensor> levels;   // each [H, W, C]
  std::vector<double> scales;   // level resolution / image resolution

  std::size_t channel_sum() const {
    std::size_t d = 0;
    for (const Tensor& level : levels) d += level.shape().at(2);
    return d;
  }

  void validate() const {
    if (levels.size() != scales.size())
      throw std::invalid_argument("pyramid: " + std::to_string(levels.size()) + " levels vs " +
                                  std::to_string(scales.size()) + " scales");
    if (levels.empty()) throw std::invalid_argument("pyramid has no levels");
    for (std::size_t k = 0; k < levels.size(); ++k) {
      if (levels[k].shape().size() != 3)
        throw std::invalid_argument("pyramid level " + std::to_string(k) + " is not HxWxC: " +
                                    shape_str(levels[k].shape()));
      if (scales[k] <= 0.0)
        throw std::invalid_argument("pyramid scale " + std::to_string(k) + " not positive");
    }
  }
};

// ---------------------------------------------------------------------------
// Bilinear pooling
// ---------------------------------------------------------------------------

// Samples `map` ([H, W, C]) at N continuous (x, y) locations ([N, 2], x =
// column, y = row; grid value (i, j) sits exactly at (x=j, y=i)). Out-of-grid
// locations clamp to the border, where the corresponding location gradient is
// zero (the clamp is flat). Differentiable w.r.t. both map and locations.
inline Tensor bilinear_pool(const Tensor& map, const Tensor& locations) {
  if (map.shape().size() != 3)
    throw std::invalid_argument("bilinear_pool: map must be HxWxC, got " + shape_str(map.shape()));
  if (locations.shape().size() != 2 || locations.cols() != 2)
    throw std::invalid_argument("bilinear_pool: locations must be Nx2, got " +
                                shape_str(locations.shape()));
  std::size_t h = map.shape()[0], w = map.shape()[1], c = map.shape()[2];
  std::size_t n = locations.rows();

  struct Corner {
    std::size_t x0, y0, x1, y1;
    double wx, wy;
    bool x_free, y_free;  // location gradient flows only off the border clamp
  };
  auto corners = std::make_shared<std::vector<Corner>>(n);
  auto resolve = [](double v, std::size_t extent) {
    // Returns (i0, frac, free): cell index, in-cell fraction, clamp status.
    struct R { std::size_t i0; double frac; bool free; };
    if (extent == 1) return R{0, 0.0, false};
    if (v <= 0.0) return R{0, 0.0, v == 0.0};
    double hi = static_cast<double>(extent - 1);
    if (v >= hi) return R{extent - 2, 1.0, v == hi};
    std::size_t i0 = static_cast<std::size_t>(v);
    if (i0 > extent - 2) i0 = extent - 2;
    return R{i0, v - static_cast<double>(i0), true};
  };

  std::vector<double> out(n * c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto rx = resolve(locations.at(i, 0), w);
    auto ry = resolve(locations.at(i, 1), h);
    Corner& cr = (*corners)[i];
    cr = {rx.i0, ry.i0, rx.i0 + 1, ry.i0 + 1, rx.frac, ry.frac, rx.free, ry.free};
    if (w == 1) cr.x1 = 0;
    if (h == 1) cr.y1 = 0;
    for (std::size_t ch = 0; ch < c; ++ch) {
      double m00 = map.at((cr.y0 * w + cr.x0) * c + ch);
      double m01 = map.at((cr.y0 * w + cr.x1) * c + ch);
      double m10 = map.at((cr.y1 * w + cr.x0) * c + ch);
      double m11 = map.at((cr.y1 * w + cr.x1) * c + ch);
      out[i * c + ch] = (1.0 - cr.wy) * ((1.0 - cr.wx) * m00 + cr.wx * m01) +
                        cr.wy * ((1.0 - cr.wx) * m10 + cr.wx * m11);
    }
  }
  return make_op_result({n, c}, std::move(out), {map, locations},
                        [map, locations, corners, w, c, n](detail::TensorNode& self) {
    for (std::size_t i = 0; i < n; ++i) {
      const Corner& cr = (*corners)[i];
      if (map.requires_grad()) {
        map.node()->ensure_grad();
        for (std::size_t ch = 0; ch < c; ++ch) {
          double g = self.grad[i * c + ch];
          map.node()->grad[(cr.y0 * w + cr.x0) * c + ch] += g * (1.0 - cr.wy) * (1.0 - cr.wx);
          map.node()->grad[(cr.y0 * w + cr.x1) * c + ch] += g * (1.0 - cr.wy) * cr.wx;
          map.node()->grad[(cr.y1 * w + cr.x0) * c + ch] += g * cr.wy * (1.0 - cr.wx);
          map.node()->grad[(cr.y1 * w + cr.x1) * c + ch] += g * cr.wy * cr.wx;
        }
      }
      if (locations.requires_grad()) {
        locations.node()->ensure_grad();
        double gx = 0.0, gy = 0.0;
        for (std::size_t ch = 0; ch < c; ++ch) {
          double g = self.grad[i * c + ch];
          double m00 = map.at((cr.y0 * w + cr.x0) * c + ch);
          double m01 = map.at((cr.y0 * w + cr.x1) * c + ch);
          double m10 = map.at((cr.y1 * w + cr.x0) * c + ch);
          double m11 = map.at((cr.y1 * w + cr.x1) * c + ch);
          gx += g * ((1.0 - cr.wy) * (m01 - m00) + cr.wy * (m11 - m10));
          gy += g * ((1.0 - cr.wx) * (m10 - m00) + cr.wx * (m11 - m01));
        }
        if (cr.x_free) locations.node()->grad[i * 2 + 0] += gx;
        if (cr.y_free) locations.node()->grad[i * 2 + 1] += gy;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Perceptual pooling
// ---------------------------------------------------------------------------

// For each vertex: project with the current coordinates, rescale the pixel
// location into each pyramid level, bilinear-pool there, and concatenate the
// per-level features. Output is N x (sum of level channels). Row i depends
// only on vertex i.
inline Tensor perceptual_pool(const Tensor& positions, const FeaturePyramid& pyramid,
                              const CameraIntrinsics& k, std::size_t* clamped = nullptr) {
  pyramid.validate();
  Tensor pixels = project_points(positions, k, clamped);
  std::vector<Tensor> pooled;
  pooled.reserve(pyramid.levels.size());
  for (std::size_t lvl = 0; lvl < pyramid.levels.size(); ++lvl)
    pooled.push_back(bilinear_pool(pyramid.levels[lvl], scale(pixels, pyramid.scales[lvl])));
  return pooled.size() == 1 ? pooled[0] : concat(pooled, 1);
}

// ---------------------------------------------------------------------------
// Convolutional feature extractor
// ---------------------------------------------------------------------------

// 2D convolution on an [H, W, Cin] map with an [kh, kw, Cin, Cout] kernel,
// zero padding `pad`, equal stride both axes. Direct-loop implementation: the
// extractor is a tiny fraction of a training step, so clarity beats BLAS here.
inline Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                     std::size_t stride, std::size_t pad) {
  if (input.shape().size() != 3 || kernel.shape().size() != 4)
    throw std::invalid_argument("conv2d: input " + shape_str(input.shape()) + ", kernel " +
                                shape_str(kernel.shape()));
  std::size_t h = input.shape()[0], w = input.shape()[1], cin = input.shape()[2];
  std::size_t kh = kernel.shape()[0], kw = kernel.shape()[1];
  if (kernel.shape()[2] != cin)
    throw std::invalid_argument("conv2d: kernel expects " + std::to_string(kernel.shape()[2]) +
                                " input channels, map has " + std::to_string(cin));
  std::size_t cout = kernel.shape()[3];
  if (bias.size() != cout)
    throw std::invalid_argument("conv2d: bias " + shape_str(bias.shape()) + " vs " +
                                std::to_string(cout) + " output channels");
  if (h + 2 * pad < kh || w + 2 * pad < kw)
    throw std::invalid_argument("conv2d: kernel larger than padded input");
  std::size_t ho = (h + 2 * pad - kh) / stride + 1;
  std::size_t wo = (w + 2 * pad - kw) / stride + 1;

  std::vector<double> out(ho * wo * cout);
  for (std::size_t oy = 0; oy < ho; ++oy)
    for (std::size_t ox = 0; ox < wo; ++ox)
      for (std::size_t co = 0; co < cout; ++co) {
        double acc = bias.at(co);
        for (std::size_t ky = 0; ky < kh; ++ky) {
          std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                              static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < kw; ++kx) {
            std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            for (std::size_t ci = 0; ci < cin; ++ci)
              acc += input.at((static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) *
                              cin + ci) *
                     kernel.at(((ky * kw + kx) * cin + ci) * cout + co);
          }
        }
        out[(oy * wo + ox) * cout + co] = acc;
      }
  return make_op_result(
      {ho, wo, cout}, std::move(out), {input, kernel, bias},
      [input, kernel, bias, stride, pad, h, w, cin, kh, kw, cout, ho, wo](detail::TensorNode& self) {
        if (input.requires_grad()) input.node()->ensure_grad();
        if (kernel.requires_grad()) kernel.node()->ensure_grad();
        if (bias.requires_grad()) bias.node()->ensure_grad();
        for (std::size_t oy = 0; oy < ho; ++oy)
          for (std::size_t ox = 0; ox < wo; ++ox)
            for (std::size_t co = 0; co < cout; ++co) {
              double g = self.grad[(oy * wo + ox) * cout + co];
              if (g == 0.0) continue;
              if (bias.requires_grad()) bias.node()->grad[co] += g;
              for (std::size_t ky = 0; ky < kh; ++ky) {
                std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                    static_cast<std::ptrdiff_t>(pad);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t kx = 0; kx < kw; ++kx) {
                  std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                      static_cast<std::ptrdiff_t>(pad);
                  if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                  std::size_t in_base =
                      (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin;
                  std::size_t k_base = (ky * kw + kx) * cin;
                  for (std::size_t ci = 0; ci < cin; ++ci) {
                    if (input.requires_grad())
                      input.node()->grad[in_base + ci] +=
                          g * kernel.at((k_base + ci) * cout + co);
                    if (kernel.requires_grad())
                      kernel.node()->grad[(k_base + ci) * cout + co] +=
                          g * input.at(in_base + ci);
                  }
                }
              }
            }
      });
}

struct ExtractorConfig {
  std::vector<std::size_t> stage_channels = {16, 16, 16};  // channel sum = D_perc

  std::size_t perceptual_dim() const {
    std::size_t d = 0;
    for (std::size_t c : stage_channels) d += c;
    return d;
  }
};

// Three-stage strided 3x3 network: stage 1 downsamples twice (stride 4), the
// later stages once each (strides 8 and 16); each stage's post-ReLU map is one
// pyramid level, so scales are (1/4, 1/8, 1/16).
class FeatureExtractor {
 public:
  FeatureExtractor(ExtractorConfig config, Rng& rng) : config_(std::move(config)) {
    if (config_.stage_channels.size() != 3)
      throw std::invalid_argument("extractor expects exactly 3 stages, got " +
                                  std::to_string(config_.stage_channels.size()));
    std::size_t c1 = config_.stage_channels[0], c2 = config_.stage_channels[1],
                c3 = config_.stage_channels[2];
    kernels_.push_back(glorot_kernel(3, 3, 3, c1, rng));
    kernels_.push_back(glorot_kernel(3, 3, c1, c1, rng));
    kernels_.push_back(glorot_kernel(3, 3, c1, c2, rng));
    kernels_.push_back(glorot_kernel(3, 3, c2, c3, rng));
    for (std::size_t k = 0; k < kernels_.size(); ++k) {
      std::size_t cout = kernels_[k].shape()[3];
      biases_.push_back(Tensor::zeros({cout}, true));
    }
  }

  const ExtractorConfig& config() const { return config_; }

  std::vector<Tensor> params() const {
    std::vector<Tensor> out;
    for (std::size_t k = 0; k < kernels_.size(); ++k) {
      out.push_back(kernels_[k]);
      out.push_back(biases_[k]);
    }
    return out;
  }

  std::vector<std::string> param_names() const {
    std::vector<std::string> out;
    for (std::size_t k = 0; k < kernels_.size(); ++k) {
      out.push_back("extractor.conv" + std::to_string(k) + ".weight");
      out.push_back("extractor.conv" + std::to_string(k) + ".bias");
    }
    return out;
  }

  // Named as extractor.conv{k}.{weight,bias} in checkpoints.
  void save_params(Checkpoint& ck) const {
    for (std::size_t k = 0; k < kernels_.size(); ++k) {
      ck.add("extractor.conv" + std::to_string(k) + ".weight", kernels_[k]);
      ck.add("extractor.conv" + std::to_string(k) + ".bias", biases_[k]);
    }
  }

  void load_params(const Checkpoint& ck) {
    for (std::size_t k = 0; k < kernels_.size(); ++k) {
      ck.load_into("extractor.conv" + std::to_string(k) + ".weight", kernels_[k]);
      ck.load_into("extractor.conv" + std::to_string(k) + ".bias", biases_[k]);
    }
  }

  FeaturePyramid forward(const ImageGrid& image) const {
    std::vector<double> data(image.data);
    Tensor x = Tensor::from_data({image.height, image.width, 3}, std::move(data));
    Tensor s1 = relu(conv2d(x, kernels_[0], biases_[0], 2, 1));
    Tensor level1 = relu(conv2d(s1, kernels_[1], biases_[1], 2, 1));
    Tensor level2 = relu(conv2d(level1, kernels_[2], biases_[2], 2, 1));
    Tensor level3 = relu(conv2d(level2, kernels_[3], biases_[3], 2, 1));
    FeaturePyramid pyr;
    pyr.levels = {level1, level2, level3};
    pyr.scales = {1.0 / 4.0, 1.0 / 8.0, 1.0 / 16.0};
    pyr.validate();
    return pyr;
  }

 private:
  static Tensor glorot_kernel(std::size_t kh, std::size_t kw, std::size_t cin, std::size_t cout,
                              Rng& rng) {
    double limit = std::sqrt(6.0 / static_cast<double>(kh * kw * cin + kh * kw * cout));
    std::vector<double> d(kh * kw * cin * cout);
    for (double& v : d) v = rng.uniform(-limit, limit);
    return Tensor::from_data({kh, kw, cin, cout}, std::move(d), true);
  }

  ExtractorConfig config_;
  std::vector<Tensor> kernels_;
  std::vector<Tensor> biases_;
};

// ---------------------------------------------------------------------------
// Pyramid file: JSON header (levels, shapes, scales) + LE float64 payload
// ---------------------------------------------------------------------------

namespace detail {
inline constexpr char kPyramidMagic[8] = {'M', 'D', 'P', 'Y', 'R', 'A', '1', '\n'};
}

inline void write_pyramid(const FeaturePyramid& pyr, const std::string& path) {
  pyr.validate();
  nlohmann::json header;
  header["levels"] = pyr.levels.size();
  header["shapes"] = nlohmann::json::array();
  for (const Tensor& level : pyr.levels) header["shapes"].push_back(level.shape());
  header["scales"] = pyr.scales;
  std::string text = header.dump();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open pyramid for writing: " + path);
  os.write(detail::kPyramidMagic, 8);
  detail::write_u64_le(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Tensor& level : pyr.levels)
    detail::write_f64_le(os, level.data().data(), level.size());
  if (!os) throw std::runtime_error("write failure on pyramid: " + path);
}

inline FeaturePyramid read_pyramid(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open pyramid: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, detail::kPyramidMagic, 8) != 0)
    throw std::runtime_error("not a pyramid file: " + path);
  std::uint64_t len = detail::read_u64_le(is);
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw std::runtime_error("truncated pyramid header: " + path);
  nlohmann::json header = nlohmann::json::parse(text);
  FeaturePyramid pyr;
  pyr.scales = header.at("scales").get<std::vector<double>>();
  for (const auto& shape_json : header.at("shapes")) {
    Shape shape = shape_json.get<Shape>();
    std::vector<double> data(shape_numel(shape));
    detail::read_f64_le(is, data.data(), data.size());
    if (!is) throw std::runtime_error("truncated pyramid payload: " + path);
    pyr.levels.push_back(Tensor::from_data(std::move(shape), std::move(data)));
  }
  pyr.validate();
  return pyr;
}

}  // namespace meshdeform
