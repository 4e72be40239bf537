// tensor.hpp — dense double tensors with reverse-mode differentiation.
//
// Design notes:
// - Define-by-run tape: every op returns a fresh node that records its parents
//   and a closure accumulating gradients into them. backward() walks the graph
//   once in reverse topological order. Only subgraphs reachable from a tensor
//   that requires grad keep parent references, so constant computations are
//   freed as they go out of scope.
// - Row-major storage. Shapes are 1-D (vectors), 2-D (matrices) and 3-D
//   (H x W x C feature maps). Matrix products go through BLAS; everything else
//   is plain loops. No broadcasting beyond the row-vector bias add.
// - Gradients accumulate; callers zero leaf grads between optimizer steps.
#pragma once

#include <cblas.h>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

extern "C" void openblas_set_num_threads(int);

#include "meshdeform/geometry.hpp"
#include "meshdeform/rng.hpp"

namespace meshdeform {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // same size as data once backward touches it
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  std::size_t size() const { return data.size(); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return from_data(std::move(shape), {}, requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    std::size_t n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<double>(n, value), requires_grad);
  }

  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false) {
    auto node = std::make_shared<detail::TensorNode>();
    std::size_t n = shape_numel(shape);
    if (data.empty()) data.assign(n, 0.0);
    if (data.size() != n)
      throw std::invalid_argument("tensor data size " + std::to_string(data.size()) +
                                  " does not match shape " + shape_str(shape));
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return from_data({1}, {value}, requires_grad);
  }

  static Tensor from_points(const std::vector<Vec3>& pts, bool requires_grad = false) {
    std::vector<double> d;
    d.reserve(pts.size() * 3);
    for (const Vec3& p : pts) {
      d.push_back(p.x);
      d.push_back(p.y);
      d.push_back(p.z);
    }
    return from_data({pts.size(), 3}, std::move(d), requires_grad);
  }

  // Glorot-uniform initialization for a fan_in x fan_out parameter matrix.
  static Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> d(fan_in * fan_out);
    for (double& v : d) v = rng.uniform(-limit, limit);
    return from_data({fan_in, fan_out}, std::move(d), true);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->data.size(); }
  std::size_t rows() const { return node_->shape.at(0); }
  std::size_t cols() const { return node_->shape.at(1); }
  bool requires_grad() const { return node_->requires_grad; }

  const std::vector<double>& data() const { return node_->data; }
  // In-place access for optimizer updates on leaf parameters.
  std::vector<double>& mutable_data() { return node_->data; }
  const std::vector<double>& grad() const {
    node_->ensure_grad();
    return node_->grad;
  }

  double value() const {
    if (size() != 1) throw std::invalid_argument("value() on non-scalar tensor " + shape_str(shape()));
    return node_->data[0];
  }

  double at(std::size_t i) const { return node_->data.at(i); }
  double at(std::size_t r, std::size_t c) const { return node_->data.at(r * cols() + c); }

  Vec3 row3(std::size_t r) const {
    return {node_->data[r * 3], node_->data[r * 3 + 1], node_->data[r * 3 + 2]};
  }

  std::vector<Vec3> to_points() const {
    if (shape().size() != 2 || cols() != 3)
      throw std::invalid_argument("to_points() requires an Nx3 tensor, got " + shape_str(shape()));
    std::vector<Vec3> out(rows());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = row3(i);
    return out;
  }

  void zero_grad() {
    node_->grad.assign(node_->data.size(), 0.0);
  }

  detail::TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<detail::TensorNode>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::TensorNode> node_;

  friend Tensor make_op_result(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                               std::function<void(detail::TensorNode&)> backward_fn);
};

// Registers an op result on the tape. The backward closure is dropped when no
// parent requires grad, which prunes constant subgraphs from the tape.
inline Tensor make_op_result(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                             std::function<void(detail::TensorNode&)> backward_fn) {
  Tensor out = Tensor::from_data(std::move(shape), std::move(data), false);
  bool needs = false;
  for (const Tensor& p : parents) needs = needs || p.requires_grad();
  if (needs) {
    out.node()->requires_grad = true;
    out.node()->parents.reserve(parents.size());
    for (const Tensor& p : parents) out.node()->parents.push_back(p.node_ptr());
    out.node()->backward_fn = std::move(backward_fn);
  }
  return out;
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
}

// ---------------------------------------------------------------------------
// Elementwise and scalar ops
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_op_result(a.shape(), std::move(out), {a, b}, [a, b](detail::TensorNode& self) {
    if (a.requires_grad()) {
      a.node()->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) a.node()->grad[i] += self.grad[i];
    }
    if (b.requires_grad()) {
      b.node()->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) b.node()->grad[i] += self.grad[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_op_result(a.shape(), std::move(out), {a, b}, [a, b](detail::TensorNode& self) {
    if (a.requires_grad()) {
      a.node()->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) a.node()->grad[i] += self.grad[i];
    }
    if (b.requires_grad()) {
      b.node()->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) b.node()->grad[i] -= self.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_op_result(a.shape(), std::move(out), {a, b}, [a, b](detail::TensorNode& self) {
    if (a.requires_grad()) {
      a.node()->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        a.node()->grad[i] += self.grad[i] * b.data()[i];
    }
    if (b.requires_grad()) {
      b.node()->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        b.node()->grad[i] += self.grad[i] * a.data()[i];
    }
  });
}

inline Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
  return make_op_result(a.shape(), std::move(out), {a}, [a, s](detail::TensorNode& self) {
    if (!a.requires_grad()) return;
    a.node()->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) a.node()->grad[i] += self.grad[i] * s;
  });
}

inline Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + s;
  return make_op_result(a.shape(), std::move(out), {a}, [a](detail::TensorNode& self) {
    if (!a.requires_grad()) return;
    a.node()->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) a.node()->grad[i] += self.grad[i];
  });
}

inline Tensor relu(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
  return make_op_result(a.shape(), std::move(out), {a}, [a](detail::TensorNode& self) {
    if (!a.requires_grad()) return;
    a.node()->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (a.data()[i] > 0.0) a.node()->grad[i] += self.grad[i];
  });
}

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_op_result({1}, {s}, {a}, [a](detail::TensorNode& self) {
    if (!a.requires_grad()) return;
    a.node()->ensure_grad();
    double g = self.grad[0];
    for (std::size_t i = 0; i < a.size(); ++i) a.node()->grad[i] += g;
  });
}

inline Tensor mean(const Tensor& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

// Sum along columns within each row: (m x n) -> (m).
inline Tensor row_sum(const Tensor& a) {
  if (a.shape().size() != 2)
    throw std::invalid_argument("row_sum expects a matrix, got " + shape_str(a.shape()));
  std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += a.data()[i * n + j];
  return make_op_result({m}, std::move(out), {a}, [a, m, n](detail::TensorNode& self) {
    if (!a.requires_grad()) return;
    a.node()->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) a.node()->grad[i * n + j] += self.grad[i];
  });
}

// Scale row i by the constant weights[i]: used for degree normalization.
inline Tensor scale_rows(const Tensor& a, std::vector<double> weights) {
  if (a.shape().size() != 2 || a.rows() != weights.size())
    throw std::invalid_argument("scale_rows: weight count " + std::to_string(weights.size()) +
                                " does not match " + shape_str(a.shape()));
  std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a.data()[i * n + j] * weights[i];
  auto w = std::make_shared<std::vector<double>>(std::move(weights));
  return make_op_result(a.shape(), std::move(out), {a}, [a, w, m, n](detail::TensorNode& self) {
    if (!a.requires_grad()) return;
    a.node()->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) a.node()->grad[i * n + j] += self.grad[i * n + j] * (*w)[i];
  });
}

// ---------------------------------------------------------------------------
// Matrix ops
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.rows())
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  // Keep BLAS serial: results stay reproducible across machines with
  // different core counts, and the evaluation workers (which parallelize
  // across examples) do not oversubscribe.
  static std::once_flag blas_once;
  std::call_once(blas_once, []() { openblas_set_num_threads(1); });
  std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
              static_cast<int>(k), 1.0, a.data().data(), static_cast<int>(k), b.data().data(),
              static_cast<int>(n), 0.0, out.data(), static_cast<int>(n));
  return make_op_result({m, n}, std::move(out), {a, b}, [a, b, m, k, n](detail::TensorNode& self) {
    if (a.requires_grad()) {
      a.node()->ensure_grad();
      // dA += G * B^T
      cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(m),
                  static_cast<int>(k), static_cast<int>(n), 1.0, self.grad.data(),
                  static_cast<int>(n), b.data().data(), static_cast<int>(n), 1.0,
                  a.node()->grad.data(), static_cast<int>(k));
    }
    if (b.requires_grad()) {
      b.node()->ensure_grad();
      // dB += A^T * G
      cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(k),
                  static_cast<int>(n), static_cast<int>(m), 1.0, a.data().data(),
                  static_cast<int>(k), self.grad.data(), static_cast<int>(n), 1.0,
                  b.node()->grad.data(), static_cast<int>(n));
    }
  });
}

// Broadcast-add a length-n bias vector to every row of an (m x n) matrix.
inline Tensor add_rows(const Tensor& a, const Tensor& bias) {
  if (a.shape().size() != 2 || bias.size() != a.cols())
    throw std::invalid_argument("add_rows: bias " + shape_str(bias.shape()) +
                                " does not match matrix " + shape_str(a.shape()));
  std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a.data()[i * n + j] + bias.data()[j];
  return make_op_result(a.shape(), std::move(out), {a, bias}, [a, bias, m, n](detail::TensorNode& self) {
    if (a.requires_grad()) {
      a.node()->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) a.node()->grad[i] += self.grad[i];
    }
    if (bias.requires_grad()) {
      bias.node()->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) bias.node()->grad[j] += self.grad[i * n + j];
    }
  });
}

// ---------------------------------------------------------------------------
// Indexing and structural ops
// ---------------------------------------------------------------------------

inline Tensor gather_rows(const Tensor& a, std::vector<int> indices) {
  if (a.shape().size() != 2)
    throw std::invalid_argument("gather_rows expects a matrix, got " + shape_str(a.shape()));
  std::size_t m = a.rows(), n = a.cols();
  for (int idx : indices)
    if (idx < 0 || static_cast<std::size_t>(idx) >= m)
      throw std::invalid_argument("gather_rows: index " + std::to_string(idx) +
                                  " out of range for " + shape_str(a.shape()));
  std::size_t r = indices.size();
  std::vector<double> out(r * n);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out[i * n + j] = a.data()[static_cast<std::size_t>(indices[i]) * n + j];
  auto idx = std::make_shared<std::vector<int>>(std::move(indices));
  return make_op_result({r, n}, std::move(out), {a}, [a, idx, n](detail::TensorNode& self) {
    if (!a.requires_grad()) return;
    a.node()->ensure_grad();
    for (std::size_t i = 0; i < idx->size(); ++i)
      for (std::size_t j = 0; j < n; ++j)
        a.node()->grad[static_cast<std::size_t>((*idx)[i]) * n + j] += self.grad[i * n + j];
  });
}

// out[j] = sum of rows i of `a` with indices[i] == j; `a` is (r x n), out is
// (num_rows x n). Adjoint of gather_rows.
inline Tensor scatter_add_rows(const Tensor& a, std::vector<int> indices, std::size_t num_rows) {
  if (a.shape().size() != 2 || a.rows() != indices.size())
    throw std::invalid_argument("scatter_add_rows: " + std::to_string(indices.size()) +
                                " indices vs matrix " + shape_str(a.shape()));
  std::size_t n = a.cols(), r = a.rows();
  for (int idx : indices)
    if (idx < 0 || static_cast<std::size_t>(idx) >= num_rows)
      throw std::invalid_argument("scatter_add_rows: index " + std::to_string(idx) +
                                  " out of range for " + std::to_string(num_rows) + " rows");
  std::vector<double> out(num_rows * n, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out[static_cast<std::size_t>(indices[i]) * n + j] += a.data()[i * n + j];
  auto idx = std::make_shared<std::vector<int>>(std::move(indices));
  return make_op_result({num_rows, n}, std::move(out), {a}, [a, idx, n](detail::TensorNode& self) {
    if (!a.requires_grad()) return;
    a.node()->ensure_grad();
    for (std::size_t i = 0; i < idx->size(); ++i)
      for (std::size_t j = 0; j < n; ++j)
        a.node()->grad[i * n + j] += self.grad[static_cast<std::size_t>((*idx)[i]) * n + j];
  });
}

// Concatenate matrices along axis 0 (stack rows) or axis 1 (widen columns).
inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  if (axis != 0 && axis != 1) throw std::invalid_argument("concat: axis must be 0 or 1");
  for (const Tensor& p : parts)
    if (p.shape().size() != 2)
      throw std::invalid_argument("concat expects matrices, got " + shape_str(p.shape()));
  std::size_t rows = parts[0].rows(), cols = parts[0].cols();
  if (axis == 0) {
    std::size_t total = 0;
    for (const Tensor& p : parts) {
      if (p.cols() != cols)
        throw std::invalid_argument("concat axis 0: column mismatch " + shape_str(parts[0].shape()) +
                                    " vs " + shape_str(p.shape()));
      total += p.rows();
    }
    std::vector<double> out;
    out.reserve(total * cols);
    for (const Tensor& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    return make_op_result({total, cols}, std::move(out), parts, [parts, cols](detail::TensorNode& self) {
      std::size_t offset = 0;
      for (const Tensor& p : parts) {
        std::size_t count = p.rows() * cols;
        if (p.requires_grad()) {
          p.node()->ensure_grad();
          for (std::size_t i = 0; i < count; ++i) p.node()->grad[i] += self.grad[offset + i];
        }
        offset += count;
      }
    });
  }
  std::size_t total_cols = 0;
  for (const Tensor& p : parts) {
    if (p.rows() != rows)
      throw std::invalid_argument("concat axis 1: row mismatch " + shape_str(parts[0].shape()) +
                                  " vs " + shape_str(p.shape()));
    total_cols += p.cols();
  }
  std::vector<double> out(rows * total_cols);
  std::size_t col_off = 0;
  for (const Tensor& p : parts) {
    std::size_t pc = p.cols();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < pc; ++j) out[i * total_cols + col_off + j] = p.data()[i * pc + j];
    col_off += pc;
  }
  return make_op_result({rows, total_cols}, std::move(out), parts,
                        [parts, rows, total_cols](detail::TensorNode& self) {
    std::size_t off = 0;
    for (const Tensor& p : parts) {
      std::size_t pc = p.cols();
      if (p.requires_grad()) {
        p.node()->ensure_grad();
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < pc; ++j)
            p.node()->grad[i * pc + j] += self.grad[i * total_cols + off + j];
      }
      off += pc;
    }
  });
}

inline Tensor concat_cols(const Tensor& a, const Tensor& b) { return concat({a, b}, 1); }
inline Tensor concat_rows(const Tensor& a, const Tensor& b) { return concat({a, b}, 0); }

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

// Populates d(loss)/d(leaf) for every reachable tensor that requires grad.
// Gradients accumulate into existing buffers; run zero_grad on leaves between
// optimization steps. Deterministic: traversal order is a pure function of
// the tape structure.
inline void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw std::invalid_argument("backward: loss must be a defined scalar tensor");

  // Iterative DFS post-order over parents.
  std::vector<detail::TensorNode*> order;
  std::unordered_set<detail::TensorNode*> visited;
  struct Frame {
    detail::TensorNode* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.node(), 0});
  visited.insert(loss.node());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      detail::TensorNode* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  for (detail::TensorNode* n : order) n->ensure_grad();
  loss.node()->grad[0] += 1.0;

  // order is post-order (ancestors first, loss last); walk it backwards so
  // every node's grad is complete before its backward_fn runs.
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorNode* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

}  // namespace meshdeform
