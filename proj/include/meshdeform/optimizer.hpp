// optimizer.hpp — Adam with decoupled weight decay and a stepwise lr schedule.
#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "meshdeform/tensor.hpp"

namespace meshdeform {

// Piecewise-constant learning rate: (start_step, lr) pairs sorted by step.
// The rate for step t is the entry with the largest start_step <= t.
struct LrSchedule {
  std::vector<std::pair<std::size_t, double>> stages;

  static LrSchedule constant(double lr) { return {{{0, lr}}}; }

  double at(std::size_t step) const {
    if (stages.empty() || stages.front().first != 0)
      throw std::invalid_argument("lr schedule must start at step 0");
    double lr = stages.front().second;
    for (const auto& [start, rate] : stages) {
      if (start <= step) lr = rate;
    }
    return lr;
  }
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-5;  // decoupled: p -= lr * wd * p, not folded into m/v
};

class AdamOptimizer {
 public:
  using Options = AdamOptions;

  AdamOptimizer(std::vector<Tensor> params, LrSchedule schedule, Options opts = Options(),
                std::vector<std::string> names = {})
      : params_(std::move(params)), schedule_(std::move(schedule)), opts_(opts),
        names_(std::move(names)) {
    if (!names_.empty() && names_.size() != params_.size())
      throw std::invalid_argument("optimizer got " + std::to_string(names_.size()) +
                                  " names for " + std::to_string(params_.size()) + " parameters");
    for (const Tensor& p : params_) {
      if (!p.requires_grad())
        throw std::invalid_argument("optimizer parameter does not require grad");
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  std::size_t step_count() const { return step_; }
  const std::vector<Tensor>& params() const { return params_; }

  void zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
  }

  // Applies one update from the gradients currently stored on the parameters.
  void step() {
    double lr = schedule_.at(step_);
    ++step_;
    double t = static_cast<double>(step_);
    double bc1 = 1.0 - std::pow(opts_.beta1, t);
    double bc2 = 1.0 - std::pow(opts_.beta2, t);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      std::vector<double>& p = params_[k].mutable_data();
      const std::vector<double>& g = params_[k].grad();
      for (double gv : g)
        if (!std::isfinite(gv))
          throw std::domain_error("non-finite gradient in parameter '" + name(k) + "'");
      std::vector<double>& m = m_[k];
      std::vector<double>& v = v_[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g[i];
        v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g[i] * g[i];
        double m_hat = m[i] / bc1;
        double v_hat = v[i] / bc2;
        p[i] -= lr * (m_hat / (std::sqrt(v_hat) + opts_.epsilon) + opts_.weight_decay * p[i]);
      }
    }
  }

  // Moment access for checkpointing.
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void restore_state(std::size_t step, std::vector<std::vector<double>> m,
                     std::vector<std::vector<double>> v) {
    if (m.size() != params_.size() || v.size() != params_.size())
      throw std::invalid_argument("optimizer state tensor count mismatch");
    for (std::size_t k = 0; k < params_.size(); ++k)
      if (m[k].size() != params_[k].size() || v[k].size() != params_[k].size())
        throw std::invalid_argument("optimizer state size mismatch at slot " + std::to_string(k));
    step_ = step;
    m_ = std::move(m);
    v_ = std::move(v);
  }

 private:
  std::string name(std::size_t k) const {
    return k < names_.size() ? names_[k] : "param" + std::to_string(k);
  }

  std::vector<Tensor> params_;
  LrSchedule schedule_;
  Options opts_;
  std::vector<std::string> names_;
  std::size_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace meshdeform
