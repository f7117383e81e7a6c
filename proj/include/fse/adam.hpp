#pragma once

#include <cmath>

#include "fse/param_set.hpp"

namespace fse {

// Adam with the usual bias correction. beta/epsilon defaults follow common
// practice; learning rate comes from the caller.
template <typename T>
class Adam {
 public:
  explicit Adam(const ParamSet<T>& params, double lr = 1e-3, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.assign(static_cast<size_t>(params.total_size()), 0.0);
    v_.assign(static_cast<size_t>(params.total_size()), 0.0);
  }

  double learning_rate() const { return lr_; }

  void step(ParamSet<T>& params, const ParamSet<T>& grads) {
    require(grads.total_size() == static_cast<int64_t>(m_.size()),
            "adam: gradient size ", grads.total_size(), " != state size ", m_.size());
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    size_t off = 0;
    for (size_t b = 0; b < params.count(); ++b) {
      Tensor<T>& p = params.tensor(b);
      const Tensor<T>& g = grads.tensor(b);
      require(p.same_shape(g), "adam: grad shape mismatch for '", params.name(b), "'");
      for (int64_t i = 0; i < p.size(); ++i, ++off) {
        const double gi = static_cast<double>(g[i]);
        m_[off] = beta1_ * m_[off] + (1.0 - beta1_) * gi;
        v_[off] = beta2_ * v_[off] + (1.0 - beta2_) * gi * gi;
        const double mhat = m_[off] / bc1;
        const double vhat = v_[off] / bc2;
        p[i] -= static_cast<T>(lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace fse
