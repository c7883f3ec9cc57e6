#pragma once

#include <cmath>
#include <vector>

#include "mixgan/nn.hpp"

namespace mixgan {

struct AdamHyper {
  real_t eta = 1e-3;
  // beta1 = 0.01 is an unusual choice (0.0 or 0.5 are the common GAN
  // settings) but it is this lab's documented default; override in config.
  real_t beta1 = 0.01;
  real_t beta2 = 0.999;
  real_t eps = 1e-8;

  void validate() const {
    check_config(eta > 0, "learning rate must be positive");
    check_config(beta1 >= 0 && beta1 < 1, "beta1 must lie in [0, 1)");
    check_config(beta2 >= 0 && beta2 < 1, "beta2 must lie in [0, 1)");
    check_config(eps > 0, "adam eps must be positive");
  }
};

/// Single-tensor bias-corrected Adam update, in place on value/m/v.
inline void adam_update(Tensor& value, const Tensor& grad, Tensor& m, Tensor& v, std::int64_t t,
                        const AdamHyper& h) {
  check_shape(value.shape() == grad.shape() && value.shape() == m.shape() &&
                  value.shape() == v.shape(),
              "adam_update: mismatched shapes");
  if (!grad.all_finite()) throw NumericError("adam_update: non-finite gradient");
  const real_t bc1 = 1.0 - std::pow(h.beta1, static_cast<real_t>(t));
  const real_t bc2 = 1.0 - std::pow(h.beta2, static_cast<real_t>(t));
  for (std::int64_t i = 0; i < value.numel(); ++i) {
    m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * grad[i];
    v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * grad[i] * grad[i];
    const real_t m_hat = m[i] / bc1;
    const real_t v_hat = v[i] / bc2;
    value[i] -= h.eta * m_hat / (std::sqrt(v_hat) + h.eps);
  }
}

/// Adam over a parameter list. Moment slots align with registration order.
struct Adam {
  AdamHyper hyper;
  std::vector<Tensor> m, v;
  std::int64_t t = 0;

  void init(const std::vector<ParamRef>& params, const AdamHyper& h) {
    hyper = h;
    hyper.validate();
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.push_back(Tensor::zeros(p.var->shape()));
      v.push_back(Tensor::zeros(p.var->shape()));
    }
    t = 0;
  }

  void step(const std::vector<ParamRef>& params, const std::vector<Var>& grads) {
    check(params.size() == m.size() && grads.size() == m.size(),
          "Adam::step: parameter/gradient count mismatch");
    ++t;
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor value = params[i].var->val().clone();
      adam_update(value, grads[i].val(), m[i], v[i], t, hyper);
      params[i].var->set_value(std::move(value));
    }
  }
};

}  // namespace mixgan
