#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "unetgan/tensor.hpp"

namespace unetgan {

// Bias-corrected Adam. Moments are kept per parameter in registration order;
// the caller zeroes gradients after each apply.
template <class T>
struct AdamState {
  T lr = T(0.0002);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  std::uint64_t t = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  void init(const std::vector<Tensor<T>>& params) {
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(p.size(), T(0));
      v.emplace_back(p.size(), T(0));
    }
    t = 0;
  }

  void step(std::vector<Tensor<T>>& params) {
    if (m.size() != params.size())
      throw ConfigError("adam: state tracks " + std::to_string(m.size()) +
                        " parameters, got " + std::to_string(params.size()));
    ++t;
    const T bc1 = T(1) - std::pow(beta1, T(t));
    const T bc2 = T(1) - std::pow(beta2, T(t));
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto& param = params[p];
      if (!param.has_grad())
        throw DataError("adam: parameter " + std::to_string(p) + " has no gradient");
      if (m[p].size() != param.size())
        throw ShapeError("adam: moment size mismatch for parameter " + std::to_string(p));
      auto& data = param.data();
      const auto& g = param.grad();
      auto& mp = m[p];
      auto& vp = v[p];
      for (std::size_t i = 0; i < data.size(); ++i) {
        mp[i] = beta1 * mp[i] + (T(1) - beta1) * g[i];
        vp[i] = beta2 * vp[i] + (T(1) - beta2) * g[i] * g[i];
        const T mhat = mp[i] / bc1;
        const T vhat = vp[i] / bc2;
        data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }
};

}  // namespace unetgan
