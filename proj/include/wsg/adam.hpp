// SPDX-License-Identifier: Apache-2.0
//
// Adam with bias-corrected moments.
#pragma once

#include <cmath>
#include <map>
#include <string>

#include "wsg/model.hpp"
#include "wsg/tensor.hpp"

namespace wsg {

struct AdamState {
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
    std::size_t step = 0;
};

inline void adam_step(ParamStore& params,
                      const std::map<std::string, Tensor>& grads,
                      AdamState& state, double lr, double beta1 = 0.9,
                      double beta2 = 0.999, double eps = 1e-8) {
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);

    for (auto& [name, grad] : grads) {
        auto pit = params.find(name);
        if (pit == params.end())
            throw WsgError("adam: gradient for unknown parameter '" + name + "'");
        Tensor& theta = pit->second;
        check_same_shape(theta, grad, "adam");
        if (!grad.all_finite())
            throw WsgError("adam: non-finite gradient for '" + name + "'");

        Tensor& m = state.m.try_emplace(name, Tensor(theta.shape)).first->second;
        Tensor& v = state.v.try_emplace(name, Tensor(theta.shape)).first->second;
        for (std::size_t i = 0; i < theta.numel(); ++i) {
            const double g = grad.data[i];
            m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * g;
            v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * g * g;
            const double m_hat = m.data[i] / bc1;
            const double v_hat = v.data[i] / bc2;
            theta.data[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

}  // namespace wsg
