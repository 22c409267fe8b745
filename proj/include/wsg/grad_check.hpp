// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference verification of tape gradients.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "wsg/tape.hpp"
#include "wsg/tensor.hpp"

namespace wsg {

// Builds a scalar graph from leaf nodes already registered on the tape.
using ScalarBuilder =
    std::function<NodeId(Tape&, const std::vector<NodeId>&)>;

// Compares backprop against (f(x+eps) - f(x-eps)) / (2 eps) per coordinate.
// Returns the max relative error with denominator max(|analytic|, |numeric|, 1e-8).
inline double grad_check(const ScalarBuilder& builder,
                         const std::vector<Tensor>& inputs, double eps) {
    if (!(eps > 0.0 && eps <= 1e-3))
        throw WsgError("grad-check: eps must lie in (0, 1e-3]");

    auto evaluate = [&](const std::vector<Tensor>& xs, Tape& tape,
                        std::vector<NodeId>& leaves) -> NodeId {
        leaves.clear();
        for (const Tensor& x : xs) leaves.push_back(tape.input(x));
        NodeId out = builder(tape, leaves);
        if (!tape.value(out).is_scalar())
            throw WsgError("grad-check: builder produced a non-scalar output");
        return out;
    };

    Tape tape;
    std::vector<NodeId> leaves;
    NodeId out = evaluate(inputs, tape, leaves);
    GradMap grads = tape.backprop(out);

    double max_rel = 0.0;
    std::vector<Tensor> probe = inputs;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        for (std::size_t i = 0; i < inputs[t].numel(); ++i) {
            const double orig = probe[t].data[i];

            probe[t].data[i] = orig + eps;
            Tape tp;
            std::vector<NodeId> lp;
            const double fp = tp.value(evaluate(probe, tp, lp)).data[0];

            probe[t].data[i] = orig - eps;
            Tape tm;
            std::vector<NodeId> lm;
            const double fm = tm.value(evaluate(probe, tm, lm)).data[0];

            probe[t].data[i] = orig;

            const double numeric = (fp - fm) / (2.0 * eps);
            const double analytic =
                grads.has(leaves[t]) ? grads.at(leaves[t]).data[i] : 0.0;
            const double denom = std::max(
                {std::fabs(analytic), std::fabs(numeric), 1e-8});
            max_rel = std::max(max_rel, std::fabs(analytic - numeric) / denom);
        }
    }
    return max_rel;
}

}  // namespace wsg
