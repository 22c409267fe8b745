// SPDX-License-Identifier: Apache-2.0
//
// Per-dimension feature standardization, fit on the training split only.
#pragma once

#include <cmath>
#include <vector>

#include "wsg/tensor.hpp"

namespace wsg {

struct FeatureStats {
    Tensor mean;  // length d
    Tensor std;   // length d, floored at 1e-8
    bool any_floored = false;
};

// Population standard deviation; the convention is pinned so checkpoints are
// reproducible bit-for-bit.
inline FeatureStats fit_feature_stats(const std::vector<const Tensor*>& feature_mats) {
    std::size_t d = 0, total = 0;
    for (const Tensor* m : feature_mats) {
        if (m->rank() != 2) throw WsgError("feature-stats: expects matrices");
        if (d == 0) d = m->cols();
        if (m->cols() != d) throw WsgError("feature-stats: inconsistent dims");
        total += m->rows();
    }
    if (total < 2) throw WsgError("feature-stats: needs at least 2 regions");

    FeatureStats fs;
    fs.mean = Tensor({d});
    fs.std = Tensor({d});
    for (const Tensor* m : feature_mats)
        for (std::size_t i = 0; i < m->rows(); ++i)
            for (std::size_t j = 0; j < d; ++j) fs.mean.data[j] += m->at(i, j);
    for (std::size_t j = 0; j < d; ++j) fs.mean.data[j] /= static_cast<double>(total);

    for (const Tensor* m : feature_mats)
        for (std::size_t i = 0; i < m->rows(); ++i)
            for (std::size_t j = 0; j < d; ++j) {
                const double dv = m->at(i, j) - fs.mean.data[j];
                fs.std.data[j] += dv * dv;
            }
    for (std::size_t j = 0; j < d; ++j) {
        double s = std::sqrt(fs.std.data[j] / static_cast<double>(total));
        if (s < 1e-8) {
            s = 1e-8;
            fs.any_floored = true;
        }
        fs.std.data[j] = s;
    }
    return fs;
}

inline void apply_standardization(Tensor& features, const FeatureStats& fs) {
    if (features.rank() != 2 || features.cols() != fs.mean.numel())
        throw WsgError("standardize: dimension mismatch");
    for (std::size_t i = 0; i < features.rows(); ++i)
        for (std::size_t j = 0; j < features.cols(); ++j)
            features.at(i, j) =
                (features.at(i, j) - fs.mean.data[j]) / fs.std.data[j];
}

}  // namespace wsg
