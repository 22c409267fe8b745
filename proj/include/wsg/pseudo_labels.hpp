// SPDX-License-Identifier: Apache-2.0
//
// Soft pseudo-label construction from detector posteriors and phrase-class
// matches: p_hat over an image's regions, per phrase, normalized within the
// image. Unmatched phrases are masked out.
#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "wsg/dataset.hpp"
#include "wsg/taxonomy.hpp"
#include "wsg/tensor.hpp"

namespace wsg {

struct PseudoLabelMatrix {
    Tensor p_hat;             // m x n; masked-out rows are all-zero
    std::vector<bool> valid;  // per phrase

    std::size_t valid_count() const {
        std::size_t c = 0;
        for (bool v : valid) c += v ? 1 : 0;
        return c;
    }
};

// p_hat[k][l] proportional to sum_z p(y_k, z) p(z | x_l) p(x_l). With the
// binary match design the sum collapses to the matched class's posterior
// column. prior_px defaults to uniform and cancels in the quotient.
inline PseudoLabelMatrix pseudo_labels(
    const DetectionPosterior& det,
    const std::vector<ClassPhraseMatch>& matches, const Taxonomy& tax,
    const std::vector<double>& prior_px = {}) {
    det.check(1e-6);
    const std::size_t n = det.probs.rows();
    const std::size_t m = matches.size();

    std::vector<double> prior = prior_px;
    if (prior.empty()) prior.assign(n, 1.0);
    if (prior.size() != n)
        throw WsgError("pseudo-labels: prior length does not match region count");
    for (double p : prior)
        if (p < 0.0) throw WsgError("pseudo-labels: negative region prior");

    PseudoLabelMatrix out;
    out.p_hat = Tensor({m, n});
    out.valid.assign(m, false);

    for (std::size_t k = 0; k < m; ++k) {
        if (!matches[k].matched_class) continue;
        auto it = std::find(tax.classes.begin(), tax.classes.end(),
                            *matches[k].matched_class);
        if (it == tax.classes.end()) continue;
        const std::size_t z = static_cast<std::size_t>(it - tax.classes.begin());
        if (z >= det.probs.cols())
            throw WsgError("pseudo-labels: class index exceeds posterior width");

        double total = 0.0;
        for (std::size_t l = 0; l < n; ++l) {
            const double u = matches[k].probability * det.probs.at(l, z) * prior[l];
            out.p_hat.at(k, l) = u;
            total += u;
        }
        if (total > 0.0) {
            for (std::size_t l = 0; l < n; ++l) out.p_hat.at(k, l) /= total;
            out.valid[k] = true;
        } else {
            for (std::size_t l = 0; l < n; ++l) out.p_hat.at(k, l) = 0.0;
        }
    }
    return out;
}

inline PseudoLabelMatrix pseudo_labels_for_sentence(
    const DetectionPosterior& det,
    const std::vector<std::vector<std::string>>& phrase_tokens,
    const Taxonomy& tax) {
    std::vector<ClassPhraseMatch> matches;
    matches.reserve(phrase_tokens.size());
    for (const auto& toks : phrase_tokens)
        matches.push_back(match_phrase_class(toks, tax));
    return pseudo_labels(det, matches, tax);
}

}  // namespace wsg
