// SPDX-License-Identifier: Apache-2.0
//
// Training objectives: soft-target distillation over regions, temperature
// scaled NCE over image-sentence pairs, the max-margin baseline, and the
// staircase-lambda combination. All softmax-style terms go through
// log-sum-exp on the tape.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "wsg/pseudo_labels.hpp"
#include "wsg/tape.hpp"
#include "wsg/tensor.hpp"

namespace wsg {

enum class LossVariant { Margin, Nce, Distill, NceDistill };

inline const char* variant_name(LossVariant v) {
    switch (v) {
        case LossVariant::Margin: return "margin";
        case LossVariant::Nce: return "nce";
        case LossVariant::Distill: return "distill";
        case LossVariant::NceDistill: return "nce_distill";
    }
    return "?";
}

inline LossVariant parse_variant(const std::string& s) {
    if (s == "margin") return LossVariant::Margin;
    if (s == "nce") return LossVariant::Nce;
    if (s == "distill") return LossVariant::Distill;
    if (s == "nce_distill" || s == "nce+distill") return LossVariant::NceDistill;
    throw WsgError("unknown loss variant '" + s + "'");
}

struct LossConfig {
    double tau = 0.5;
    std::size_t lambda_a = 200;
    double lambda_b = 3.0;
    double margin_m = 0.05;
    LossVariant variant = LossVariant::NceDistill;

    void check() const {
        if (!(tau > 0.0)) throw WsgError("loss config: tau must be positive");
        if (lambda_a < 1) throw WsgError("loss config: lambda_a must be >= 1");
        if (lambda_b < 0.0) throw WsgError("loss config: lambda_b must be >= 0");
    }
};

// lambda = min(floor(step / a), b)
inline double lambda_schedule(std::size_t step, std::size_t a, double b) {
    if (a < 1) throw WsgError("lambda-schedule: a must be >= 1");
    return std::min(static_cast<double>(step / a), b);
}

// Sum over masked-valid phrases of the cross entropy between p_hat and the
// softmax of the phrase's score row at temperature tau. Not yet averaged;
// the caller divides by its own valid-phrase count.
struct DistillSum {
    NodeId ce_sum;            // scalar node, 0 when no phrase is valid
    std::size_t valid_count;  // phrases contributing to ce_sum
};

inline DistillSum distill_ce_sum(Tape& tape, NodeId score_matrix,
                                 const PseudoLabelMatrix& p_hat, double tau) {
    const Tensor& s = tape.value(score_matrix);
    check_same_shape(s, p_hat.p_hat, "distill-loss");
    const std::size_t n = s.cols();

    const std::size_t valid = p_hat.valid_count();
    if (valid == 0)
        return {tape.input(Tensor::scalar(0.0)), 0};

    NodeId z = tape.scale(score_matrix, 1.0 / tau);
    NodeId lse = tape.row_logsumexp(z);
    NodeId log_h = tape.sub(z, tape.expand_cols(lse, n));
    // Masked rows of p_hat are all-zero, so they drop out here.
    NodeId weighted = tape.mul_const(log_h, p_hat.p_hat);
    return {tape.scale(tape.sum(weighted), -1.0), valid};
}

struct DistillLoss {
    NodeId value;
    std::size_t valid_count;
    bool no_distill_signal;
};

// Per-call distillation loss, averaged over this matrix's valid phrases.
inline DistillLoss distill_loss(Tape& tape, NodeId score_matrix,
                                const PseudoLabelMatrix& p_hat, double tau) {
    DistillSum ds = distill_ce_sum(tape, score_matrix, p_hat, tau);
    if (ds.valid_count == 0) return {ds.ce_sum, 0, true};
    return {tape.scale(ds.ce_sum, 1.0 / static_cast<double>(ds.valid_count)),
            ds.valid_count, false};
}

// -log( exp(S_pos/tau) / (exp(S_pos/tau) + sum exp(S_neg/tau)) )
inline NodeId nce_loss(Tape& tape, NodeId s_pos,
                       const std::vector<NodeId>& s_negs, double tau) {
    if (s_negs.empty()) throw WsgError("nce-loss: needs at least one negative");
    std::vector<NodeId> all;
    all.reserve(s_negs.size() + 1);
    all.push_back(s_pos);
    for (NodeId n : s_negs) all.push_back(n);
    NodeId scaled = tape.scale(tape.stack_scalars(all), 1.0 / tau);
    return tape.sub(tape.logsumexp(scaled), tape.scale(s_pos, 1.0 / tau));
}

// sum_neg max(0, m - S_pos + S_neg)
inline NodeId margin_loss(Tape& tape, NodeId s_pos,
                          const std::vector<NodeId>& s_negs, double margin) {
    if (s_negs.empty()) throw WsgError("margin-loss: needs at least one negative");
    std::vector<NodeId> hinges;
    hinges.reserve(s_negs.size());
    for (NodeId neg : s_negs)
        hinges.push_back(tape.relu(tape.add_const(tape.sub(neg, s_pos), margin)));
    return tape.sum(tape.stack_scalars(hinges));
}

// Per-sentence ingredients of one batch, already laid down on the tape.
struct BatchGraph {
    std::vector<NodeId> pos_scores;                 // S(X_i, Y_i)
    std::vector<std::vector<NodeId>> neg_scores;    // S(X_i', Y_i) for i' != i
    std::vector<NodeId> pair_score_matrices;        // s(., .) vs own image
    std::vector<const PseudoLabelMatrix*> pseudo;   // null when unused
};

struct LossBreakdown {
    NodeId total;
    double total_value = 0.0;
    double loss_is = 0.0;
    double loss_rp = 0.0;
    double lambda = 0.0;
    bool no_distill_signal = false;
};

inline LossBreakdown combined_loss(Tape& tape, const BatchGraph& batch,
                                   const LossConfig& cfg, std::size_t step) {
    cfg.check();
    const std::size_t B = batch.pos_scores.empty()
                              ? batch.pair_score_matrices.size()
                              : batch.pos_scores.size();
    if (B == 0) throw WsgError("combined-loss: empty batch");

    const bool want_is = cfg.variant != LossVariant::Distill;
    const bool want_rp = cfg.variant == LossVariant::Distill ||
                         cfg.variant == LossVariant::NceDistill;

    LossBreakdown out;
    NodeId l_is;
    if (want_is) {
        std::vector<NodeId> per_sentence;
        per_sentence.reserve(B);
        for (std::size_t i = 0; i < B; ++i) {
            per_sentence.push_back(
                cfg.variant == LossVariant::Margin
                    ? margin_loss(tape, batch.pos_scores[i], batch.neg_scores[i],
                                  cfg.margin_m)
                    : nce_loss(tape, batch.pos_scores[i], batch.neg_scores[i],
                               cfg.tau));
        }
        l_is = tape.scale(tape.sum(tape.stack_scalars(per_sentence)),
                          1.0 / static_cast<double>(B));
        out.loss_is = tape.value(l_is).data[0];
    }

    NodeId l_rp;
    if (want_rp) {
        std::vector<NodeId> sums;
        std::size_t total_valid = 0;
        for (std::size_t i = 0; i < B; ++i) {
            if (!batch.pseudo[i]) continue;
            DistillSum ds = distill_ce_sum(tape, batch.pair_score_matrices[i],
                                           *batch.pseudo[i], cfg.tau);
            sums.push_back(ds.ce_sum);
            total_valid += ds.valid_count;
        }
        if (total_valid == 0) {
            out.no_distill_signal = true;
            if (cfg.variant == LossVariant::Distill)
                throw WsgError("no-distill-signal: no phrase in the batch has "
                               "a detector match");
            l_rp = tape.input(Tensor::scalar(0.0));
        } else {
            l_rp = tape.scale(tape.sum(tape.stack_scalars(sums)),
                              1.0 / static_cast<double>(total_valid));
        }
        out.loss_rp = tape.value(l_rp).data[0];
    }

    switch (cfg.variant) {
        case LossVariant::Margin:
        case LossVariant::Nce:
            out.total = l_is;
            break;
        case LossVariant::Distill:
            out.total = l_rp;
            break;
        case LossVariant::NceDistill: {
            out.lambda = lambda_schedule(step, cfg.lambda_a, cfg.lambda_b);
            out.total = tape.add(l_is, tape.scale(l_rp, out.lambda));
            break;
        }
    }
    out.total_value = tape.value(out.total).data[0];
    return out;
}

}  // namespace wsg
