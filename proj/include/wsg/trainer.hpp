// SPDX-License-Identifier: Apache-2.0
//
// Training loop: vocabulary assignment, feature standardization, in-batch
// negative sampling, tape construction per step, and Adam updates. Fully
// deterministic given (dataset, config, seed).
#pragma once

#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "wsg/adam.hpp"
#include "wsg/dataset.hpp"
#include "wsg/losses.hpp"
#include "wsg/model.hpp"
#include "wsg/pseudo_labels.hpp"
#include "wsg/rng.hpp"
#include "wsg/stats.hpp"
#include "wsg/tape.hpp"
#include "wsg/taxonomy.hpp"

namespace wsg {

struct TrainConfig {
    double learning_rate = 1e-4;
    std::size_t batch_size = 32;
    std::size_t epochs = 5;
    std::uint64_t seed = 1;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t hidden = 512;
    std::size_t embed_dim = 300;
    std::size_t out_dim = 512;
    LossConfig loss;

    void check() const {
        if (batch_size < 2)
            throw WsgError("train config: batch_size must be >= 2 (need negatives)");
        if (!(learning_rate > 0.0))
            throw WsgError("train config: learning_rate must be positive");
        loss.check();
    }
};

// ---------------------------------------------------------------------------
// Vocabulary: all tokens of the training split, sorted, ids starting at 1.
// Id 0 is reserved for out-of-vocabulary tokens. Rebuilding from the same
// dataset always yields the same mapping, so checkpoints need not carry it.

using Vocab = std::map<std::string, std::size_t>;

inline Vocab build_vocab(const GroundingDataset& ds) {
    std::set<std::string> tokens;
    for (std::size_t j : ds.sentence_ids_for_split(Split::Train))
        for (const auto& toks : ds.sentences[j].phrases.token_strings)
            for (const auto& t : toks) tokens.insert(lower_ascii(t));
    Vocab v;
    std::size_t next = 1;
    for (const auto& t : tokens) v[t] = next++;
    return v;
}

inline void apply_vocab(GroundingDataset& ds, const Vocab& vocab) {
    for (auto& sent : ds.sentences) {
        sent.phrases.token_ids.clear();
        for (const auto& toks : sent.phrases.token_strings) {
            std::vector<std::size_t> ids;
            ids.reserve(toks.size());
            for (const auto& t : toks) {
                auto it = vocab.find(lower_ascii(t));
                ids.push_back(it == vocab.end() ? 0 : it->second);
            }
            sent.phrases.token_ids.push_back(std::move(ids));
        }
    }
}

// ---------------------------------------------------------------------------

struct BatchItem {
    std::size_t image_id;
    std::size_t sentence_id;
};

// batch_size distinct training images, each paired with one of its sentences.
inline std::vector<BatchItem> sample_batch(Rng& rng, const GroundingDataset& ds,
                                           std::size_t batch_size) {
    std::vector<std::size_t> train_images = ds.image_ids_for_split(Split::Train);
    if (batch_size > train_images.size())
        throw WsgError("sample-batch: batch_size " + std::to_string(batch_size) +
                       " exceeds training image count " +
                       std::to_string(train_images.size()) +
                       "; use a smaller batch");

    // Sentences per image, built once per call; cheap at desk scale.
    std::map<std::size_t, std::vector<std::size_t>> by_image;
    for (std::size_t j = 0; j < ds.sentences.size(); ++j)
        by_image[ds.sentences[j].image_id].push_back(j);

    // Partial Fisher-Yates over the train image list.
    for (std::size_t i = 0; i < batch_size; ++i) {
        std::size_t j = i + rng.below(train_images.size() - i);
        std::swap(train_images[i], train_images[j]);
    }

    std::vector<BatchItem> batch;
    batch.reserve(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) {
        const std::size_t img = train_images[i];
        auto it = by_image.find(img);
        if (it == by_image.end() || it->second.empty())
            throw WsgError("sample-batch: training image without a sentence");
        const auto& sents = it->second;
        batch.push_back({img, sents[rng.below(sents.size())]});
    }
    return batch;
}

struct MetricRow {
    std::size_t step;
    double total;
    double loss_is;
    double loss_rp;
    double lambda;
};

inline std::string metric_log_csv(const std::vector<MetricRow>& log) {
    std::ostringstream out;
    out.precision(17);
    out << "step,total,loss_is,loss_rp,lambda\n";
    for (const auto& r : log)
        out << r.step << "," << r.total << "," << r.loss_is << "," << r.loss_rp
            << "," << r.lambda << "\n";
    return out.str();
}

struct TrainResult {
    ParamStore params;
    std::vector<MetricRow> log;
};

// Standardizes the dataset in place (train-split stats applied everywhere)
// and stores the stats under "stats.*" so checkpoints are self-contained.
inline FeatureStats standardize_dataset(GroundingDataset& ds) {
    if (ds.standardized)
        throw WsgError("standardize: dataset is already standardized");
    std::vector<const Tensor*> train_feats;
    for (std::size_t i : ds.image_ids_for_split(Split::Train))
        train_feats.push_back(&ds.images[i].regions.features);
    FeatureStats fs = fit_feature_stats(train_feats);
    for (auto& img : ds.images) apply_standardization(img.regions.features, fs);
    ds.standardized = true;
    return fs;
}

inline TrainResult train(GroundingDataset& ds, const TrainConfig& cfg) {
    cfg.check();

    const bool want_rp = cfg.loss.variant == LossVariant::Distill ||
                         cfg.loss.variant == LossVariant::NceDistill;
    const bool want_is = cfg.loss.variant != LossVariant::Distill;
    if (want_rp && !ds.has_posteriors())
        throw WsgError("train: variant '" +
                       std::string(variant_name(cfg.loss.variant)) +
                       "' needs detector posteriors in the dataset");

    FeatureStats fs;
    if (!ds.standardized) {
        fs = standardize_dataset(ds);
    } else {
        throw WsgError("train: dataset already standardized; re-train from the "
                       "original file");
    }

    Vocab vocab = build_vocab(ds);
    apply_vocab(ds, vocab);

    ModelConfig mc;
    mc.d_region = ds.feature_dim;
    mc.hidden = cfg.hidden;
    mc.embed_dim = cfg.embed_dim;
    mc.out_dim = cfg.out_dim;
    mc.vocab_size = vocab.size() + 1;

    TrainResult result;
    result.params = init_params(mc, cfg.seed);
    result.params["stats.mean"] = fs.mean;
    result.params["stats.std"] = fs.std;

    // Pseudo labels per sentence, computed once through the training view.
    TrainingView view = strip_supervision(ds);
    Taxonomy tax;
    std::map<std::size_t, PseudoLabelMatrix> pseudo_cache;
    if (want_rp) {
        tax = parse_taxonomy(view.taxonomy_text());
        for (std::size_t j : view.train_sentences()) {
            const auto& post = view.posterior(view.image_of_sentence(j));
            pseudo_cache[j] = pseudo_labels_for_sentence(
                *post, view.phrases(j).token_strings, tax);
        }
    }

    const std::size_t train_images = ds.image_ids_for_split(Split::Train).size();
    const std::size_t steps_per_epoch = train_images / cfg.batch_size;
    const std::size_t total_steps = cfg.epochs * steps_per_epoch;

    Rng rng(cfg.seed ^ 0x5b8dull);
    AdamState adam;

    for (std::size_t step = 0; step < total_steps; ++step) {
        std::vector<BatchItem> batch = sample_batch(rng, ds, cfg.batch_size);
        const std::size_t B = batch.size();

        Tape tape;
        ParamNodes pn = register_params(result.params, tape);

        std::vector<NodeId> region_enc(B);
        for (std::size_t i = 0; i < B; ++i)
            region_enc[i] =
                encode_region(pn, view.regions(batch[i].image_id), tape);

        std::vector<NodeId> phrase_enc(B);
        for (std::size_t i = 0; i < B; ++i)
            phrase_enc[i] =
                encode_phrase(pn, view.phrases(batch[i].sentence_id), tape);

        BatchGraph graph;
        graph.pair_score_matrices.resize(B);
        graph.pseudo.assign(B, nullptr);
        for (std::size_t i = 0; i < B; ++i) {
            graph.pair_score_matrices[i] =
                score_region_phrase(region_enc[i], phrase_enc[i], tape);
            if (want_rp) graph.pseudo[i] = &pseudo_cache.at(batch[i].sentence_id);
        }
        if (want_is) {
            graph.pos_scores.resize(B);
            graph.neg_scores.assign(B, {});
            for (std::size_t i = 0; i < B; ++i) {
                graph.pos_scores[i] =
                    score_image_sentence(graph.pair_score_matrices[i], tape);
                for (std::size_t i2 = 0; i2 < B; ++i2) {
                    if (i2 == i) continue;
                    NodeId cross =
                        score_region_phrase(region_enc[i2], phrase_enc[i], tape);
                    graph.neg_scores[i].push_back(
                        score_image_sentence(cross, tape));
                }
            }
        }

        LossBreakdown loss = combined_loss(tape, graph, cfg.loss, step);
        GradMap grads = tape.backprop(loss.total);

        std::map<std::string, Tensor> named_grads;
        for (const auto& [name, node] : pn.nodes)
            if (grads.has(node)) named_grads[name] = grads.at(node);
        adam_step(result.params, named_grads, adam, cfg.learning_rate,
                  cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);

        result.log.push_back(
            {step, loss.total_value, loss.loss_is, loss.loss_rp, loss.lambda});
    }
    return result;
}

}  // namespace wsg
