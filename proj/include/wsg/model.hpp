// SPDX-License-Identifier: Apache-2.0
//
// Two-branch embedding model. Region branch f: two FC layers over region
// features. Phrase branch g: token embeddings, elementwise max over tokens,
// then two FC layers. Both end in row L2 normalization, so the region-phrase
// score is a cosine similarity. The image-sentence score greedily matches
// each phrase to its best region and sums.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "wsg/dataset.hpp"
#include "wsg/rng.hpp"
#include "wsg/tape.hpp"
#include "wsg/tensor.hpp"

namespace wsg {

struct ModelConfig {
    std::size_t d_region = 64;
    std::size_t hidden = 512;
    std::size_t embed_dim = 300;
    std::size_t out_dim = 512;
    std::size_t vocab_size = 1;  // row 0 is reserved for out-of-vocabulary
};

using ParamStore = std::map<std::string, Tensor>;

// Non-trainable entries (feature standardization stats) share the store so
// checkpoints are self-contained; the trainer skips this prefix.
inline bool is_trainable_param(const std::string& name) {
    return name.rfind("stats.", 0) != 0;
}

namespace detail {

inline Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t({fan_in, fan_out});
    for (double& v : t.data) v = rng.uniform(-a, a);
    return t;
}

}  // namespace detail

inline ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    ParamStore p;
    // Fixed creation order keeps initialization reproducible.
    p["f.w1"] = detail::glorot_uniform(cfg.d_region, cfg.hidden, rng);
    p["f.b1"] = Tensor({cfg.hidden});
    p["f.w2"] = detail::glorot_uniform(cfg.hidden, cfg.out_dim, rng);
    p["f.b2"] = Tensor({cfg.out_dim});
    Tensor embed({cfg.vocab_size, cfg.embed_dim});
    for (double& v : embed.data) v = rng.uniform(-0.05, 0.05);
    p["g.embed"] = std::move(embed);
    p["g.w1"] = detail::glorot_uniform(cfg.embed_dim, cfg.hidden, rng);
    p["g.b1"] = Tensor({cfg.hidden});
    p["g.w2"] = detail::glorot_uniform(cfg.hidden, cfg.out_dim, rng);
    p["g.b2"] = Tensor({cfg.out_dim});
    return p;
}

// Parameters registered as leaves on one tape, by name.
struct ParamNodes {
    std::map<std::string, NodeId> nodes;

    NodeId at(const std::string& name) const {
        auto it = nodes.find(name);
        if (it == nodes.end()) throw WsgError("params: missing tensor '" + name + "'");
        return it->second;
    }
};

inline ParamNodes register_params(const ParamStore& params, Tape& tape) {
    ParamNodes out;
    for (const auto& [name, tensor] : params)
        if (is_trainable_param(name)) out.nodes[name] = tape.input(tensor);
    return out;
}

// f(x) = l2norm(relu(x W1 + b1) W2 + b2), applied rowwise -> n x out_dim.
inline NodeId encode_region(const ParamNodes& p, NodeId features, Tape& tape) {
    NodeId h = tape.relu(tape.bias_add(tape.matmul(features, p.at("f.w1")),
                                       p.at("f.b1")));
    NodeId out = tape.bias_add(tape.matmul(h, p.at("f.w2")), p.at("f.b2"));
    return tape.l2_normalize_rows(out);
}

inline NodeId encode_region(const ParamNodes& p, const RegionSet& regions,
                            Tape& tape) {
    regions.check();
    return encode_region(p, tape.input(regions.features), tape);
}

// Per phrase: gather token embeddings, elementwise max over tokens, then the
// same FC-relu-FC-l2norm stack -> m x out_dim.
inline NodeId encode_phrase(const ParamNodes& p, const PhraseSet& phrases,
                            Tape& tape) {
    if (phrases.count() == 0) throw WsgError("encode-phrase: empty phrase set");
    std::vector<NodeId> pooled;
    pooled.reserve(phrases.count());
    for (const auto& ids : phrases.token_ids) {
        if (ids.empty()) throw WsgError("encode-phrase: empty phrase");
        pooled.push_back(tape.max_pool_rows(tape.gather_rows(p.at("g.embed"), ids)));
    }
    NodeId stacked = tape.concat_rows(pooled);
    NodeId h = tape.relu(tape.bias_add(tape.matmul(stacked, p.at("g.w1")),
                                       p.at("g.b1")));
    NodeId out = tape.bias_add(tape.matmul(h, p.at("g.w2")), p.at("g.b2"));
    return tape.l2_normalize_rows(out);
}

// s[k][l] = g(y_k) . f(x_l), an m x n cosine score matrix.
inline NodeId score_region_phrase(NodeId region_enc, NodeId phrase_enc,
                                  Tape& tape) {
    return tape.matmul(phrase_enc, tape.transpose(region_enc));
}

// S = sum_k max_l s[k][l]; greedy and asymmetric in phrases vs regions.
// Gradient reaches only each phrase's argmax region (lowest index on ties).
inline NodeId score_image_sentence(NodeId score_matrix, Tape& tape) {
    return tape.sum(tape.row_max(score_matrix));
}

}  // namespace wsg
