// SPDX-License-Identifier: Apache-2.0
//
// Synthetic grounding benchmark. Scenes contain whole objects that sometimes
// co-occur with their parts (a person with a face, a dog with a muzzle), so
// image-sentence supervision alone cannot tell whole from part. A simulated
// detector emits smoothed one-hot posteriors over a class set that covers
// only a fraction of the leaf classes; uncovered classes fall to background.
// Attributes live in feature dimensions disjoint from class identity.
#pragma once

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "wsg/dataset.hpp"
#include "wsg/rng.hpp"
#include "wsg/taxonomy.hpp"
#include "wsg/tensor.hpp"

namespace wsg {

struct WorldSpec {
    std::size_t num_train = 600;
    std::size_t num_val = 100;
    std::size_t num_test = 200;
    std::size_t feature_dim = 64;
    std::size_t proposals_per_image = 12;
    std::size_t objects_per_image = 3;
    double noise_sigma = 0.3;
    double detector_confusion = 0.1;  // epsilon
    double class_coverage = 2.0 / 3.0;
    double part_probability = 0.5;
    double canvas = 100.0;

    void check() const {
        if (feature_dim < 48)
            throw WsgError("world spec: feature_dim must be >= 48");
        if (objects_per_image < 1 || objects_per_image > 10)
            throw WsgError("world spec: objects_per_image must be in [1,10]");
        if (proposals_per_image < 2 * objects_per_image)
            throw WsgError("world spec: not enough proposals for objects+parts");
        if (class_coverage < 0.0 || class_coverage > 1.0)
            throw WsgError("world spec: class_coverage must be in [0,1]");
        if (detector_confusion < 0.0 || detector_confusion > 1.0)
            throw WsgError("world spec: detector_confusion must be in [0,1]");
        if (noise_sigma < 0.0)
            throw WsgError("world spec: noise_sigma must be >= 0");
    }
};

namespace synth_detail {

struct LeafClass {
    const char* name;
    const char* group;
    std::array<const char*, 2> synonyms;
    bool is_part;
};

// 12 leaf classes in 4 hypernym groups; "face" and "muzzle" are parts.
inline const std::vector<LeafClass>& leaf_classes() {
    static const std::vector<LeafClass> k = {
        {"man", "person", {"guy", "gentleman"}, false},
        {"woman", "person", {"lady", "gal"}, false},
        {"dog", "animal", {"puppy", "hound"}, false},
        {"cat", "animal", {"kitten", "feline"}, false},
        {"shirt", "clothing", {"tee", "blouse"}, false},
        {"jacket", "clothing", {"coat", "parka"}, false},
        {"hat", "clothing", {"cap", "beanie"}, false},
        {"car", "scene", {"auto", "sedan"}, false},
        {"tree", "scene", {"oak", "pine"}, false},
        {"building", "scene", {"house", "tower"}, false},
        {"face", "person", {"visage", "mug"}, true},
        {"muzzle", "animal", {"snout", "nose"}, true},
    };
    return k;
}

inline const std::vector<std::string>& groups() {
    static const std::vector<std::string> k = {"person", "animal", "clothing",
                                               "scene"};
    return k;
}

inline const std::vector<std::string>& attributes() {
    static const std::vector<std::string> k = {"red", "blue", "green",
                                               "striped"};
    return k;
}

// whole-object leaf index -> part leaf index
inline const std::map<std::size_t, std::size_t>& part_map() {
    static const std::map<std::size_t, std::size_t> k = {
        {0, 10}, {1, 10}, {2, 11}};  // man->face, woman->face, dog->muzzle
    return k;
}

constexpr std::size_t kClutterClass = 0xFFFFu;

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t idx) {
    return seed ^ (0x9e3779b97f4a7c15ULL * (idx + 1));
}

// Covered leaves: all parts plus a prefix of the object leaves, sized so the
// overall covered fraction matches class_coverage.
inline std::vector<bool> covered_mask(double coverage) {
    const auto& leaves = leaf_classes();
    std::vector<bool> mask(leaves.size(), false);
    std::size_t n_parts = 0;
    for (const auto& l : leaves)
        if (l.is_part) ++n_parts;
    const std::size_t want = static_cast<std::size_t>(
        std::lround(coverage * static_cast<double>(leaves.size())));
    for (std::size_t i = 0; i < leaves.size(); ++i)
        if (leaves[i].is_part) mask[i] = true;
    std::size_t have = n_parts;
    for (std::size_t i = 0; i < leaves.size() && have < want; ++i) {
        if (!leaves[i].is_part) {
            mask[i] = true;
            ++have;
        }
    }
    return mask;
}

inline Tensor class_prototype(std::size_t class_index, std::size_t d) {
    const std::size_t class_dims = (2 * d) / 3;
    Tensor mu({d});
    Rng rng(0xC1A55000ULL + class_index);
    double norm_sq = 0.0;
    for (std::size_t j = 0; j < class_dims; ++j) {
        mu.data[j] = rng.normal();
        norm_sq += mu.data[j] * mu.data[j];
    }
    const double scale = 3.0 / std::sqrt(norm_sq);
    for (std::size_t j = 0; j < class_dims; ++j) mu.data[j] *= scale;
    return mu;
}

inline void add_attribute_offset(Tensor& feat, std::size_t attr_index) {
    const std::size_t d = feat.numel();
    const std::size_t class_dims = (2 * d) / 3;
    const std::size_t n_attr = attributes().size();
    const std::size_t block = (d - class_dims) / n_attr;
    for (std::size_t j = 0; j < block; ++j)
        feat.data[class_dims + attr_index * block + j] += 1.5;
}

}  // namespace synth_detail

// Taxonomy for the generated world: detector classes are the groups plus the
// covered leaves; lemmas cover names and synonyms of covered leaves only.
inline Taxonomy make_world_taxonomy(const WorldSpec& spec) {
    using namespace synth_detail;
    const auto mask = covered_mask(spec.class_coverage);
    Taxonomy tax;
    tax.classes.push_back("background");
    for (const auto& g : groups()) tax.classes.push_back(g);
    for (std::size_t i = 0; i < leaf_classes().size(); ++i)
        if (mask[i]) tax.classes.push_back(leaf_classes()[i].name);
    for (std::size_t i = 0; i < leaf_classes().size(); ++i) {
        if (!mask[i]) continue;
        const auto& leaf = leaf_classes()[i];
        tax.lemmas[leaf.name] = leaf.name;
        for (const char* syn : leaf.synonyms) tax.lemmas[syn] = leaf.name;
        tax.hypernym_edges[leaf.name] = leaf.group;
    }
    for (const auto& g : groups()) tax.lemmas[g] = g;
    tax.validate();
    return tax;
}

struct GeneratedWorld {
    GroundingDataset dataset;
    Taxonomy taxonomy;
};

inline GeneratedWorld generate(const WorldSpec& spec, std::uint64_t seed) {
    using namespace synth_detail;
    spec.check();

    GeneratedWorld world;
    world.taxonomy = make_world_taxonomy(spec);
    GroundingDataset& ds = world.dataset;
    ds.taxonomy_text = taxonomy_to_text(world.taxonomy);
    ds.feature_dim = spec.feature_dim;
    ds.num_detector_classes = world.taxonomy.classes.size();

    const auto& leaves = leaf_classes();
    const auto mask = covered_mask(spec.class_coverage);
    const std::size_t K = world.taxonomy.classes.size();

    // Detector class index per leaf (background when uncovered).
    std::vector<std::size_t> det_class_of_leaf(leaves.size(), 0);
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        if (!mask[i]) continue;
        for (std::size_t c = 0; c < K; ++c)
            if (world.taxonomy.classes[c] == leaves[i].name)
                det_class_of_leaf[i] = c;
    }

    std::vector<std::size_t> object_leaves;
    for (std::size_t i = 0; i < leaves.size(); ++i)
        if (!leaves[i].is_part) object_leaves.push_back(i);

    const std::size_t total_images =
        spec.num_train + spec.num_val + spec.num_test;

    for (std::size_t img_idx = 0; img_idx < total_images; ++img_idx) {
        Rng rng(mix_seed(seed, img_idx));
        ImageEntry image;
        image.split = img_idx < spec.num_train ? Split::Train
                      : img_idx < spec.num_train + spec.num_val ? Split::Val
                                                                : Split::Test;

        struct ObjectInst {
            std::size_t leaf;
            std::size_t attr;  // 0xFFFF when none
            Box box;
        };
        std::vector<ObjectInst> objects;

        // Distinct classes per image keep phrase references unambiguous.
        std::vector<std::size_t> pool = object_leaves;
        for (std::size_t g = 0; g < spec.objects_per_image; ++g) {
            const std::size_t pick = rng.below(pool.size());
            const std::size_t leaf = pool[pick];
            pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));

            ObjectInst obj;
            obj.leaf = leaf;
            obj.attr = rng.bernoulli(0.5) ? rng.below(attributes().size())
                                          : 0xFFFFu;
            const double w = rng.uniform(20.0, 45.0);
            const double h = rng.uniform(20.0, 45.0);
            obj.box.x_min = rng.uniform(0.0, spec.canvas - w);
            obj.box.y_min = rng.uniform(0.0, spec.canvas - h);
            obj.box.x_max = obj.box.x_min + w;
            obj.box.y_max = obj.box.y_min + h;
            objects.push_back(obj);
        }

        struct RegionInst {
            std::size_t leaf;  // kClutterClass for clutter
            std::size_t attr;
            Box box;
        };
        std::vector<RegionInst> regions;
        for (const auto& obj : objects)
            regions.push_back({obj.leaf, obj.attr, obj.box});
        for (const auto& obj : objects) {
            auto pit = part_map().find(obj.leaf);
            if (pit == part_map().end() || !rng.bernoulli(spec.part_probability))
                continue;
            // Part box strictly inside the whole box, 30% linear size.
            const double pw = 0.3 * (obj.box.x_max - obj.box.x_min);
            const double ph = 0.3 * (obj.box.y_max - obj.box.y_min);
            Box part;
            part.x_min = obj.box.x_min +
                         rng.uniform(0.05, 0.6) * (obj.box.x_max - obj.box.x_min);
            part.y_min = obj.box.y_min +
                         rng.uniform(0.05, 0.6) * (obj.box.y_max - obj.box.y_min);
            part.x_max = part.x_min + pw;
            part.y_max = part.y_min + ph;
            regions.push_back({pit->second, 0xFFFFu, part});
        }
        while (regions.size() < spec.proposals_per_image) {
            const double w = rng.uniform(5.0, 30.0);
            const double h = rng.uniform(5.0, 30.0);
            Box b;
            b.x_min = rng.uniform(0.0, spec.canvas - w);
            b.y_min = rng.uniform(0.0, spec.canvas - h);
            b.x_max = b.x_min + w;
            b.y_max = b.y_min + h;
            regions.push_back({kClutterClass, 0xFFFFu, b});
        }

        const std::size_t n = regions.size();
        image.regions.features = Tensor({n, spec.feature_dim});
        DetectionPosterior post;
        post.probs = Tensor({n, K});
        for (std::size_t l = 0; l < n; ++l) {
            const RegionInst& r = regions[l];
            Tensor feat({spec.feature_dim});
            if (r.leaf != kClutterClass) {
                feat = class_prototype(r.leaf, spec.feature_dim);
                if (r.attr != 0xFFFFu) add_attribute_offset(feat, r.attr);
            }
            for (std::size_t j = 0; j < spec.feature_dim; ++j)
                feat.data[j] += spec.noise_sigma * rng.normal();
            std::copy(feat.data.begin(), feat.data.end(),
                      image.regions.features.data.begin() + l * spec.feature_dim);
            image.regions.boxes.push_back(r.box);
            image.hidden_labels.push_back(
                {static_cast<std::uint32_t>(
                     r.leaf == kClutterClass ? 0xFFFFFFFFu : r.leaf),
                 static_cast<std::uint32_t>(
                     r.attr == 0xFFFFu ? 0xFFFFFFFFu : r.attr)});

            const std::size_t det_class =
                r.leaf == kClutterClass ? 0 : det_class_of_leaf[r.leaf];
            const double eps = spec.detector_confusion;
            for (std::size_t c = 0; c < K; ++c)
                post.probs.at(l, c) = eps / static_cast<double>(K);
            post.probs.at(l, det_class) += 1.0 - eps;
        }
        image.posterior = std::move(post);

        // One sentence per image describing a subset of the whole objects.
        SentenceEntry sent;
        sent.image_id = img_idx;
        std::vector<std::size_t> mentioned;
        for (std::size_t g = 0; g < objects.size(); ++g)
            if (rng.bernoulli(0.8)) mentioned.push_back(g);
        if (mentioned.empty()) mentioned.push_back(0);
        for (std::size_t g : mentioned) {
            const ObjectInst& obj = objects[g];
            std::vector<std::string> toks;
            if (obj.attr != 0xFFFFu && rng.bernoulli(0.6))
                toks.push_back(attributes()[obj.attr]);
            const std::size_t which = rng.below(3);
            toks.push_back(which == 0 ? leaves[obj.leaf].name
                                      : leaves[obj.leaf].synonyms[which - 1]);
            sent.phrases.token_strings.push_back(std::move(toks));
            sent.gt_boxes.push_back(obj.box);
        }
        ds.images.push_back(std::move(image));
        ds.sentences.push_back(std::move(sent));
    }
    return world;
}

}  // namespace wsg
