// SPDX-License-Identifier: Apache-2.0
//
// Grounding dataset containers and the supervision-stripped training view.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wsg/tensor.hpp"

namespace wsg {

struct Box {
    double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

    bool valid() const { return x_max > x_min && y_max > y_min; }
    double area() const { return (x_max - x_min) * (y_max - y_min); }
};

struct RegionSet {
    Tensor features;  // n x d_region, row-major
    std::vector<Box> boxes;

    std::size_t count() const { return boxes.size(); }

    void check() const {
        if (boxes.empty()) throw WsgError("region-set: needs at least one region");
        if (features.rank() != 2 || features.rows() != boxes.size())
            throw WsgError("region-set: feature rows do not match box count");
        for (const Box& b : boxes)
            if (!b.valid()) throw WsgError("region-set: degenerate box");
    }
};

struct PhraseSet {
    // Token ids into the embedding table, plus raw strings for matching.
    std::vector<std::vector<std::size_t>> token_ids;
    std::vector<std::vector<std::string>> token_strings;

    std::size_t count() const { return token_strings.size(); }
};

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

// n x K detector class posterior, one row per region.
struct DetectionPosterior {
    Tensor probs;

    // Fresh posteriors satisfy 1e-9; rows loaded from the f32 file format
    // carry quantization error and are checked at 1e-6.
    void check(double tol = 1e-9) const {
        if (probs.rank() != 2) throw WsgError("posterior: expects a matrix");
        for (std::size_t i = 0; i < probs.rows(); ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < probs.cols(); ++j) {
                double v = probs.at(i, j);
                if (v < 0.0 || v > 1.0)
                    throw WsgError("posterior: entry outside [0,1]");
                s += v;
            }
            if (std::abs(s - 1.0) > tol)
                throw WsgError("posterior: row does not sum to 1");
        }
    }
};

// Hidden per-region annotation, evaluation/debug only.
struct RegionLabel {
    std::uint32_t class_id = 0;  // index into the generator's leaf-class list
    std::uint32_t attr_id = 0xFFFFFFFFu;
};

struct ImageEntry {
    RegionSet regions;
    std::optional<DetectionPosterior> posterior;
    Split split = Split::Train;
    // Hidden: never visible through TrainingView.
    std::vector<RegionLabel> hidden_labels;
};

struct SentenceEntry {
    std::size_t image_id = 0;
    PhraseSet phrases;
    // Hidden ground truth, one box per phrase; evaluation only.
    std::vector<Box> gt_boxes;
};

struct GroundingDataset {
    std::string taxonomy_text;
    std::size_t feature_dim = 0;
    std::size_t num_detector_classes = 0;
    std::vector<ImageEntry> images;
    std::vector<SentenceEntry> sentences;
    bool standardized = false;

    std::vector<std::size_t> sentence_ids_for_split(Split s) const {
        std::vector<std::size_t> out;
        for (std::size_t j = 0; j < sentences.size(); ++j)
            if (images[sentences[j].image_id].split == s) out.push_back(j);
        return out;
    }

    std::vector<std::size_t> image_ids_for_split(Split s) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < images.size(); ++i)
            if (images[i].split == s) out.push_back(i);
        return out;
    }

    bool has_posteriors() const {
        for (const auto& img : images)
            if (!img.posterior) return false;
        return !images.empty();
    }

    std::vector<std::vector<std::string>> all_phrase_tokens() const {
        std::vector<std::vector<std::string>> out;
        for (const auto& s : sentences)
            for (const auto& toks : s.phrases.token_strings) out.push_back(toks);
        return out;
    }
};

// What the trainer is allowed to see: region features/boxes, detector
// posteriors, and the image-sentence pairing. Ground-truth phrase boxes and
// hidden region labels are unreachable through this type.
class TrainingView {
public:
    explicit TrainingView(const GroundingDataset& ds) : ds_(&ds) {}

    const RegionSet& regions(std::size_t image_id) const {
        return ds_->images[image_id].regions;
    }
    const std::optional<DetectionPosterior>& posterior(std::size_t image_id) const {
        return ds_->images[image_id].posterior;
    }
    const PhraseSet& phrases(std::size_t sentence_id) const {
        return ds_->sentences[sentence_id].phrases;
    }
    std::size_t image_of_sentence(std::size_t sentence_id) const {
        return ds_->sentences[sentence_id].image_id;
    }
    std::vector<std::size_t> train_sentences() const {
        return ds_->sentence_ids_for_split(Split::Train);
    }
    const std::string& taxonomy_text() const { return ds_->taxonomy_text; }
    std::size_t feature_dim() const { return ds_->feature_dim; }
    bool standardized() const { return ds_->standardized; }

private:
    const GroundingDataset* ds_;
};

inline TrainingView strip_supervision(const GroundingDataset& ds) {
    return TrainingView(ds);
}

}  // namespace wsg
