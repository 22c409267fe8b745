// SPDX-License-Identifier: Apache-2.0
//
// Detector-free inference and measurement: per-phrase argmax grounding,
// IoU > 0.5 accuracy with a per-category breakdown, the independently
// computed Recall@1 cross-check, score heatmaps, and the four-variant
// ablation driver.
//
// Nothing in this header accepts a DetectionPosterior: the inference path
// cannot consume detector outputs by construction.
#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "wsg/dataset.hpp"
#include "wsg/model.hpp"
#include "wsg/stats.hpp"
#include "wsg/tape.hpp"
#include "wsg/taxonomy.hpp"
#include "wsg/trainer.hpp"

namespace wsg {

inline double iou(const Box& a, const Box& b) {
    if (!a.valid() || !b.valid()) throw WsgError("iou: invalid box");
    const double ix = std::max(0.0, std::min(a.x_max, b.x_max) -
                                        std::max(a.x_min, b.x_min));
    const double iy = std::max(0.0, std::min(a.y_max, b.y_max) -
                                        std::max(a.y_min, b.y_min));
    const double inter = ix * iy;
    if (inter <= 0.0) return 0.0;
    return inter / (a.area() + b.area() - inter);
}

struct GroundingPrediction {
    std::size_t region_index = 0;
    Box box;
    double score = 0.0;
};

struct GroundingResult {
    std::vector<GroundingPrediction> predictions;  // one per phrase
    Tensor scores;                                 // m x n, for heatmaps/recall
};

// Applies checkpoint standardization stats (if present and the features are
// raw), encodes both branches, and takes the per-phrase argmax region.
// Ties break to the lowest region index.
inline GroundingResult ground(const ParamStore& params, const RegionSet& regions,
                              const PhraseSet& phrases,
                              bool features_standardized = false) {
    regions.check();
    RegionSet local = regions;
    if (!features_standardized && params.count("stats.mean")) {
        FeatureStats fs;
        fs.mean = params.at("stats.mean");
        fs.std = params.at("stats.std");
        apply_standardization(local.features, fs);
    }

    Tape tape;
    ParamNodes pn = register_params(params, tape);
    NodeId f_out = encode_region(pn, local, tape);
    NodeId g_out = encode_phrase(pn, phrases, tape);
    NodeId s = score_region_phrase(f_out, g_out, tape);

    GroundingResult result;
    result.scores = tape.value(s);
    const std::size_t m = result.scores.rows(), n = result.scores.cols();
    for (std::size_t k = 0; k < m; ++k) {
        std::size_t best = 0;
        for (std::size_t l = 1; l < n; ++l)
            if (result.scores.at(k, l) > result.scores.at(k, best)) best = l;
        result.predictions.push_back(
            {best, regions.boxes[best], result.scores.at(k, best)});
    }
    return result;
}

// ---------------------------------------------------------------------------

struct BucketCount {
    std::size_t correct = 0;
    std::size_t total = 0;
};

struct EvalReport {
    std::map<std::string, BucketCount> buckets;
    std::size_t correct = 0;
    std::size_t total = 0;
    double recall_at_1 = 0.0;
    std::string fingerprint;  // free-form run metadata

    double accuracy() const {
        return total == 0 ? 0.0
                          : static_cast<double>(correct) /
                                static_cast<double>(total);
    }

    std::string to_csv() const {
        std::ostringstream out;
        out.precision(17);
        out << "bucket,correct,total,accuracy\n";
        for (const auto& [name, c] : buckets) {
            const double acc = c.total == 0 ? 0.0
                                            : static_cast<double>(c.correct) /
                                                  static_cast<double>(c.total);
            out << name << "," << c.correct << "," << c.total << "," << acc
                << "\n";
        }
        out << "{\"accuracy\": " << accuracy()
            << ", \"recall_at_1\": " << recall_at_1 << ", \"correct\": " << correct
            << ", \"total\": " << total << ", \"fingerprint\": \"" << fingerprint
            << "\"}\n";
        return out.str();
    }
};

// Bucket = topmost detector-class ancestor of the phrase's matched class;
// unmatched phrases land in "uncovered".
inline std::string category_bucket(const std::vector<std::string>& phrase_tokens,
                                   const Taxonomy& tax) {
    ClassPhraseMatch m = match_phrase_class(phrase_tokens, tax);
    if (!m.matched_class) return "uncovered";
    std::string cls = *m.matched_class;
    while (true) {
        auto it = tax.hypernym_edges.find(cls);
        if (it == tax.hypernym_edges.end() || !tax.is_class(it->second)) break;
        cls = it->second;
    }
    return cls;
}

// Scores every test-split sentence and applies the IoU > 0.5 rule (strict).
// Recall@1 is computed through an independent ranking pass and must agree
// with the accuracy count.
inline EvalReport evaluate_dataset(const ParamStore& params,
                                   GroundingDataset& ds, Split split,
                                   double threshold = 0.5) {
    Taxonomy tax = parse_taxonomy(ds.taxonomy_text);
    // Token ids come from the deterministic train-split vocabulary; assign
    // them here if the dataset was loaded fresh from disk.
    if (!ds.sentences.empty() &&
        ds.sentences.front().phrases.token_ids.size() !=
            ds.sentences.front().phrases.count()) {
        apply_vocab(ds, build_vocab(ds));
    }
    EvalReport report;
    std::size_t recall_hits = 0;

    for (std::size_t j : ds.sentence_ids_for_split(split)) {
        const SentenceEntry& sent = ds.sentences[j];
        const RegionSet& regions = ds.images[sent.image_id].regions;
        if (sent.gt_boxes.size() != sent.phrases.count()) {
            throw WsgError("eval: sentence " + std::to_string(j) +
                           " is missing ground-truth boxes for some phrases");
        }
        GroundingResult gr =
            ground(params, regions, sent.phrases, ds.standardized);

        for (std::size_t k = 0; k < sent.phrases.count(); ++k) {
            const bool hit =
                iou(gr.predictions[k].box, sent.gt_boxes[k]) > threshold;

            // Independent Recall@1 route: rank regions by score, take top-1.
            std::vector<std::size_t> order(regions.count());
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t a, std::size_t b) {
                                 return gr.scores.at(k, a) > gr.scores.at(k, b);
                             });
            const bool recall_hit =
                iou(regions.boxes[order[0]], sent.gt_boxes[k]) > threshold;
            if (recall_hit) ++recall_hits;

            const std::string bucket =
                category_bucket(sent.phrases.token_strings[k], tax);
            BucketCount& c = report.buckets[bucket];
            c.total += 1;
            report.total += 1;
            if (hit) {
                c.correct += 1;
                report.correct += 1;
            }
        }
    }
    report.recall_at_1 =
        report.total == 0
            ? 0.0
            : static_cast<double>(recall_hits) / static_cast<double>(report.total);
    if (recall_hits != report.correct)
        throw WsgError("eval: accuracy and Recall@1 disagree (" +
                       std::to_string(report.correct) + " vs " +
                       std::to_string(recall_hits) + ")");
    return report;
}

// ---------------------------------------------------------------------------
// Heatmaps

struct Heatmap {
    std::size_t height = 0, width = 0;
    std::vector<double> scores;    // row-major H x W
    std::vector<bool> covered;     // false where no proposal contains the pixel
};

// Pixel score = mean of s(region, phrase) over proposals containing the pixel
// center. A center belongs to a box if it is strictly inside or on the min
// edge. Uncovered pixels score 0 and carry a no-coverage mark.
inline Heatmap heatmap(const ParamStore& params, const RegionSet& regions,
                       const PhraseSet& phrases, std::size_t phrase_index,
                       std::size_t height, std::size_t width,
                       double canvas_w = 100.0, double canvas_h = 100.0,
                       bool features_standardized = false) {
    if (height < 1 || width < 1) throw WsgError("heatmap: grid must be >= 1x1");
    GroundingResult gr = ground(params, regions, phrases, features_standardized);
    if (phrase_index >= phrases.count())
        throw WsgError("heatmap: phrase index out of range");

    Heatmap hm;
    hm.height = height;
    hm.width = width;
    hm.scores.assign(height * width, 0.0);
    hm.covered.assign(height * width, false);

    for (std::size_t py = 0; py < height; ++py) {
        const double cy = (static_cast<double>(py) + 0.5) * canvas_h /
                          static_cast<double>(height);
        for (std::size_t px = 0; px < width; ++px) {
            const double cx = (static_cast<double>(px) + 0.5) * canvas_w /
                              static_cast<double>(width);
            double acc = 0.0;
            std::size_t n_cover = 0;
            for (std::size_t l = 0; l < regions.count(); ++l) {
                const Box& b = regions.boxes[l];
                if (cx >= b.x_min && cx < b.x_max && cy >= b.y_min &&
                    cy < b.y_max) {
                    acc += gr.scores.at(phrase_index, l);
                    ++n_cover;
                }
            }
            if (n_cover > 0) {
                hm.scores[py * width + px] = acc / static_cast<double>(n_cover);
                hm.covered[py * width + px] = true;
            }
        }
    }
    return hm;
}

// Binary PGM (P5), [min,max] rescaled to [0,255]; constant maps to mid-gray.
inline std::string heatmap_to_pgm(const Heatmap& hm) {
    double lo = 0.0, hi = 0.0;
    bool first = true;
    for (std::size_t i = 0; i < hm.scores.size(); ++i) {
        if (first) {
            lo = hi = hm.scores[i];
            first = false;
        } else {
            lo = std::min(lo, hm.scores[i]);
            hi = std::max(hi, hm.scores[i]);
        }
    }
    std::ostringstream out;
    out << "P5\n" << hm.width << " " << hm.height << "\n255\n";
    for (double v : hm.scores) {
        unsigned char byte;
        if (hi - lo < 1e-300) {
            byte = 128;
        } else {
            double t = (v - lo) / (hi - lo);
            byte = static_cast<unsigned char>(std::lround(t * 255.0));
        }
        out.put(static_cast<char>(byte));
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Ablation: same data, same seed, four loss variants.

struct AblationRow {
    LossVariant variant;
    EvalReport report;
};

inline std::vector<AblationRow> ablate(const GroundingDataset& base,
                                       const TrainConfig& base_cfg,
                                       Split eval_split = Split::Test) {
    const LossVariant variants[] = {LossVariant::Margin, LossVariant::Nce,
                                    LossVariant::Distill,
                                    LossVariant::NceDistill};
    std::vector<AblationRow> rows;
    for (LossVariant v : variants) {
        GroundingDataset ds = base;  // each run standardizes its own copy
        TrainConfig cfg = base_cfg;
        cfg.loss.variant = v;
        TrainResult tr = train(ds, cfg);
        EvalReport rep = evaluate_dataset(tr.params, ds, eval_split);
        rep.fingerprint = std::string("variant=") + variant_name(v) +
                          " seed=" + std::to_string(cfg.seed);
        rows.push_back({v, std::move(rep)});
    }
    return rows;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    out.precision(17);
    out << "variant,accuracy,correct,total\n";
    for (const auto& r : rows)
        out << variant_name(r.variant) << "," << r.report.accuracy() << ","
            << r.report.correct << "," << r.report.total << "\n";
    return out.str();
}

}  // namespace wsg
