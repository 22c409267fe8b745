// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "wsg/eval.hpp"
#include "wsg/serialize.hpp"
#include "wsg/synth.hpp"

using namespace wsg;

namespace {

// Parameters that make both encoders behave like plain L2 normalization, so
// region-phrase scores are cosines of the raw inputs.
ParamStore passthrough_params(std::size_t d, std::size_t vocab_rows) {
    ParamStore p;
    Tensor eye({d, d});
    for (std::size_t i = 0; i < d; ++i) eye.at(i, i) = 1.0;
    p["f.w1"] = eye;
    p["f.b1"] = Tensor({d});
    p["f.w2"] = eye;
    p["f.b2"] = Tensor({d});
    Tensor embed({vocab_rows, d});
    // embedding row i = 0.5 * e_{i-1} for i >= 1; row 0 (OOV) gets a fixed axis
    for (std::size_t i = 1; i < vocab_rows && i <= d; ++i)
        embed.at(i, i - 1) = 0.5;
    embed.at(0, d - 1) = 0.5;
    p["g.embed"] = std::move(embed);
    p["g.w1"] = eye;
    p["g.b1"] = Tensor({d});
    p["g.w2"] = eye;
    p["g.b2"] = Tensor({d});
    return p;
}

RegionSet axis_regions(const std::vector<std::size_t>& axes, std::size_t d,
                       const std::vector<Box>& boxes) {
    RegionSet rs;
    rs.features = Tensor({axes.size(), d});
    for (std::size_t l = 0; l < axes.size(); ++l)
        rs.features.at(l, axes[l]) = 2.0;
    rs.boxes = boxes;
    return rs;
}

}  // namespace

TEST_CASE("iou matches hand-computed overlaps") {
    Box a{0, 0, 2, 2};
    CHECK(iou(a, a) == 1.0);
    CHECK(iou(a, Box{5, 5, 7, 7}) == 0.0);
    CHECK(iou(a, Box{1, 1, 3, 3}) == Catch::Approx(1.0 / 7.0).margin(1e-12));
    CHECK_THROWS_WITH(iou(a, Box{1, 1, 1, 1}),
                      Catch::Matchers::ContainsSubstring("invalid box"));
}

TEST_CASE("grounding picks the argmax region per phrase") {
    const std::size_t d = 4;
    ParamStore params = passthrough_params(d, 5);

    std::vector<Box> boxes = {{0, 0, 10, 10}, {20, 0, 30, 10}, {40, 0, 50, 10}};
    RegionSet rs = axis_regions({0, 1, 2}, d, boxes);

    PhraseSet phrases;
    phrases.token_ids = {{2}, {1}};  // rows 2 and 1 -> axes 1 and 0
    phrases.token_strings = {{"b"}, {"a"}};

    GroundingResult gr = ground(params, rs, phrases);
    REQUIRE(gr.predictions.size() == 2);
    CHECK(gr.predictions[0].region_index == 1);
    CHECK(gr.predictions[1].region_index == 0);
    CHECK(gr.predictions[0].score == Catch::Approx(1.0).margin(1e-12));
    CHECK(gr.predictions[0].box.x_min == 20.0);

    SECTION("single region is always chosen") {
        RegionSet one = axis_regions({3}, d, {{0, 0, 5, 5}});
        GroundingResult g1 = ground(params, one, phrases);
        CHECK(g1.predictions[0].region_index == 0);
        CHECK(g1.predictions[1].region_index == 0);
    }
    SECTION("score ties break to the lowest region index") {
        RegionSet twin = axis_regions({1, 1}, d, {{0, 0, 5, 5}, {5, 5, 9, 9}});
        GroundingResult g2 = ground(params, twin, phrases);
        CHECK(g2.predictions[0].region_index == 0);
    }
}

TEST_CASE("grounding applies checkpoint standardization stats to raw features") {
    const std::size_t d = 4;
    ParamStore params = passthrough_params(d, 5);
    params["stats.mean"] = Tensor::vec({5.0, 0.0, 0.0, 0.0});
    params["stats.std"] = Tensor::vec({1.0, 1.0, 1.0, 1.0});

    // Raw feature [6,0.5,0,0]; after subtracting the mean it points mostly at
    // axis 0.
    RegionSet rs;
    rs.features = Tensor::matrix(2, d, {6.0, 0.5, 0.0, 0.0,
                                        5.0, 2.0, 0.0, 0.0});
    rs.boxes = {{0, 0, 5, 5}, {5, 5, 9, 9}};
    PhraseSet phrases;
    phrases.token_ids = {{1}};
    phrases.token_strings = {{"a"}};

    GroundingResult raw = ground(params, rs, phrases, false);
    CHECK(raw.predictions[0].region_index == 0);
    // claiming the features are standardized suppresses the correction
    GroundingResult std_in = ground(params, rs, phrases, true);
    CHECK(std_in.predictions[0].region_index == 0);
    CHECK(raw.scores.data != std_in.scores.data);
}

TEST_CASE("dataset evaluation applies the strict IoU rule with buckets") {
    const std::size_t d = 4;
    // vocab over train tokens {a, b, c} -> ids 1, 2, 3
    GroundingDataset ds;
    ds.feature_dim = d;
    ds.taxonomy_text =
        "[classes]\nbackground\nperson\n[lemmas]\na -> person\n";

    ImageEntry img;
    img.split = Split::Train;
    img.regions = axis_regions(
        {0, 1, 2}, d, {{0, 0, 10, 10}, {20, 0, 30, 10}, {40, 0, 50, 10}});
    ds.images.push_back(std::move(img));

    SentenceEntry sent;
    sent.image_id = 0;
    sent.phrases.token_strings = {{"a"}, {"b"}, {"c"}};
    // phrase "a" -> region 0: gt matches exactly -> correct
    // phrase "b" -> region 1: gt shifted slightly -> IoU > 0.5 -> correct
    // phrase "c" -> region 2: gt overlaps by exactly half -> incorrect
    sent.gt_boxes = {{0, 0, 10, 10}, {21, 0, 31, 10}, {40, 0, 50, 5}};
    ds.sentences.push_back(std::move(sent));

    ParamStore params = passthrough_params(d, 5);
    EvalReport report = evaluate_dataset(params, ds, Split::Train);

    CHECK(report.total == 3);
    CHECK(report.correct == 2);
    CHECK(report.accuracy() == Catch::Approx(2.0 / 3.0).margin(1e-12));
    CHECK(report.recall_at_1 == Catch::Approx(2.0 / 3.0).margin(1e-12));

    REQUIRE(report.buckets.count("person") == 1);
    REQUIRE(report.buckets.count("uncovered") == 1);
    CHECK(report.buckets.at("person").correct == 1);
    CHECK(report.buckets.at("person").total == 1);
    CHECK(report.buckets.at("uncovered").correct == 1);
    CHECK(report.buckets.at("uncovered").total == 2);

    std::string csv = report.to_csv();
    CHECK(csv.rfind("bucket,correct,total,accuracy\n", 0) == 0);
    CHECK(csv.find("person,1,1,1\n") != std::string::npos);
    CHECK(csv.find("\"recall_at_1\"") != std::string::npos);
}

TEST_CASE("category buckets climb to the topmost class ancestor") {
    Taxonomy tax = parse_taxonomy(
        "[classes]\nbackground\nperson\nface\n"
        "[lemmas]\nface -> face\nman -> person\n"
        "[hypernyms]\nface -> person\n");
    CHECK(category_bucket({"his", "face"}, tax) == "person");
    CHECK(category_bucket({"man"}, tax) == "person");
    CHECK(category_bucket({"asteroid"}, tax) == "uncovered");
}

TEST_CASE("evaluation never reads detector posteriors") {
    GeneratedWorld world = generate(
        [] {
            WorldSpec s;
            s.num_train = 20;
            s.num_val = 0;
            s.num_test = 10;
            s.feature_dim = 48;
            return s;
        }(),
        5);
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.epochs = 0;
    cfg.hidden = 16;
    cfg.embed_dim = 16;
    cfg.out_dim = 16;
    TrainResult tr = train(world.dataset, cfg);

    GroundingDataset with_post = world.dataset;
    GroundingDataset without_post = world.dataset;
    strip_posteriors(without_post);
    CHECK_FALSE(without_post.has_posteriors());

    EvalReport a = evaluate_dataset(tr.params, with_post, Split::Test);
    EvalReport b = evaluate_dataset(tr.params, without_post, Split::Test);
    CHECK(a.to_csv() == b.to_csv());
}

TEST_CASE("heatmap averages covering proposals and marks uncovered pixels") {
    const std::size_t d = 4;
    ParamStore params = passthrough_params(d, 5);
    // region 0 scores 1.0 against the phrase, region 1 scores 0.0
    RegionSet rs = axis_regions({0, 1}, d, {{0, 0, 60, 60}, {40, 40, 100, 100}});
    PhraseSet phrases;
    phrases.token_ids = {{1}};
    phrases.token_strings = {{"a"}};

    Heatmap hm = heatmap(params, rs, phrases, 0, 10, 10, 100.0, 100.0);
    REQUIRE(hm.scores.size() == 100);
    auto at = [&](std::size_t py, std::size_t px) {
        return hm.scores[py * 10 + px];
    };
    auto cov = [&](std::size_t py, std::size_t px) {
        return static_cast<bool>(hm.covered[py * 10 + px]);
    };
    // pixel center (55, 55): inside both boxes -> mean of 1 and 0
    CHECK(at(5, 5) == Catch::Approx(0.5).margin(1e-9));
    CHECK(cov(5, 5));
    // pixel center (15, 15): only region 0
    CHECK(at(1, 1) == Catch::Approx(1.0).margin(1e-9));
    // pixel center (95, 5): inside neither
    CHECK(at(0, 9) == 0.0);
    CHECK_FALSE(cov(0, 9));

    CHECK_THROWS(heatmap(params, rs, phrases, 7, 10, 10));
}

TEST_CASE("constant heatmaps render as mid-gray PGM") {
    Heatmap hm;
    hm.height = 2;
    hm.width = 3;
    hm.scores.assign(6, 0.42);
    hm.covered.assign(6, true);
    std::string pgm = heatmap_to_pgm(hm);
    CHECK(pgm.rfind("P5\n3 2\n255\n", 0) == 0);
    const std::string body = pgm.substr(pgm.size() - 6);
    for (char c : body) CHECK(static_cast<unsigned char>(c) == 128);

    hm.scores = {0.0, 1.0, 0.5, 0.25, 0.75, 1.0};
    std::string pgm2 = heatmap_to_pgm(hm);
    const auto* bytes =
        reinterpret_cast<const unsigned char*>(pgm2.data() + pgm2.size() - 6);
    CHECK(bytes[0] == 0);
    CHECK(bytes[1] == 255);
    CHECK(bytes[2] == 128);
}

TEST_CASE("ablation produces one deterministic row per variant") {
    WorldSpec spec;
    spec.num_train = 16;
    spec.num_val = 0;
    spec.num_test = 8;
    spec.feature_dim = 48;
    GeneratedWorld world = generate(spec, 11);

    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.epochs = 2;
    cfg.hidden = 12;
    cfg.embed_dim = 12;
    cfg.out_dim = 12;
    cfg.loss.lambda_a = 2;

    auto rows = ablate(world.dataset, cfg);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].variant == LossVariant::Margin);
    CHECK(rows[1].variant == LossVariant::Nce);
    CHECK(rows[2].variant == LossVariant::Distill);
    CHECK(rows[3].variant == LossVariant::NceDistill);

    std::string csv = ablation_csv(rows);
    CHECK(csv.rfind("variant,accuracy,correct,total\n", 0) == 0);
    CHECK(csv.find("nce_distill,") != std::string::npos);

    auto again = ablate(world.dataset, cfg);
    CHECK(ablation_csv(again) == csv);
}
