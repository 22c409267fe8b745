// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "wsg/model.hpp"

using namespace wsg;

namespace {

// Tiny hand-set parameter store with identity weights and zero biases.
ParamStore identity_params(std::size_t d) {
    ParamStore p;
    Tensor eye({d, d});
    for (std::size_t i = 0; i < d; ++i) eye.at(i, i) = 1.0;
    p["f.w1"] = eye;
    p["f.b1"] = Tensor({d});
    p["f.w2"] = eye;
    p["f.b2"] = Tensor({d});
    p["g.embed"] = Tensor({4, d}, 0.1);
    p["g.w1"] = eye;
    p["g.b1"] = Tensor({d});
    p["g.w2"] = eye;
    p["g.b2"] = Tensor({d});
    return p;
}

}  // namespace

TEST_CASE("region encoder output rows are unit length") {
    ModelConfig cfg;
    cfg.d_region = 8;
    cfg.hidden = 16;
    cfg.embed_dim = 8;
    cfg.out_dim = 8;
    cfg.vocab_size = 4;
    ParamStore params = init_params(cfg, 7);

    Rng rng(99);
    Tensor feats({5, 8});
    for (double& v : feats.data) v = rng.uniform(-1.0, 1.0);

    Tape tape;
    ParamNodes nodes = register_params(params, tape);
    const Tensor& out =
        tape.value(encode_region(nodes, tape.input(feats), tape));
    for (std::size_t i = 0; i < out.rows(); ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < out.cols(); ++j) sq += out.at(i, j) * out.at(i, j);
        CHECK(std::sqrt(sq) == Catch::Approx(1.0).margin(1e-9));
    }
}

TEST_CASE("region encoder is invariant to positive input scaling with zero biases") {
    ModelConfig cfg;
    cfg.d_region = 6;
    cfg.hidden = 10;
    cfg.embed_dim = 6;
    cfg.out_dim = 6;
    cfg.vocab_size = 4;
    ParamStore params = init_params(cfg, 11);  // biases initialize to zero

    Rng rng(5);
    Tensor feats({3, 6});
    for (double& v : feats.data) v = rng.uniform(-1.0, 1.0);
    Tensor scaled = feats;
    for (double& v : scaled.data) v *= 3.0;

    Tape tape;
    ParamNodes nodes = register_params(params, tape);
    const Tensor& a = tape.value(encode_region(nodes, tape.input(feats), tape));
    const Tensor& b = tape.value(encode_region(nodes, tape.input(scaled), tape));
    for (std::size_t i = 0; i < a.numel(); ++i)
        CHECK(a.data[i] == Catch::Approx(b.data[i]).margin(1e-12));
}

TEST_CASE("two-layer identity pass reduces to plain normalization") {
    ParamStore params = identity_params(2);
    Tape tape;
    ParamNodes nodes = register_params(params, tape);
    NodeId enc = encode_region(nodes, tape.input(Tensor::matrix(1, 2, {3.0, 4.0})),
                               tape);
    const Tensor& out = tape.value(enc);
    CHECK(out.data[0] == Catch::Approx(0.6).epsilon(1e-12));
    CHECK(out.data[1] == Catch::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("phrase max-pooling behaves like elementwise max over tokens") {
    ParamStore params = identity_params(3);
    // Embedding rows: row 1 dominates row 2 elementwise.
    params["g.embed"] = Tensor::matrix(4, 3, {
        0.0, 0.0, 0.0,    // OOV
        0.9, 0.8, 0.7,    // t1
        0.1, 0.2, 0.3,    // t2
        0.5, 0.5, 0.5,
    });

    Tape tape;
    ParamNodes nodes = register_params(params, tape);

    PhraseSet phrases;
    phrases.token_ids = {{1}, {1, 2}, {1, 1}, {2, 3}};
    phrases.token_strings = {{"a"}, {"a", "b"}, {"a", "a"}, {"b", "c"}};
    const Tensor& enc = tape.value(encode_phrase(nodes, phrases, tape));

    // dominated token and duplicate token leave the encoding unchanged
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(enc.at(1, j) == enc.at(0, j));
        CHECK(enc.at(2, j) == enc.at(0, j));
    }
    // phrase {t2, t3}: row 3 dominates row 2 elementwise, so pooling
    // reduces to the single-token phrase {t3}
    Tape t2;
    ParamNodes n2 = register_params(params, t2);
    PhraseSet only3;
    only3.token_ids = {{3}};
    only3.token_strings = {{"c"}};
    const Tensor& enc3 = t2.value(encode_phrase(n2, only3, t2));
    for (std::size_t j = 0; j < 3; ++j)
        CHECK(enc.at(3, j) == Catch::Approx(enc3.at(0, j)).margin(1e-12));
}

TEST_CASE("region-phrase score is the cosine of the two encodings") {
    Tape tape;
    NodeId f = tape.input(Tensor::matrix(2, 3, {1.0, 0.0, 0.0,
                                                0.0, 1.0, 0.0}));
    NodeId g = tape.input(Tensor::matrix(1, 3, {1.0, 0.0, 0.0}));
    const Tensor& s = tape.value(score_region_phrase(f, g, tape));
    CHECK(s.at(0, 0) == 1.0);  // identical unit vectors
    CHECK(s.at(0, 1) == 0.0);  // orthogonal

    Tape t2;
    NodeId f2 = t2.input(Tensor::matrix(1, 3, {0.6, 0.8, 0.0}));
    NodeId g2 = t2.input(Tensor::matrix(1, 3, {0.8, 0.6, 0.0}));
    CHECK(t2.value(score_region_phrase(f2, g2, t2)).data[0] ==
          Catch::Approx(0.96).epsilon(1e-12));
}

TEST_CASE("image-sentence score sums per-phrase row maxima") {
    Tape tape;
    NodeId s = tape.input(Tensor::matrix(2, 3, {0.2, 0.9, 0.1,
                                                0.5, 0.4, 0.3}));
    CHECK(tape.value(score_image_sentence(s, tape)).data[0] == 1.4);

    Tape t1;
    NodeId one = t1.input(Tensor::matrix(1, 4, {0.3, 0.1, 0.7, 0.2}));
    CHECK(t1.value(score_image_sentence(one, t1)).data[0] == 0.7);
}

TEST_CASE("image-sentence score is asymmetric in phrases vs regions") {
    Tensor m = Tensor::matrix(2, 2, {0.9, 0.1, 0.8, 0.2});
    Tape tape;
    NodeId s = tape.input(m);
    CHECK(tape.value(score_image_sentence(s, tape)).data[0] ==
          Catch::Approx(1.7).epsilon(1e-12));
    NodeId st = tape.transpose(s);
    CHECK(tape.value(score_image_sentence(st, tape)).data[0] ==
          Catch::Approx(1.1).epsilon(1e-12));
}

TEST_CASE("image-sentence gradient reaches only argmax regions") {
    Tape tape;
    NodeId s = tape.input(Tensor::matrix(2, 3, {0.2, 0.9, 0.1,
                                                0.5, 0.4, 0.3}));
    GradMap g = tape.backprop(score_image_sentence(s, tape));
    CHECK(g.at(s).data == std::vector<double>{0, 1, 0, 1, 0, 0});
}
