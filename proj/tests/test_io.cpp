// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <filesystem>
#include <fstream>

#include "wsg/config.hpp"
#include "wsg/serialize.hpp"
#include "wsg/synth.hpp"

using namespace wsg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("wsg_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

void corrupt_byte(const fs::path& p, std::size_t offset) {
    std::string bytes = slurp(p);
    REQUIRE(offset < bytes.size());
    bytes[offset] = static_cast<char>(bytes[offset] ^ 0x01);
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

GeneratedWorld tiny_world() {
    WorldSpec spec;
    spec.num_train = 6;
    spec.num_val = 2;
    spec.num_test = 3;
    spec.feature_dim = 48;
    spec.proposals_per_image = 8;
    spec.objects_per_image = 2;
    return generate(spec, 123);
}

}  // namespace

TEST_CASE("checkpoints round-trip bit-for-bit") {
    TempDir dir;
    const fs::path path = dir.path / "model.ckpt";

    ParamStore params;
    params["f.w1"] = Tensor::matrix(2, 3, {0.1, -0.2, 0.3, 1e-300, 2e17, -0.0});
    params["stats.mean"] = Tensor::vec({1.5, 2.5});
    params["a"] = Tensor::scalar(42.0);
    save_checkpoint(params, path);

    ParamStore loaded = load_checkpoint(path);
    REQUIRE(loaded.size() == 3);
    for (const auto& [name, t] : params) {
        REQUIRE(loaded.count(name) == 1);
        CHECK(loaded.at(name).shape == t.shape);
        CHECK(loaded.at(name).data == t.data);
    }

    // a second save of the loaded store produces identical bytes
    const fs::path path2 = dir.path / "model2.ckpt";
    save_checkpoint(loaded, path2);
    CHECK(slurp(path) == slurp(path2));
    // no temp file left behind
    CHECK_FALSE(fs::exists(path.string() + ".tmp"));
}

TEST_CASE("checkpoint corruption and format errors are distinct") {
    TempDir dir;
    const fs::path path = dir.path / "model.ckpt";
    ParamStore params;
    params["w"] = Tensor::vec({1.0, 2.0, 3.0});
    save_checkpoint(params, path);

    SECTION("payload byte flip -> checksum error") {
        corrupt_byte(path, 20);
        CHECK_THROWS_WITH(load_checkpoint(path),
                          Catch::Matchers::ContainsSubstring("checksum"));
    }
    SECTION("magic flip -> magic error") {
        corrupt_byte(path, 0);
        CHECK_THROWS_WITH(load_checkpoint(path),
                          Catch::Matchers::ContainsSubstring("bad magic"));
    }
    SECTION("truncation -> truncated error") {
        std::string bytes = slurp(path);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), 10);
        out.close();
        CHECK_THROWS_WITH(load_checkpoint(path),
                          Catch::Matchers::ContainsSubstring("truncated"));
    }
    SECTION("dataset magic on a checkpoint path -> magic error") {
        GeneratedWorld world = tiny_world();
        save_dataset(world.dataset, path);
        CHECK_THROWS_WITH(load_checkpoint(path),
                          Catch::Matchers::ContainsSubstring("bad magic"));
    }
}

TEST_CASE("datasets round-trip including hidden supervision") {
    TempDir dir;
    const fs::path path = dir.path / "world.ds";
    GeneratedWorld world = tiny_world();
    save_dataset(world.dataset, path);

    GroundingDataset loaded = load_dataset(path);
    CHECK(loaded.taxonomy_text == world.dataset.taxonomy_text);
    CHECK(loaded.feature_dim == world.dataset.feature_dim);
    CHECK(loaded.num_detector_classes == world.dataset.num_detector_classes);
    CHECK(loaded.standardized == world.dataset.standardized);
    REQUIRE(loaded.images.size() == world.dataset.images.size());
    REQUIRE(loaded.sentences.size() == world.dataset.sentences.size());
    CHECK(loaded.has_posteriors());

    for (std::size_t i = 0; i < loaded.images.size(); ++i) {
        const auto& a = world.dataset.images[i];
        const auto& b = loaded.images[i];
        CHECK(a.split == b.split);
        CHECK(a.regions.count() == b.regions.count());
        // storage is f32; loaded values are the quantized originals
        for (std::size_t k = 0; k < a.regions.features.numel(); ++k)
            CHECK(b.regions.features.data[k] ==
                  static_cast<double>(
                      static_cast<float>(a.regions.features.data[k])));
        CHECK(a.hidden_labels.size() == b.hidden_labels.size());
        for (std::size_t l = 0; l < a.hidden_labels.size(); ++l) {
            CHECK(a.hidden_labels[l].class_id == b.hidden_labels[l].class_id);
            CHECK(a.hidden_labels[l].attr_id == b.hidden_labels[l].attr_id);
        }
        CHECK_NOTHROW(b.posterior->check(1e-6));
    }
    for (std::size_t j = 0; j < loaded.sentences.size(); ++j) {
        CHECK(loaded.sentences[j].phrases.token_strings ==
              world.dataset.sentences[j].phrases.token_strings);
        CHECK(loaded.sentences[j].gt_boxes.size() ==
              world.dataset.sentences[j].gt_boxes.size());
    }

    // save(load(x)) is a fixed point: bytes identical from then on
    const fs::path path2 = dir.path / "world2.ds";
    save_dataset(loaded, path2);
    CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("posterior stripping survives the round trip") {
    TempDir dir;
    const fs::path path = dir.path / "world.ds";
    GeneratedWorld world = tiny_world();
    strip_posteriors(world.dataset);
    save_dataset(world.dataset, path);
    GroundingDataset loaded = load_dataset(path);
    CHECK_FALSE(loaded.has_posteriors());
    // hidden ground truth still present for evaluation
    CHECK(loaded.sentences[0].gt_boxes.size() ==
          loaded.sentences[0].phrases.count());
}

TEST_CASE("dataset corruption is detected") {
    TempDir dir;
    const fs::path path = dir.path / "world.ds";
    save_dataset(tiny_world().dataset, path);
    corrupt_byte(path, slurp(path).size() / 2);
    CHECK_THROWS_WITH(load_dataset(path),
                      Catch::Matchers::ContainsSubstring("checksum"));
}

TEST_CASE("empty config text yields the documented defaults") {
    ExperimentConfig cfg = parse_config_text("");
    CHECK(cfg.train.learning_rate == 1e-4);
    CHECK(cfg.train.batch_size == 32);
    CHECK(cfg.train.loss.tau == 0.5);
    CHECK(cfg.train.loss.lambda_a == 200);
    CHECK(cfg.train.loss.lambda_b == 3.0);
    CHECK(cfg.train.loss.margin_m == 0.05);
    CHECK(cfg.train.loss.variant == LossVariant::NceDistill);
    CHECK(cfg.world.num_train == 600);
    CHECK(cfg.world.class_coverage == Catch::Approx(2.0 / 3.0));
}

TEST_CASE("config keys land in the right slots") {
    ExperimentConfig cfg = parse_config_text(
        "# comment\n"
        "[world]\n"
        "num_train = 100\n"
        "noise_sigma = 0.7\n"
        "seed = 9\n"
        "[train]\n"
        "learning_rate = 0.01\n"
        "batch_size = 8\n"
        "epochs = 3\n"
        "[loss]\n"
        "tau = 0.25\n"
        "variant = margin\n"
        "lambda_a = 50\n");
    CHECK(cfg.world.num_train == 100);
    CHECK(cfg.world.noise_sigma == 0.7);
    CHECK(cfg.gen_seed == 9);
    CHECK(cfg.train.learning_rate == 0.01);
    CHECK(cfg.train.batch_size == 8);
    CHECK(cfg.train.epochs == 3);
    CHECK(cfg.train.loss.tau == 0.25);
    CHECK(cfg.train.loss.variant == LossVariant::Margin);
    CHECK(cfg.train.loss.lambda_a == 50);
}

TEST_CASE("config errors are strict and carry line numbers") {
    CHECK_THROWS_WITH(parse_config_text("[loss]\ntau = -1\n"),
                      Catch::Matchers::ContainsSubstring("[loss] tau"));
    CHECK_THROWS_WITH(
        parse_config_text("[train]\nepochs = 1\nepochs = 2\n"),
        Catch::Matchers::ContainsSubstring("lines 2 and 3"));
    CHECK_THROWS_WITH(parse_config_text("[train]\nlerning_rate = 0.1\n"),
                      Catch::Matchers::ContainsSubstring("unknown key"));
    CHECK_THROWS_WITH(parse_config_text("[train]\nepochs = banana\n"),
                      Catch::Matchers::ContainsSubstring("bad integer"));
    CHECK_THROWS_WITH(parse_config_text("orphan = 1\n"),
                      Catch::Matchers::ContainsSubstring("before any"));
    CHECK_THROWS_WITH(parse_config_text("[train]\nbatch_size = 1\n"),
                      Catch::Matchers::ContainsSubstring("out of range"));
}
