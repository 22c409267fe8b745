// SPDX-License-Identifier: Apache-2.0
//
// Experiment driver: gen / train / eval / ablate / heatmap.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "wsg/config.hpp"
#include "wsg/eval.hpp"
#include "wsg/serialize.hpp"
#include "wsg/synth.hpp"
#include "wsg/trainer.hpp"

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw wsg::WsgError("cannot open '" + path.string() + "' for write");
    out << text;
}

// WSG_SEED wins over config and flags, so CI can sweep seeds without
// touching config files.
void apply_env_seed(std::uint64_t& seed) {
    if (const char* env = std::getenv("WSG_SEED")) {
        seed = std::stoull(env);
    }
}

int run(int argc, char** argv) {
    CLI::App app{"Weakly supervised phrase grounding experiments"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
    std::string gen_config, gen_out;
    std::uint64_t gen_seed = 0;
    bool gen_seed_set = false;
    gen->add_option("--config", gen_config, "Experiment config file")->required();
    gen->add_option("--out", gen_out, "Output dataset file")->required();
    gen->add_option("--seed", gen_seed, "Generation seed (overrides config)")
        ->each([&](const std::string&) { gen_seed_set = true; });

    // train
    auto* train_cmd = app.add_subcommand("train", "Train a model");
    std::string tr_data, tr_config, tr_out, tr_variant, tr_log;
    train_cmd->add_option("--data", tr_data, "Dataset file")->required();
    train_cmd->add_option("--config", tr_config, "Experiment config file")
        ->required();
    train_cmd->add_option("--out", tr_out, "Output checkpoint file")->required();
    train_cmd->add_option("--variant", tr_variant,
                          "margin|nce|distill|nce+distill");
    train_cmd->add_option("--log", tr_log,
                          "Metric log CSV path (default: <out>.log.csv)");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
    std::string ev_data, ev_ckpt, ev_report;
    bool ev_per_category = false;
    eval_cmd->add_option("--data", ev_data, "Dataset file")->required();
    eval_cmd->add_option("--ckpt", ev_ckpt, "Checkpoint file")->required();
    eval_cmd->add_option("--report", ev_report, "Report CSV output")->required();
    eval_cmd->add_flag("--per-category", ev_per_category,
                       "Print per-category accuracy lines");

    // ablate
    auto* abl_cmd = app.add_subcommand("ablate", "Train and evaluate all four "
                                                 "loss variants");
    std::string ab_data, ab_config, ab_out;
    abl_cmd->add_option("--data", ab_data, "Dataset file")->required();
    abl_cmd->add_option("--config", ab_config, "Experiment config file")
        ->required();
    abl_cmd->add_option("--out", ab_out, "Output directory")->required();

    // heatmap
    auto* hm_cmd = app.add_subcommand("heatmap", "Region-phrase score heatmaps");
    std::string hm_data, hm_ckpt, hm_out, hm_grid = "64x64";
    std::size_t hm_image = 0, hm_sentence = 0;
    hm_cmd->add_option("--data", hm_data, "Dataset file")->required();
    hm_cmd->add_option("--ckpt", hm_ckpt, "Checkpoint file")->required();
    hm_cmd->add_option("--image", hm_image, "Image index")->required();
    hm_cmd->add_option("--sentence", hm_sentence, "Sentence index")->required();
    hm_cmd->add_option("--out", hm_out, "Output directory")->required();
    hm_cmd->add_option("--grid", hm_grid, "Grid size HxW (default 64x64)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage errors are exit 1
    }

    if (gen->parsed()) {
        wsg::ExperimentConfig cfg = wsg::parse_config(gen_config);
        std::uint64_t seed = gen_seed_set ? gen_seed : cfg.gen_seed;
        apply_env_seed(seed);
        wsg::GeneratedWorld world = wsg::generate(cfg.world, seed);
        wsg::save_dataset(world.dataset, gen_out);
        std::cout << "wrote " << gen_out << " (" << world.dataset.images.size()
                  << " images, " << world.dataset.sentences.size()
                  << " sentences)\n";
        return 0;
    }

    if (train_cmd->parsed()) {
        wsg::ExperimentConfig cfg = wsg::parse_config(tr_config);
        if (!tr_variant.empty())
            cfg.train.loss.variant = wsg::parse_variant(tr_variant);
        apply_env_seed(cfg.train.seed);
        wsg::GroundingDataset ds = wsg::load_dataset(tr_data);
        wsg::TrainResult result = wsg::train(ds, cfg.train);
        wsg::save_checkpoint(result.params, tr_out);
        const std::string log_path =
            tr_log.empty() ? tr_out + ".log.csv" : tr_log;
        write_text(log_path, wsg::metric_log_csv(result.log));
        std::cout << "wrote " << tr_out << " and " << log_path << "\n";
        return 0;
    }

    if (eval_cmd->parsed()) {
        wsg::GroundingDataset ds = wsg::load_dataset(ev_data);
        wsg::ParamStore params = wsg::load_checkpoint(ev_ckpt);
        wsg::EvalReport report =
            wsg::evaluate_dataset(params, ds, wsg::Split::Test);
        write_text(ev_report, report.to_csv());
        std::cout.precision(17);
        std::cout << "accuracy=" << report.accuracy() << "\n";
        if (ev_per_category) {
            for (const auto& [bucket, c] : report.buckets) {
                const double acc =
                    c.total == 0 ? 0.0
                                 : static_cast<double>(c.correct) /
                                       static_cast<double>(c.total);
                std::cout << bucket << "=" << acc << " (" << c.correct << "/"
                          << c.total << ")\n";
            }
        }
        return 0;
    }

    if (abl_cmd->parsed()) {
        wsg::ExperimentConfig cfg = wsg::parse_config(ab_config);
        apply_env_seed(cfg.train.seed);
        wsg::GroundingDataset ds = wsg::load_dataset(ab_data);
        fs::create_directories(ab_out);
        auto rows = wsg::ablate(ds, cfg.train);
        write_text(fs::path(ab_out) / "ablation.csv", wsg::ablation_csv(rows));
        for (const auto& row : rows)
            write_text(fs::path(ab_out) /
                           (std::string(wsg::variant_name(row.variant)) + ".csv"),
                       row.report.to_csv());
        std::cout << "wrote " << (fs::path(ab_out) / "ablation.csv").string()
                  << "\n";
        return 0;
    }

    if (hm_cmd->parsed()) {
        const std::size_t x = hm_grid.find('x');
        if (x == std::string::npos)
            throw wsg::WsgError("heatmap: --grid expects HxW");
        const std::size_t H = std::stoull(hm_grid.substr(0, x));
        const std::size_t W = std::stoull(hm_grid.substr(x + 1));
        wsg::GroundingDataset ds = wsg::load_dataset(hm_data);
        wsg::ParamStore params = wsg::load_checkpoint(hm_ckpt);
        if (hm_image >= ds.images.size())
            throw wsg::WsgError("heatmap: image index out of range");
        if (hm_sentence >= ds.sentences.size())
            throw wsg::WsgError("heatmap: sentence index out of range");
        wsg::apply_vocab(ds, wsg::build_vocab(ds));
        const auto& phrases = ds.sentences[hm_sentence].phrases;
        fs::create_directories(hm_out);
        for (std::size_t k = 0; k < phrases.count(); ++k) {
            wsg::Heatmap hm = wsg::heatmap(params,
                                           ds.images[hm_image].regions, phrases,
                                           k, H, W, 100.0, 100.0,
                                           ds.standardized);
            write_text(fs::path(hm_out) /
                           ("phrase_" + std::to_string(k) + ".pgm"),
                       wsg::heatmap_to_pgm(hm));
        }
        std::cout << "wrote " << phrases.count() << " heatmaps to " << hm_out
                  << "\n";
        return 0;
    }

    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const wsg::WsgError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
