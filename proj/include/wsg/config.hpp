// SPDX-License-Identifier: Apache-2.0
//
// Flat INI-style experiment configuration. Unknown keys, duplicate keys, and
// out-of-range values are hard errors with line numbers, so typos cannot
// silently fall back to defaults.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "wsg/losses.hpp"
#include "wsg/synth.hpp"
#include "wsg/taxonomy.hpp"
#include "wsg/tensor.hpp"
#include "wsg/trainer.hpp"

namespace wsg {

struct ExperimentConfig {
    WorldSpec world;
    TrainConfig train;  // train.loss carries the LossConfig
    std::uint64_t gen_seed = 1;
};

namespace config_detail {

struct RawEntry {
    std::string value;
    std::size_t line;
};

inline double parse_real(const std::string& v, const std::string& where,
                         std::size_t line) {
    std::size_t used = 0;
    double out;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        throw WsgError("config: bad number for " + where + " at line " +
                       std::to_string(line));
    }
    if (used != v.size())
        throw WsgError("config: bad number for " + where + " at line " +
                       std::to_string(line));
    return out;
}

inline std::uint64_t parse_uint(const std::string& v, const std::string& where,
                                std::size_t line) {
    for (char c : v)
        if (c < '0' || c > '9')
            throw WsgError("config: bad integer for " + where + " at line " +
                           std::to_string(line));
    if (v.empty())
        throw WsgError("config: bad integer for " + where + " at line " +
                       std::to_string(line));
    return std::stoull(v);
}

}  // namespace config_detail

inline ExperimentConfig parse_config_text(const std::string& text) {
    using config_detail::RawEntry;
    std::map<std::string, RawEntry> entries;  // "section.key" -> value
    {
        std::istringstream in(text);
        std::string line, section;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::string t = trim(line);
            if (t.empty() || t[0] == '#' || t[0] == ';') continue;
            if (t.front() == '[' && t.back() == ']') {
                section = lower_ascii(t.substr(1, t.size() - 2));
                continue;
            }
            const std::size_t eq = t.find('=');
            if (eq == std::string::npos)
                throw WsgError("config: expected 'key = value' at line " +
                               std::to_string(lineno));
            if (section.empty())
                throw WsgError("config: key before any [section] at line " +
                               std::to_string(lineno));
            std::string key = lower_ascii(trim(t.substr(0, eq)));
            std::string value = trim(t.substr(eq + 1));
            std::string full = section + "." + key;
            auto it = entries.find(full);
            if (it != entries.end())
                throw WsgError("config: duplicate key '" + full + "' at lines " +
                               std::to_string(it->second.line) + " and " +
                               std::to_string(lineno));
            entries[full] = {value, lineno};
        }
    }

    ExperimentConfig cfg;
    auto real_opt = [&](const char* full, double& slot, double lo, double hi) {
        auto it = entries.find(full);
        if (it == entries.end()) return;
        double v = config_detail::parse_real(it->second.value, full,
                                             it->second.line);
        if (v < lo || v > hi)
            throw WsgError("config: " + std::string(full) + " out of range [" +
                           std::to_string(lo) + ", " + std::to_string(hi) +
                           "] at line " + std::to_string(it->second.line));
        slot = v;
        entries.erase(it);
    };
    auto uint_opt = [&](const char* full, auto& slot, std::uint64_t lo,
                        std::uint64_t hi) {
        auto it = entries.find(full);
        if (it == entries.end()) return;
        std::uint64_t v = config_detail::parse_uint(it->second.value, full,
                                                    it->second.line);
        if (v < lo || v > hi)
            throw WsgError("config: " + std::string(full) + " out of range at line " +
                           std::to_string(it->second.line));
        slot = static_cast<std::remove_reference_t<decltype(slot)>>(v);
        entries.erase(it);
    };
    uint_opt("world.num_train", cfg.world.num_train, 1, 1u << 24);
    uint_opt("world.num_val", cfg.world.num_val, 0, 1u << 24);
    uint_opt("world.num_test", cfg.world.num_test, 0, 1u << 24);
    uint_opt("world.feature_dim", cfg.world.feature_dim, 48, 4096);
    uint_opt("world.proposals_per_image", cfg.world.proposals_per_image, 2, 1024);
    uint_opt("world.objects_per_image", cfg.world.objects_per_image, 1, 10);
    real_opt("world.noise_sigma", cfg.world.noise_sigma, 0.0, 100.0);
    real_opt("world.detector_confusion", cfg.world.detector_confusion, 0.0, 1.0);
    real_opt("world.class_coverage", cfg.world.class_coverage, 0.0, 1.0);
    real_opt("world.part_probability", cfg.world.part_probability, 0.0, 1.0);
    real_opt("world.canvas", cfg.world.canvas, 10.0, 1e6);
    uint_opt("world.seed", cfg.gen_seed, 0, UINT64_MAX);

    real_opt("train.learning_rate", cfg.train.learning_rate, 1e-12, 1e3);
    uint_opt("train.batch_size", cfg.train.batch_size, 2, 1u << 20);
    uint_opt("train.epochs", cfg.train.epochs, 0, 1u << 20);
    uint_opt("train.seed", cfg.train.seed, 0, UINT64_MAX);
    real_opt("train.adam_beta1", cfg.train.adam_beta1, 0.0, 1.0);
    real_opt("train.adam_beta2", cfg.train.adam_beta2, 0.0, 1.0);
    real_opt("train.adam_eps", cfg.train.adam_eps, 0.0, 1.0);
    uint_opt("train.hidden", cfg.train.hidden, 1, 1u << 16);
    uint_opt("train.embed_dim", cfg.train.embed_dim, 1, 1u << 16);
    uint_opt("train.out_dim", cfg.train.out_dim, 1, 1u << 16);

    {
        auto it = entries.find("loss.tau");
        if (it != entries.end()) {
            double v = config_detail::parse_real(it->second.value, "loss.tau",
                                                 it->second.line);
            if (!(v > 0.0))
                throw WsgError("config: [loss] tau must be positive at line " +
                               std::to_string(it->second.line));
            cfg.train.loss.tau = v;
            entries.erase(it);
        }
    }
    uint_opt("loss.lambda_a", cfg.train.loss.lambda_a, 1, 1u << 30);
    real_opt("loss.lambda_b", cfg.train.loss.lambda_b, 0.0, 1e9);
    real_opt("loss.margin_m", cfg.train.loss.margin_m, -1e9, 1e9);
    {
        auto it = entries.find("loss.variant");
        if (it != entries.end()) {
            cfg.train.loss.variant = parse_variant(it->second.value);
            entries.erase(it);
        }
    }

    if (!entries.empty()) {
        const auto& [key, entry] = *entries.begin();
        throw WsgError("config: unknown key '" + key + "' at line " +
                       std::to_string(entry.line));
    }
    cfg.world.check();
    cfg.train.check();
    return cfg;
}

inline ExperimentConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw WsgError("config: cannot open '" + path.string() + "'");
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return parse_config_text(text);
}

}  // namespace wsg
