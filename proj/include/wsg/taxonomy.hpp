// SPDX-License-Identifier: Apache-2.0
//
// Detector-class taxonomy: lemma lookup, hypernym walk, and head-noun based
// phrase-to-class matching. Stands in for the WordNet + POS-tagger pipeline
// with a deterministic, file-driven lexicon.
#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "wsg/tensor.hpp"

namespace wsg {

inline std::string lower_ascii(std::string s) {
    for (char& c : s)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return s;
}

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

struct Taxonomy {
    // Detector classes, "background" always present.
    std::vector<std::string> classes;
    // word -> concept. Concepts need not be detector classes themselves;
    // the hypernym walk bridges the gap.
    std::map<std::string, std::string> lemmas;
    // concept -> parent concept; acyclic.
    std::map<std::string, std::string> hypernym_edges;
    // ambiguous word -> concepts in priority order.
    std::map<std::string, std::vector<std::string>> sense_priority;

    bool is_class(const std::string& name) const {
        return std::find(classes.begin(), classes.end(), name) != classes.end();
    }

    // word -> dictionary form if the word (or its trailing-s singular) is known.
    std::optional<std::string> lemma_form(const std::string& word) const {
        std::string w = lower_ascii(word);
        if (lemmas.count(w)) return w;
        if (w.size() > 1 && w.back() == 's') {
            std::string sing = w.substr(0, w.size() - 1);
            if (lemmas.count(sing)) return sing;
        }
        return std::nullopt;
    }

    // Walks hypernym edges upward from a concept until a detector class is hit.
    std::optional<std::string> resolve_to_class(std::string node) const {
        std::set<std::string> seen;
        while (true) {
            if (is_class(node) && node != "background") return node;
            if (!seen.insert(node).second) return std::nullopt;
            auto it = hypernym_edges.find(node);
            if (it == hypernym_edges.end()) return std::nullopt;
            node = it->second;
        }
    }

    void validate() const {
        if (!is_class("background"))
            throw WsgError("taxonomy: class list must include 'background'");
        for (const auto& [word, cls] : lemmas) {
            if (cls == "background")
                throw WsgError("taxonomy: 'background' may not have lemmas ('" +
                               word + "')");
        }
        // Acyclicity of the hypernym graph.
        for (const auto& [child, parent] : hypernym_edges) {
            (void)parent;
            std::set<std::string> seen;
            std::string cur = child;
            while (true) {
                if (!seen.insert(cur).second)
                    throw WsgError("taxonomy: hypernym cycle through '" + cur + "'");
                auto it = hypernym_edges.find(cur);
                if (it == hypernym_edges.end()) break;
                cur = it->second;
            }
        }
        for (const auto& [word, senses] : sense_priority) {
            auto lf = lemma_form(word);
            for (const std::string& s : senses) {
                // Each listed sense must be reachable from the word's lexicon
                // entry: either the sense itself or via its hypernym closure.
                bool reachable = lemmas.count(word) || lf.has_value() ||
                                 hypernym_edges.count(s) || is_class(s);
                if (!reachable)
                    throw WsgError("taxonomy: sense '" + s + "' for '" + word +
                                   "' is unreachable");
            }
        }
    }
};

// --------------------------------------------------------------------------
// File format: line-oriented sections [classes] / [lemmas] / [hypernyms] /
// [senses]; '#' starts a comment; everything is lowercase-folded on load.

inline Taxonomy parse_taxonomy(const std::string& text) {
    Taxonomy tax;
    std::istringstream in(text);
    std::string line;
    std::string section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        t = lower_ascii(t);
        if (t.front() == '[' && t.back() == ']') {
            section = t.substr(1, t.size() - 2);
            if (section != "classes" && section != "lemmas" &&
                section != "hypernyms" && section != "senses")
                throw WsgError("taxonomy: unknown section '" + section +
                               "' at line " + std::to_string(lineno));
            continue;
        }
        if (section == "classes") {
            tax.classes.push_back(t);
        } else if (section == "lemmas" || section == "hypernyms") {
            std::size_t arrow = t.find("->");
            if (arrow == std::string::npos)
                throw WsgError("taxonomy: expected 'a -> b' at line " +
                               std::to_string(lineno));
            std::string lhs = trim(t.substr(0, arrow));
            std::string rhs = trim(t.substr(arrow + 2));
            if (lhs.empty() || rhs.empty())
                throw WsgError("taxonomy: empty side of '->' at line " +
                               std::to_string(lineno));
            if (section == "lemmas")
                tax.lemmas[lhs] = rhs;
            else
                tax.hypernym_edges[lhs] = rhs;
        } else if (section == "senses") {
            std::size_t colon = t.find(':');
            if (colon == std::string::npos)
                throw WsgError("taxonomy: expected 'word: c1, c2' at line " +
                               std::to_string(lineno));
            std::string word = trim(t.substr(0, colon));
            std::vector<std::string> senses;
            std::istringstream rest(t.substr(colon + 1));
            std::string item;
            while (std::getline(rest, item, ',')) {
                item = trim(item);
                if (!item.empty()) senses.push_back(item);
            }
            tax.sense_priority[word] = std::move(senses);
        } else {
            throw WsgError("taxonomy: content before any section at line " +
                           std::to_string(lineno));
        }
    }
    tax.validate();
    return tax;
}

inline std::string taxonomy_to_text(const Taxonomy& tax) {
    std::ostringstream out;
    out << "[classes]\n";
    for (const auto& c : tax.classes) out << c << "\n";
    out << "[lemmas]\n";
    for (const auto& [w, c] : tax.lemmas) out << w << " -> " << c << "\n";
    out << "[hypernyms]\n";
    for (const auto& [a, b] : tax.hypernym_edges) out << a << " -> " << b << "\n";
    out << "[senses]\n";
    for (const auto& [w, ss] : tax.sense_priority) {
        out << w << ":";
        for (std::size_t i = 0; i < ss.size(); ++i)
            out << (i ? ", " : " ") << ss[i];
        out << "\n";
    }
    return out.str();
}

// --------------------------------------------------------------------------
// Matching

// Rightmost token whose lowercased lemma is in the lexicon; falls back to the
// rightmost token when nothing is known.
inline std::string head_noun(const std::vector<std::string>& phrase_tokens,
                             const Taxonomy& tax) {
    if (phrase_tokens.empty()) throw WsgError("head-noun: empty phrase");
    for (std::size_t i = phrase_tokens.size(); i-- > 0;) {
        if (tax.lemma_form(phrase_tokens[i]).has_value())
            return lower_ascii(phrase_tokens[i]);
    }
    return lower_ascii(phrase_tokens.back());
}

struct ClassPhraseMatch {
    // 1.0 on match, 0.0 otherwise; kept real-valued so graded similarity can
    // be dropped in later.
    double probability = 0.0;
    std::optional<std::string> matched_class;
};

inline ClassPhraseMatch match_phrase_class(
    const std::vector<std::string>& phrase_tokens, const Taxonomy& tax) {
    if (phrase_tokens.empty()) return {};
    const std::string head = head_noun(phrase_tokens, tax);

    auto accept = [](const std::string& cls) {
        return ClassPhraseMatch{1.0, cls};
    };

    // Direct class-name hit first.
    if (tax.is_class(head) && head != "background") return accept(head);

    auto lf = tax.lemma_form(head);
    std::string key = lf.value_or(head);

    // Ambiguous words try their senses in priority order.
    auto sit = tax.sense_priority.find(key);
    if (sit != tax.sense_priority.end()) {
        for (const std::string& sense : sit->second) {
            if (auto cls = tax.resolve_to_class(sense)) return accept(*cls);
        }
        return {};
    }

    auto lit = tax.lemmas.find(key);
    if (lit == tax.lemmas.end()) return {};
    if (auto cls = tax.resolve_to_class(lit->second)) return accept(*cls);
    return {};
}

// (matched unique phrase strings, total unique phrase strings)
inline std::pair<std::size_t, std::size_t> coverage_stats(
    const std::vector<std::vector<std::string>>& phrases, const Taxonomy& tax) {
    std::set<std::string> seen, matched;
    for (const auto& toks : phrases) {
        std::string key;
        for (const auto& t : toks) key += lower_ascii(t) + " ";
        if (!seen.insert(key).second) continue;
        if (match_phrase_class(toks, tax).matched_class) matched.insert(key);
    }
    return {matched.size(), seen.size()};
}

}  // namespace wsg
