// SPDX-License-Identifier: Apache-2.0
#include "layerlens/toolkit/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "layerlens/error.hpp"

namespace layerlens::toolkit {

std::vector<std::string> split_whitespace(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        const std::size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) out.emplace_back(text.substr(start, i - start));
    }
    return out;
}

TokenSequence frame_single(std::span<const TokenId> ids, std::size_t max_seq_len) {
    if (max_seq_len < 2) throw ConfigError("max_seq_len must leave room for [CLS] and [SEP]");
    const std::size_t keep = std::min(ids.size(), max_seq_len - 2);
    TokenSequence out;
    out.reserve(keep + 2);
    out.push_back(kCls);
    out.insert(out.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep));
    out.push_back(kSep);
    return out;
}

std::size_t framed_first_length(std::size_t a_len, std::size_t b_len, std::size_t max_seq_len) {
    if (max_seq_len < 3) throw ConfigError("max_seq_len must leave room for [CLS] and two [SEP]");
    const std::size_t budget = max_seq_len - 3;
    while (a_len + b_len > budget) {
        if (a_len > b_len) {
            --a_len;
        } else {
            --b_len;
        }
    }
    return a_len;
}

TokenSequence frame_pair(std::span<const TokenId> a, std::span<const TokenId> b, std::size_t max_seq_len) {
    const std::size_t keep_a = framed_first_length(a.size(), b.size(), max_seq_len);
    const std::size_t keep_b = std::min(b.size(), max_seq_len - 3 - keep_a);
    TokenSequence out;
    out.reserve(keep_a + keep_b + 3);
    out.push_back(kCls);
    out.insert(out.end(), a.begin(), a.begin() + static_cast<std::ptrdiff_t>(keep_a));
    out.push_back(kSep);
    out.insert(out.end(), b.begin(), b.begin() + static_cast<std::ptrdiff_t>(keep_b));
    out.push_back(kSep);
    return out;
}

const std::vector<std::string>& Vocabulary::reserved_tokens() {
    static const std::vector<std::string> reserved{"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
    return reserved;
}

Vocabulary::Vocabulary() : Vocabulary(reserved_tokens()) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    const auto& reserved = reserved_tokens();
    if (tokens_.size() < reserved.size() || !std::equal(reserved.begin(), reserved.end(), tokens_.begin())) {
        throw DataError("vocabulary must start with the five reserved tokens");
    }
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (tokens_[i].empty()) throw DataError("vocabulary token " + std::to_string(i) + " is empty");
        if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
            throw DataError("duplicate vocabulary token '" + tokens_[i] + "'");
        }
    }
}

Vocabulary Vocabulary::build(std::span<const std::string> corpus, std::size_t max_size) {
    const auto& reserved = reserved_tokens();
    if (max_size <= reserved.size()) {
        throw ConfigError("vocabulary max_size must exceed the " + std::to_string(reserved.size()) +
                          " reserved tokens");
    }
    std::map<std::string, std::size_t> counts;
    for (const auto& line : corpus) {
        for (auto& w : split_whitespace(line)) {
            if (std::find(reserved.begin(), reserved.end(), w) != reserved.end()) continue;
            ++counts[w];
        }
    }
    if (counts.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    // std::map iteration is already lexicographic; a stable sort keeps that order among equal counts.
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> tokens = reserved;
    for (const auto& [w, c] : ranked) {
        if (tokens.size() == max_size) break;
        tokens.push_back(w);
    }
    return Vocabulary(std::move(tokens));
}

TokenId Vocabulary::id(std::string_view token) const {
    const auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw RangeError("token id " + std::to_string(id) + " outside vocabulary of size " +
                         std::to_string(tokens_.size()));
    }
    return tokens_[static_cast<std::size_t>(id)];
}

TokenSequence Vocabulary::ids(std::string_view text) const {
    TokenSequence out;
    for (const auto& w : split_whitespace(text)) out.push_back(id(w));
    return out;
}

TokenSequence Vocabulary::encode(std::string_view text, std::size_t max_seq_len) const {
    return frame_single(ids(text), max_seq_len);
}

TokenSequence Vocabulary::encode_pair(std::string_view a, std::string_view b, std::size_t max_seq_len) const {
    return frame_pair(ids(a), ids(b), max_seq_len);
}

std::vector<std::string> Vocabulary::decode(std::span<const TokenId> ids, bool keep_special) const {
    std::vector<std::string> out;
    for (TokenId i : ids) {
        if (!keep_special && (i == kPad || i == kCls || i == kSep)) continue;
        out.push_back(token(i));
    }
    return out;
}

std::string Vocabulary::render(std::span<const TokenId> ids, bool keep_special) const {
    std::string out;
    for (const auto& w : decode(ids, keep_special)) {
        if (!out.empty()) out += ' ';
        out += w;
    }
    return out;
}

}  // namespace layerlens::toolkit
