// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "layerlens/tokens.hpp"

namespace layerlens::toolkit {

std::vector<std::string> split_whitespace(std::string_view text);

/// [CLS] ids [SEP], keeping at most max_seq_len ids.
TokenSequence frame_single(std::span<const TokenId> ids, std::size_t max_seq_len);

/// [CLS] a [SEP] b [SEP]. When too long, the tail of the longer segment is
/// dropped one token at a time (the second segment on ties).
TokenSequence frame_pair(std::span<const TokenId> a, std::span<const TokenId> b, std::size_t max_seq_len);

/// Number of ids of `a` that survive frame_pair(a, b, max_seq_len).
std::size_t framed_first_length(std::size_t a_len, std::size_t b_len, std::size_t max_seq_len);

/// Word-level vocabulary. Ids 0..4 are [PAD], [UNK], [CLS], [SEP], [MASK].
class Vocabulary {
public:
    static const std::vector<std::string>& reserved_tokens();

    /// Only the reserved tokens.
    Vocabulary();

    /// Tokens listed by id, reserved ones first. Throws DataError when the
    /// list is not a valid vocabulary.
    explicit Vocabulary(std::vector<std::string> tokens);

    /// The max_size - 5 most frequent whitespace tokens; equal counts are
    /// ordered lexicographically.
    static Vocabulary build(std::span<const std::string> corpus, std::size_t max_size);

    std::size_t size() const noexcept { return tokens_.size(); }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

    /// [UNK] for unseen tokens.
    TokenId id(std::string_view token) const;
    const std::string& token(TokenId id) const;

    /// Word ids without any framing.
    TokenSequence ids(std::string_view text) const;

    /// frame_single over the words of `text`.
    TokenSequence encode(std::string_view text, std::size_t max_seq_len) const;

    /// frame_pair over the words of `a` and `b`.
    TokenSequence encode_pair(std::string_view a, std::string_view b, std::size_t max_seq_len) const;

    /// Token strings for an id sequence; [PAD]/[CLS]/[SEP] dropped unless
    /// `keep_special`.
    std::vector<std::string> decode(std::span<const TokenId> ids, bool keep_special = false) const;

    /// decode() joined with single spaces.
    std::string render(std::span<const TokenId> ids, bool keep_special = false) const;

    bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

}  // namespace layerlens::toolkit
