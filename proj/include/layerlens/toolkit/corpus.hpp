// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "layerlens/tokens.hpp"
#include "layerlens/toolkit/vocab.hpp"

namespace layerlens::toolkit {

/// Non-blank lines of a UTF-8 text file.
std::vector<std::string> read_lines(const std::filesystem::path& path);
void write_lines(std::span<const std::string> lines, const std::filesystem::path& path);

struct PreparedCorpus {
    Vocabulary vocab;
    std::vector<TokenSequence> train;
    std::vector<TokenSequence> eval;
};

/// Holds out the last round(eval_fraction * n) lines, builds the vocabulary
/// on the rest and encodes both parts with [CLS]/[SEP] framing.
PreparedCorpus prepare_corpus(std::span<const std::string> lines, std::size_t vocab_max_size,
                              std::size_t max_seq_len, double eval_fraction);

/// vocab.encode() applied to every line.
std::vector<TokenSequence> encode_lines(const Vocabulary& vocab, std::span<const std::string> lines,
                                        std::size_t max_seq_len);

}  // namespace layerlens::toolkit
