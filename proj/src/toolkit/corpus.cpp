// SPDX-License-Identifier: Apache-2.0
#include "layerlens/toolkit/corpus.hpp"

#include <cmath>
#include <fstream>

#include "layerlens/error.hpp"

namespace layerlens::toolkit {

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        out.push_back(std::move(line));
    }
    return out;
}

void write_lines(std::span<const std::string> lines, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    for (const auto& l : lines) out << l << '\n';
}

std::vector<TokenSequence> encode_lines(const Vocabulary& vocab, std::span<const std::string> lines,
                                        std::size_t max_seq_len) {
    std::vector<TokenSequence> out;
    out.reserve(lines.size());
    for (const auto& l : lines) out.push_back(vocab.encode(l, max_seq_len));
    return out;
}

PreparedCorpus prepare_corpus(std::span<const std::string> lines, std::size_t vocab_max_size,
                              std::size_t max_seq_len, double eval_fraction) {
    if (!(eval_fraction >= 0.0 && eval_fraction < 1.0)) throw ConfigError("eval fraction must lie in [0, 1)");
    const auto n_eval = static_cast<std::size_t>(std::llround(eval_fraction * static_cast<double>(lines.size())));
    const auto train_lines = lines.first(lines.size() - n_eval);
    PreparedCorpus out{Vocabulary::build(train_lines, vocab_max_size), {}, {}};
    out.train = encode_lines(out.vocab, train_lines, max_seq_len);
    out.eval = encode_lines(out.vocab, lines.last(n_eval), max_seq_len);
    return out;
}

}  // namespace layerlens::toolkit
