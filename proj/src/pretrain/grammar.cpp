// SPDX-License-Identifier: Apache-2.0
#include "layerlens/pretrain/grammar.hpp"

#include "layerlens/numerics/rng.hpp"

namespace layerlens::pretrain {

const std::array<SyntheticGrammar::Clause, SyntheticGrammar::kClauseCount>& SyntheticGrammar::clauses() {
    static const std::array<Clause, kClauseCount> table{{
        {"cat", "chases", "ball"},  {"dog", "eats", "cheese"},  {"fox", "watches", "river"},
        {"owl", "finds", "seed"},   {"hen", "hunts", "worm"},   {"bee", "follows", "grain"},
        {"ant", "likes", "leaf"},   {"cow", "fears", "stone"},  {"pig", "bites", "apple"},
        {"rat", "greets", "bread"}, {"bat", "sees", "fish"},    {"elk", "paints", "nut"},
        {"yak", "carries", "berry"}, {"ram", "pushes", "hay"},  {"emu", "pulls", "corn"},
        {"eel", "feeds", "milk"},   {"cod", "helps", "egg"},    {"jay", "calls", "rope"},
        {"kid", "meets", "drum"},   {"man", "seeks", "kite"},   {"boy", "guards", "shoe"},
        {"girl", "lifts", "hat"},   {"king", "drops", "cup"},   {"queen", "holds", "box"},
        {"monk", "kicks", "bell"},
    }};
    return table;
}

std::vector<std::string> SyntheticGrammar::words() {
    std::vector<std::string> out;
    for (const auto& c : clauses()) out.emplace_back(c.subject);
    for (const auto& c : clauses()) out.emplace_back(c.verb);
    for (const auto& c : clauses()) out.emplace_back(c.object);
    return out;
}

std::vector<std::string> SyntheticGrammar::generate(std::size_t n, std::uint64_t seed) {
    numerics::Rng rng(seed);
    std::vector<std::string> lines;
    lines.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t count = kMinClauses + rng.uniform_index(kMaxClauses - kMinClauses + 1);
        std::string line;
        for (std::size_t c = 0; c < count; ++c) {
            const auto& clause = clauses()[rng.uniform_index(kClauseCount)];
            if (!line.empty()) line += ' ';
            line.append(clause.subject).append(" ").append(clause.verb).append(" ").append(clause.object);
        }
        lines.push_back(std::move(line));
    }
    return lines;
}

}  // namespace layerlens::pretrain
