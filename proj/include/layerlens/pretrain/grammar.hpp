// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace layerlens::pretrain {

/// Toy grammar used for offline pre-training: a sentence is two to four
/// "subject verb object" clauses, and each subject always takes the same verb
/// and object. 75 content words in total.
class SyntheticGrammar {
public:
    struct Clause {
        std::string_view subject;
        std::string_view verb;
        std::string_view object;
    };

    static constexpr std::size_t kClauseCount = 25;
    static constexpr std::size_t kMinClauses = 2;
    static constexpr std::size_t kMaxClauses = 4;

    static const std::array<Clause, kClauseCount>& clauses();

    /// Every content word, subjects then verbs then objects.
    static std::vector<std::string> words();

    /// `n` whitespace-separated sentences, deterministic in `seed`.
    static std::vector<std::string> generate(std::size_t n, std::uint64_t seed);
};

}  // namespace layerlens::pretrain
