// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

namespace layerlens {

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;

// Reserved ids shared by the vocabulary, the model and the masking policy.
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kCls = 2;
inline constexpr TokenId kSep = 3;
inline constexpr TokenId kMask = 4;
inline constexpr TokenId kFirstContentId = 5;

inline constexpr bool is_special(TokenId id) { return id >= 0 && id < kFirstContentId; }

}  // namespace layerlens
