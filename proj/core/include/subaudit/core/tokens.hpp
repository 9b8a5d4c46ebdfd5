#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace subaudit {

using TokenId = std::uint32_t;
using TokenSequence = std::vector<TokenId>;

inline constexpr TokenId kBos = 0;
inline constexpr TokenId kEos = 1;
inline constexpr TokenId kPad = 2;
/// First id available for ordinary content.
inline constexpr TokenId kFirstContentToken = 3;

/// Right-pads `seq` with PAD up to `length`. Throws kLengthOverflow when the
/// sequence is already longer.
TokenSequence pad_to_length(const TokenSequence& seq, std::size_t length);

/// True when PAD appears only as a contiguous suffix.
bool pad_is_suffix(std::span<const TokenId> seq);

/// Throws kInput if any id is >= vocab.
void check_vocab(std::span<const TokenId> seq, std::size_t vocab);

/// True iff `needle` occurs as a contiguous run inside `haystack`.
bool contains_subsequence(std::span<const TokenId> haystack, std::span<const TokenId> needle);

/// Debug rendering, e.g. "<0> <17> <5>".
std::string render_tokens(std::span<const TokenId> seq);

}  // namespace subaudit
