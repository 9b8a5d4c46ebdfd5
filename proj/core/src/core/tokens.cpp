#include "subaudit/core/tokens.hpp"

#include <algorithm>

#include "subaudit/core/error.hpp"

namespace subaudit {

TokenSequence pad_to_length(const TokenSequence& seq, std::size_t length) {
  if (seq.size() > length) {
    throw Error(ErrorCode::kLengthOverflow, "sequence of length " + std::to_string(seq.size()) +
                                                " exceeds target length " + std::to_string(length));
  }
  TokenSequence out = seq;
  out.resize(length, kPad);
  return out;
}

bool pad_is_suffix(std::span<const TokenId> seq) {
  auto first_pad = std::find(seq.begin(), seq.end(), kPad);
  return std::all_of(first_pad, seq.end(), [](TokenId t) { return t == kPad; });
}

void check_vocab(std::span<const TokenId> seq, std::size_t vocab) {
  for (TokenId t : seq) {
    if (t >= vocab) {
      throw Error(ErrorCode::kInput,
                  "token id " + std::to_string(t) + " outside vocabulary of size " + std::to_string(vocab));
    }
  }
}

bool contains_subsequence(std::span<const TokenId> haystack, std::span<const TokenId> needle) {
  if (needle.empty()) return true;
  return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) != haystack.end();
}

std::string render_tokens(std::span<const TokenId> seq) {
  std::string out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i) out += ' ';
    out += '<';
    out += std::to_string(seq[i]);
    out += '>';
  }
  return out;
}

}  // namespace subaudit
