#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace leanpo {

using Token = std::uint32_t;
using TokenSeq = std::vector<Token>;

struct Vocab {
  std::size_t size = 32;
  Token bos = 0;
  Token eos = 1;
  Token sep = 2;
  Token hint_open = 3;
  Token hint_close = 4;
  // A plain vocabulary has no control tokens: nothing is reserved, sampling
  // never stops early, and token 0 stands in as the start-of-sequence id.
  bool control_tokens = true;

  static Vocab plain(std::size_t n) {
    Vocab v;
    v.size = n;
    v.control_tokens = false;
    return v;
  }

  bool is_reserved(Token t) const {
    return control_tokens && (t == bos || t == eos || t == sep || t == hint_open || t == hint_close);
  }

  // Throws InvalidInput if reserved ids collide or exceed size.
  void validate() const;
  // Throws InvalidInput naming `what` if any token is out of range.
  void check(const TokenSeq& seq, const std::string& what) const;

  bool operator==(const Vocab&) const = default;
};

TokenSeq concat(std::initializer_list<const TokenSeq*> parts);
TokenSeq strip_reserved(const Vocab& vocab, const TokenSeq& seq);
std::string to_string(const TokenSeq& seq);

}  // namespace leanpo
