#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dprobe::lm {

using TokenId = int;

// Ordered token list. Single-character symbols map one-to-one onto text;
// END and PAD are markers with no text form.
class Vocab {
 public:
  static constexpr std::string_view kEndSymbol = "<end>";
  static constexpr std::string_view kPadSymbol = "<pad>";

  // "0".."9", "*", "=", ".", " ", <end>, <pad>
  static Vocab standard();

  // Throws VocabularyError unless every digit is its own token, no other
  // symbol contains a digit, and END/PAD are present.
  explicit Vocab(std::vector<std::string> symbols);

  std::size_t size() const noexcept { return symbols_.size(); }
  const std::vector<std::string>& symbols() const noexcept { return symbols_; }
  const std::string& symbol(TokenId id) const;

  TokenId end_id() const noexcept { return end_id_; }
  TokenId pad_id() const noexcept { return pad_id_; }
  TokenId digit_id(unsigned digit) const { return digit_ids_.at(digit); }
  // Digit value of a token, if it is one of the ten digit tokens.
  std::optional<unsigned> digit_of(TokenId id) const;

  std::vector<TokenId> encode(std::string_view text) const;
  // END and PAD decode to their marker symbols.
  std::string decode(std::span<const TokenId> ids) const;

  friend bool operator==(const Vocab&, const Vocab&) = default;

 private:
  std::vector<std::string> symbols_;
  std::array<TokenId, 256> char_to_id_{};
  std::array<TokenId, 10> digit_ids_{};
  TokenId end_id_ = -1;
  TokenId pad_id_ = -1;
};

}  // namespace dprobe::lm
