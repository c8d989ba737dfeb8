#include "dprobe/lm/vocab.hpp"

#include <algorithm>

#include "dprobe/errors.hpp"

namespace dprobe::lm {

Vocab Vocab::standard() {
  std::vector<std::string> s;
  for (char c = '0'; c <= '9'; ++c) s.emplace_back(1, c);
  for (const char* sym : {"*", "=", ".", " "}) s.emplace_back(sym);
  s.emplace_back(kEndSymbol);
  s.emplace_back(kPadSymbol);
  return Vocab(std::move(s));
}

Vocab::Vocab(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
  char_to_id_.fill(-1);
  digit_ids_.fill(-1);
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    const auto& sym = symbols_[i];
    const auto id = static_cast<TokenId>(i);
    if (sym.empty()) throw VocabularyError("empty symbol at id " + std::to_string(i));
    if (sym == kEndSymbol) {
      end_id_ = id;
      continue;
    }
    if (sym == kPadSymbol) {
      pad_id_ = id;
      continue;
    }
    const bool has_digit = std::any_of(sym.begin(), sym.end(), [](char c) { return c >= '0' && c <= '9'; });
    if (has_digit && sym.size() != 1) {
      throw VocabularyError("symbol \"" + sym + "\" mixes a digit with other characters");
    }
    if (sym.size() != 1) throw VocabularyError("text symbols must be single characters, got \"" + sym + "\"");
    const auto c = static_cast<unsigned char>(sym[0]);
    if (char_to_id_[c] != -1) throw VocabularyError("duplicate symbol \"" + sym + "\"");
    char_to_id_[c] = id;
    if (has_digit) digit_ids_[static_cast<std::size_t>(sym[0] - '0')] = id;
  }
  for (std::size_t d = 0; d < 10; ++d) {
    if (digit_ids_[d] == -1) throw VocabularyError("digit " + std::to_string(d) + " has no token");
  }
  if (end_id_ == -1 || pad_id_ == -1) throw VocabularyError("vocabulary needs <end> and <pad>");
}

const std::string& Vocab::symbol(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= symbols_.size()) {
    throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of " +
                          std::to_string(symbols_.size()));
  }
  return symbols_[static_cast<std::size_t>(id)];
}

std::optional<unsigned> Vocab::digit_of(TokenId id) const {
  for (unsigned d = 0; d < 10; ++d) {
    if (digit_ids_[d] == id) return d;
  }
  return std::nullopt;
}

std::vector<TokenId> Vocab::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  ids.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const TokenId id = char_to_id_[static_cast<unsigned char>(text[i])];
    if (id == -1) {
      throw VocabularyError("character '" + std::string(1, text[i]) + "' at offset " + std::to_string(i) +
                            " is not in the vocabulary");
    }
    ids.push_back(id);
  }
  return ids;
}

std::string Vocab::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (auto id : ids) out += symbol(id);
  return out;
}

}  // namespace dprobe::lm
