#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace iclr {

std::u32string decode_utf8(std::string_view s);
std::string encode_utf8(std::u32string_view s);
std::string encode_utf8(char32_t c);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

/// Whitespace split. Empty pieces are dropped.
std::vector<std::string> split_words(std::string_view text);
/// Joins with single spaces, skipping empty words.
std::string join_words(std::span<const std::string> words);

/// FNV-1a, 64 bit. Stable across platforms, unlike std::hash.
std::uint64_t fnv1a64(std::string_view s);

bool is_word_char(char32_t c);

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<std::string> tokenize(std::string_view text) const = 0;
};

/// Lowercases, splits on anything that is not a word character and drops
/// punctuation. Apostrophes between word characters stay inside the word.
class WordTokenizer final : public Tokenizer {
 public:
  std::vector<std::string> tokenize(std::string_view text) const override;
};

/// Greedy longest-match-first wordpiece on top of WordTokenizer.
/// Continuation pieces carry the "##" prefix; unmatched words map to [UNK].
class WordpieceTokenizer final : public Tokenizer {
 public:
  explicit WordpieceTokenizer(std::vector<std::string> vocab,
                              std::size_t max_chars_per_word = 100);
  static WordpieceTokenizer from_file(const std::filesystem::path& vocab_file);

  std::vector<std::string> tokenize(std::string_view text) const override;

 private:
  std::unordered_map<std::string, std::size_t> vocab_;
  std::size_t max_chars_;
};

/// Process-wide default tokenizer (WordTokenizer).
std::shared_ptr<const Tokenizer> default_tokenizer();

/// Shortcut for default_tokenizer()->tokenize(text).
std::vector<std::string> tokenize(std::string_view text);

}  // namespace iclr
