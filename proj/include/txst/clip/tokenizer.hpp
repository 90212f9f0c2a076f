#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace txst::clip {

/// Byte-level BPE tokenizer compatible with the CLIP text encoder vocabulary
/// (49408 entries: 256 byte symbols, their end-of-word forms, 48894 merges and
/// two special tokens).
///
/// Text is cleaned by collapsing whitespace and lower-casing ASCII. Word
/// splitting follows the reference pattern: contractions, runs of letters,
/// single digits, and runs of other non-space characters. Code points above
/// U+007F are treated as letters.
class BpeTokenizer {
 public:
  static constexpr std::int64_t kContextLength = 77;

  /// Reads the gzip-compressed merges file.
  explicit BpeTokenizer(const std::filesystem::path& merges_gz);

  /// Token ids of `text` without start/end markers.
  std::vector<std::int64_t> encode(std::string_view text) const;

  /// [start] + encode(text) + [end], zero padded to `context_length`.
  /// Throws PromptTooLong when the sequence does not fit.
  std::vector<std::int64_t> tokenize(std::string_view text, std::int64_t context_length = kContextLength) const;

  std::string decode(const std::vector<std::int64_t>& ids) const;

  std::int64_t vocab_size() const { return static_cast<std::int64_t>(vocab_.size()); }
  std::int64_t start_token() const { return start_id_; }
  std::int64_t end_token() const { return end_id_; }

 private:
  std::vector<std::string> bpe(const std::string& word) const;

  std::vector<std::string> vocab_;
  std::unordered_map<std::string, std::int64_t> encoder_;
  std::map<std::pair<std::string, std::string>, std::int64_t> ranks_;
  std::vector<std::string> byte_encoder_;
  std::unordered_map<std::string, std::uint8_t> byte_decoder_;
  std::int64_t start_id_ = 0;
  std::int64_t end_id_ = 0;
};

}  // namespace txst::clip
