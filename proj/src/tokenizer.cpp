#include "txst/clip/tokenizer.hpp"

#include <algorithm>
#include <limits>
#include <set>
#include <sstream>

#include <zlib.h>

#include "txst/errors.hpp"

namespace txst::clip {
namespace {

constexpr std::size_t kMergeCount = 49152 - 256 - 2;

std::string read_gzip(const std::filesystem::path& path) {
  gzFile file = gzopen(path.string().c_str(), "rb");
  if (file == nullptr) throw Error("cannot open BPE vocabulary " + path.string());
  std::string out;
  char buf[1 << 16];
  int n = 0;
  while ((n = gzread(file, buf, sizeof(buf))) > 0) out.append(buf, static_cast<std::size_t>(n));
  gzclose(file);
  if (n < 0) throw Error("corrupt BPE vocabulary " + path.string());
  return out;
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// Reversible map from bytes to printable code points.
std::vector<std::string> make_byte_encoder() {
  std::vector<int> bs;
  for (int b = '!'; b <= '~'; ++b) bs.push_back(b);
  for (int b = 0xA1; b <= 0xAC; ++b) bs.push_back(b);
  for (int b = 0xAE; b <= 0xFF; ++b) bs.push_back(b);
  std::vector<int> cs = bs;
  int n = 0;
  for (int b = 0; b < 256; ++b) {
    if (std::find(bs.begin(), bs.end(), b) == bs.end()) {
      bs.push_back(b);
      cs.push_back(256 + n++);
    }
  }
  std::vector<std::string> table(256);
  for (std::size_t i = 0; i < bs.size(); ++i) append_utf8(table[static_cast<std::size_t>(bs[i])], cs[i]);
  return table;
}

std::uint32_t first_code_point(const std::string& s) {
  const auto c = static_cast<unsigned char>(s[0]);
  if (c < 0x80) return c;
  return ((c & 0x1Fu) << 6) | (static_cast<unsigned char>(s[1]) & 0x3Fu);
}

// Splits a UTF-8 string into code-point-sized substrings.
std::vector<std::string> utf8_chars(const std::string& s) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : 4;
    len = std::min(len, s.size() - i);
    out.push_back(s.substr(i, len));
    i += len;
  }
  return out;
}

enum class CharClass { kSpace, kLetter, kDigit, kOther };

CharClass classify(unsigned char c) {
  if (c >= 0x80) return CharClass::kLetter;
  if (std::isspace(c)) return CharClass::kSpace;
  if (std::isalpha(c)) return CharClass::kLetter;
  if (std::isdigit(c)) return CharClass::kDigit;
  return CharClass::kOther;
}

std::string clean(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
  }
  return out;
}

std::vector<std::string> split_words(const std::string& text) {
  static const char* kContractions[] = {"'s", "'t", "'re", "'ve", "'m", "'ll", "'d"};
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (c == '\'') {
      bool matched = false;
      for (const char* suffix : kContractions) {
        const std::string_view sv(suffix);
        if (text.compare(i, sv.size(), sv) == 0) {
          words.emplace_back(sv);
          i += sv.size();
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    const auto cls = classify(c);
    if (cls == CharClass::kSpace) {
      ++i;
      continue;
    }
    if (cls == CharClass::kDigit) {
      words.push_back(text.substr(i, 1));
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < text.size() && classify(static_cast<unsigned char>(text[j])) == cls) ++j;
    words.push_back(text.substr(i, j - i));
    i = j;
  }
  return words;
}

}  // namespace

BpeTokenizer::BpeTokenizer(const std::filesystem::path& merges_gz) : byte_encoder_(make_byte_encoder()) {
  const auto text = read_gzip(merges_gz);
  std::istringstream lines(text);
  std::string line;
  std::getline(lines, line);  // version header
  std::vector<std::pair<std::string, std::string>> merges;
  merges.reserve(kMergeCount);
  while (merges.size() < kMergeCount && std::getline(lines, line)) {
    const auto space = line.find(' ');
    if (space == std::string::npos) throw Error("malformed BPE merge line: " + line);
    merges.emplace_back(line.substr(0, space), line.substr(space + 1));
  }
  if (merges.size() != kMergeCount) throw Error("BPE vocabulary has too few merges");

  // Base symbols are ordered by code point, which is the order the byte map assigns them.
  std::vector<std::string> base = byte_encoder_;
  std::sort(base.begin(), base.end(), [](const std::string& a, const std::string& b) {
    return first_code_point(a) < first_code_point(b);
  });
  for (const auto& sym : base) vocab_.push_back(sym);
  for (const auto& sym : base) vocab_.push_back(sym + "</w>");
  for (std::size_t r = 0; r < merges.size(); ++r) {
    vocab_.push_back(merges[r].first + merges[r].second);
    ranks_.emplace(merges[r], static_cast<std::int64_t>(r));
  }
  vocab_.push_back("<|startoftext|>");
  vocab_.push_back("<|endoftext|>");
  for (std::size_t i = 0; i < vocab_.size(); ++i) encoder_.emplace(vocab_[i], static_cast<std::int64_t>(i));
  start_id_ = encoder_.at("<|startoftext|>");
  end_id_ = encoder_.at("<|endoftext|>");
  for (std::size_t b = 0; b < byte_encoder_.size(); ++b) byte_decoder_[byte_encoder_[b]] = static_cast<std::uint8_t>(b);
}

std::vector<std::string> BpeTokenizer::bpe(const std::string& token) const {
  auto word = utf8_chars(token);
  if (word.empty()) return {};
  word.back() += "</w>";
  while (word.size() > 1) {
    std::int64_t best_rank = std::numeric_limits<std::int64_t>::max();
    std::size_t best = 0;
    for (std::size_t i = 0; i + 1 < word.size(); ++i) {
      auto it = ranks_.find({word[i], word[i + 1]});
      if (it != ranks_.end() && it->second < best_rank) {
        best_rank = it->second;
        best = i;
      }
    }
    if (best_rank == std::numeric_limits<std::int64_t>::max()) break;
    const std::string first = word[best];
    const std::string second = word[best + 1];
    std::vector<std::string> merged;
    merged.reserve(word.size());
    for (std::size_t i = 0; i < word.size();) {
      if (i + 1 < word.size() && word[i] == first && word[i + 1] == second) {
        merged.push_back(first + second);
        i += 2;
      } else {
        merged.push_back(word[i]);
        ++i;
      }
    }
    word = std::move(merged);
  }
  return word;
}

std::vector<std::int64_t> BpeTokenizer::encode(std::string_view text) const {
  std::vector<std::int64_t> ids;
  for (const auto& word : split_words(clean(text))) {
    std::string mapped;
    for (unsigned char b : word) mapped += byte_encoder_[b];
    for (const auto& piece : bpe(mapped)) ids.push_back(encoder_.at(piece));
  }
  return ids;
}

std::vector<std::int64_t> BpeTokenizer::tokenize(std::string_view text, std::int64_t context_length) const {
  std::vector<std::int64_t> ids{start_id_};
  const auto body = encode(text);
  ids.insert(ids.end(), body.begin(), body.end());
  ids.push_back(end_id_);
  if (static_cast<std::int64_t>(ids.size()) > context_length) {
    throw PromptTooLong(ids.size(), static_cast<std::size_t>(context_length));
  }
  ids.resize(static_cast<std::size_t>(context_length), 0);
  return ids;
}

std::string BpeTokenizer::decode(const std::vector<std::int64_t>& ids) const {
  std::string symbols;
  for (auto id : ids) {
    if (id == start_id_ || id == end_id_) continue;
    symbols += vocab_.at(static_cast<std::size_t>(id));
  }
  std::string out;
  const std::string eow = "</w>";
  for (std::size_t i = 0; i < symbols.size();) {
    if (symbols.compare(i, eow.size(), eow) == 0) {
      out.push_back(' ');
      i += eow.size();
      continue;
    }
    const auto c = static_cast<unsigned char>(symbols[i]);
    std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : 3;
    out.push_back(static_cast<char>(byte_decoder_.at(symbols.substr(i, len))));
    i += len;
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

}  // namespace txst::clip
