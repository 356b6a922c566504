#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "soda/core/domain.hpp"
#include "soda/error.hpp"

namespace soda {

/// Lowercased words split on ASCII whitespace and punctuation. Bytes >= 0x80
/// are kept as word characters so UTF-8 words survive intact.
inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (u >= 0x80 || std::isalnum(u)) {
      cur.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : ch);
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

/// Headline, body and call to action joined with single spaces.
inline std::string creative_text(const Creative& c) {
  return c.headline + " " + c.body + " " + c.call_to_action;
}

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kReserved = 3;

  Vocabulary() : tokens_{"[PAD]", "[UNK]", "[CLS]"} { reindex(); }

  explicit Vocabulary(std::vector<std::string> words, int max_size = 0) : Vocabulary() {
    max_size_ = max_size;
    for (auto& w : words) tokens_.push_back(std::move(w));
    reindex();
  }

  int size() const { return static_cast<int>(tokens_.size()); }
  int max_size() const { return max_size_; }

  int id(std::string_view word) const {
    auto it = index_.find(std::string(word));
    return it == index_.end() ? kUnk : it->second;
  }

  bool contains(std::string_view word) const { return index_.contains(std::string(word)); }

  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

  nlohmann::json to_json() const {
    return {{"tokens", tokens_}, {"max_size", max_size_}};
  }

  static Vocabulary from_json(const nlohmann::json& j) {
    auto tokens = j.at("tokens").get<std::vector<std::string>>();
    if (tokens.size() < kReserved || tokens[0] != "[PAD]" || tokens[1] != "[UNK]" ||
        tokens[2] != "[CLS]") {
      fail(ErrorCode::CorruptArtifact, "vocabulary reserved tokens missing");
    }
    return Vocabulary(std::vector<std::string>(tokens.begin() + kReserved, tokens.end()),
                      j.value("max_size", 0));
  }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) index_[tokens_[i]] = static_cast<int>(i);
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  int max_size_ = 0;
};

/// Frequency-ranked word vocabulary; ties broken lexicographically. max_size
/// counts the three reserved ids.
inline Vocabulary build_vocab(const std::vector<AdRecord>& records, int max_size) {
  require(max_size >= 4, ErrorCode::InvalidArgument, "max_size must be >= 4");
  std::map<std::string, long> counts;
  for (const auto& r : records) {
    for (auto& w : split_words(creative_text(r.creative))) ++counts[w];
  }
  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words;
  const auto limit = static_cast<std::size_t>(max_size - Vocabulary::kReserved);
  for (std::size_t i = 0; i < ranked.size() && i < limit; ++i) words.push_back(ranked[i].first);
  return Vocabulary(std::move(words), max_size);
}

/// [CLS] + word ids (UNK for unknown words), truncated and PAD-filled to max_len.
inline std::vector<int> tokenize(std::string_view text, const Vocabulary& vocab, int max_len) {
  require(max_len >= 1, ErrorCode::InvalidArgument, "max_len must be >= 1");
  std::vector<int> ids;
  ids.reserve(static_cast<std::size_t>(max_len));
  ids.push_back(Vocabulary::kCls);
  for (const auto& w : split_words(text)) {
    if (static_cast<int>(ids.size()) >= max_len) break;
    ids.push_back(vocab.id(w));
  }
  ids.resize(static_cast<std::size_t>(max_len), Vocabulary::kPad);
  return ids;
}

}  // namespace soda
