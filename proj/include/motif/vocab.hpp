#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace motif {

struct VocabMergeReport {
  std::size_t base_size = 0;
  std::size_t additions_new = 0;
  std::size_t special_new = 0;
  std::size_t total = 0;
};

/// Set union of token strings: base ids (positions) are preserved, new
/// additions and then specials are appended in first-seen order.
inline std::vector<std::string> vocab_merge(const std::vector<std::string>& base,
                                            const std::vector<std::string>& additions,
                                            const std::vector<std::string>& special,
                                            VocabMergeReport* report = nullptr) {
  std::unordered_set<std::string_view> seen;
  seen.reserve(base.size() + additions.size() + special.size());
  for (const std::string& tok : base) {
    if (!seen.insert(tok).second) {
      throw std::runtime_error("vocab_merge: base assigns multiple ids to token \"" + tok + "\"");
    }
  }
  std::vector<std::string> merged = base;
  VocabMergeReport local;
  local.base_size = base.size();
  for (const std::string& tok : additions) {
    if (seen.insert(tok).second) {
      merged.push_back(tok);
      ++local.additions_new;
    }
  }
  for (const std::string& tok : special) {
    if (seen.insert(tok).second) {
      merged.push_back(tok);
      ++local.special_new;
    }
  }
  local.total = merged.size();
  if (report) *report = local;
  return merged;
}

/// Greedy longest-match tokenizer over an explicit vocabulary, with byte
/// fallback: bytes not covered by any token are emitted as single-byte
/// tokens with id -1.
class VocabTokenizer {
 public:
  explicit VocabTokenizer(std::vector<std::string> vocab) : vocab_(std::move(vocab)) {
    for (std::size_t i = 0; i < vocab_.size(); ++i) {
      if (vocab_[i].empty()) throw std::invalid_argument("tokenizer: empty token string");
      auto [it, fresh] = ids_.emplace(vocab_[i], std::int32_t(i));
      if (!fresh) {
        throw std::runtime_error("tokenizer: token \"" + vocab_[i] + "\" has conflicting ids " +
                                 std::to_string(it->second) + " and " + std::to_string(i));
      }
      max_len_ = std::max(max_len_, vocab_[i].size());
    }
  }

  std::size_t vocab_size() const { return vocab_.size(); }

  std::vector<std::int32_t> tokenize(std::string_view text) const {
    std::vector<std::int32_t> out;
    std::size_t i = 0;
    while (i < text.size()) {
      std::size_t len = std::min(max_len_, text.size() - i);
      std::int32_t id = -1;
      for (; len >= 1; --len) {
        auto it = ids_.find(std::string(text.substr(i, len)));
        if (it != ids_.end()) {
          id = it->second;
          break;
        }
      }
      if (id < 0) len = 1;  // byte fallback
      out.push_back(id);
      i += len;
    }
    return out;
  }

  std::size_t count_tokens(std::string_view text) const { return tokenize(text).size(); }

 private:
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, std::int32_t> ids_;
  std::size_t max_len_ = 0;
};

/// UTF-8 byte length divided by token count.
inline double bytes_per_token(std::string_view text, const VocabTokenizer& tokenizer) {
  if (text.empty()) throw std::invalid_argument("bytes_per_token: empty text");
  const std::size_t tokens = tokenizer.count_tokens(text);
  return double(text.size()) / double(tokens);
}

}  // namespace motif
