#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "motif/common.hpp"

namespace motif {

/// The eight corpus domain groups.
enum class DomainGroup : int {
  general_web = 0,
  multilingual = 1,
  korean = 2,
  academic = 3,
  specialized = 4,
  code = 5,
  math = 6,
  reasoning = 7,
};

constexpr std::size_t kNumGroups = 8;

inline const std::array<const char*, kNumGroups>& domain_group_names() {
  static const std::array<const char*, kNumGroups> names = {
      "general_web", "multilingual", "korean",    "academic",
      "specialized", "code",         "math",      "reasoning"};
  return names;
}

inline const char* to_string(DomainGroup g) { return domain_group_names()[std::size_t(g)]; }

inline DomainGroup parse_domain_group(std::string_view name) {
  const auto& names = domain_group_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (name == names[i]) return DomainGroup(int(i));
  }
  throw std::invalid_argument("unknown domain group: " + std::string(name));
}

/// One corpus record.
struct Document {
  std::string id;
  std::string text;
  std::int64_t token_count = 0;
  DomainGroup group = DomainGroup::general_web;
  std::uint64_t content_hash = 0;
};

/// Whitespace tokens: maximal runs of non-space bytes.
inline std::int64_t whitespace_token_count(std::string_view text) {
  std::int64_t count = 0;
  bool in_token = false;
  for (char c : text) {
    const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r';
    if (!space && !in_token) ++count;
    in_token = !space;
  }
  return count;
}

/// Byte offset just past the end of the n-th whitespace token (1-based);
/// npos when the text has fewer tokens.
inline std::size_t whitespace_token_end(std::string_view text, std::int64_t n) {
  std::int64_t count = 0;
  bool in_token = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r';
    if (!space && !in_token) ++count;
    if (space && in_token && count == n) return i;
    in_token = !space;
  }
  if (in_token && count == n) return text.size();
  return std::string_view::npos;
}

inline Document make_document(std::string id, std::string text, DomainGroup group,
                              std::optional<std::int64_t> token_count = std::nullopt) {
  Document d;
  d.id = std::move(id);
  d.text = std::move(text);
  d.group = group;
  d.token_count = token_count ? *token_count : whitespace_token_count(d.text);
  d.content_hash = fnv1a64(d.text);
  return d;
}

/// Byte-level token ids (0..255) for character-level training.
inline std::vector<std::int32_t> byte_tokenize(std::string_view text) {
  std::vector<std::int32_t> out;
  out.reserve(text.size());
  for (unsigned char c : text) out.push_back(std::int32_t(c));
  return out;
}

// ---------------------------------------------------------------------------
// Length filtering
// ---------------------------------------------------------------------------

struct LengthFilterStats {
  std::uint64_t input_docs = 0;
  std::uint64_t kept = 0;
  std::uint64_t dropped_short = 0;
  std::uint64_t split_docs = 0;
  std::uint64_t chunks_created = 0;
};

/// Keeps documents with min_tokens <= token_count <= max_tokens. Documents
/// longer than max_tokens are split at token boundaries into chunks of at
/// most max_tokens (the upper bound acts as the sequence cap, not a drop
/// rule); chunks below min_tokens are dropped.
inline std::vector<Document> length_filter(const std::vector<Document>& docs,
                                           std::int64_t min_tokens, std::int64_t max_tokens,
                                           LengthFilterStats* stats = nullptr) {
  if (min_tokens < 0 || max_tokens < min_tokens) {
    throw std::invalid_argument("length_filter: require 0 <= min_tokens <= max_tokens");
  }
  LengthFilterStats local;
  std::vector<Document> out;
  out.reserve(docs.size());
  for (const Document& doc : docs) {
    ++local.input_docs;
    if (doc.token_count < min_tokens) {
      ++local.dropped_short;
      continue;
    }
    if (doc.token_count <= max_tokens) {
      ++local.kept;
      out.push_back(doc);
      continue;
    }
    // split into <= max_tokens chunks on whitespace-token boundaries
    ++local.split_docs;
    std::string_view rest = doc.text;
    std::size_t chunk_index = 0;
    while (!rest.empty() && whitespace_token_count(rest) > 0) {
      const std::int64_t remaining = whitespace_token_count(rest);
      const std::int64_t take = std::min<std::int64_t>(remaining, max_tokens);
      std::size_t end = whitespace_token_end(rest, take);
      if (end == std::string_view::npos) end = rest.size();
      Document chunk = make_document(doc.id + "#" + std::to_string(chunk_index++),
                                     std::string(rest.substr(0, end)), doc.group);
      rest.remove_prefix(end);
      if (chunk.token_count >= min_tokens) {
        ++local.chunks_created;
        out.push_back(std::move(chunk));
      }
    }
  }
  if (stats) *stats = local;
  return out;
}

// ---------------------------------------------------------------------------
// Exact deduplication
// ---------------------------------------------------------------------------

struct ExactDedupStats {
  std::uint64_t input_docs = 0;
  std::uint64_t kept = 0;
  std::uint64_t removed = 0;
};

/// Drops later byte-identical texts, keeping first occurrences in order.
inline std::vector<Document> exact_dedup(const std::vector<Document>& docs,
                                         ExactDedupStats* stats = nullptr) {
  ExactDedupStats local;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> by_hash;  // -> indices into out
  std::vector<Document> out;
  out.reserve(docs.size());
  for (const Document& doc : docs) {
    ++local.input_docs;
    const std::uint64_t h = doc.content_hash ? doc.content_hash : fnv1a64(doc.text);
    auto& bucket = by_hash[h];
    bool duplicate = false;
    for (std::size_t prior : bucket) {
      if (out[prior].text == doc.text) {
        duplicate = true;
        break;
      }
    }
    if (duplicate) {
      ++local.removed;
      continue;
    }
    bucket.push_back(out.size());
    out.push_back(doc);
    ++local.kept;
  }
  if (stats) *stats = local;
  return out;
}

// ---------------------------------------------------------------------------
// JSONL corpus I/O
// ---------------------------------------------------------------------------

/// Reads one document per line: {"id":..., "text":..., "domain_group":...,
/// optional "token_count"}.
inline std::vector<Document> read_jsonl(std::istream& in) {
  std::vector<Document> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("jsonl line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.contains("id") || !j.contains("text") || !j.contains("domain_group")) {
      throw std::invalid_argument("jsonl line " + std::to_string(line_no) +
                                  ": requires id, text, domain_group");
    }
    std::optional<std::int64_t> count;
    if (j.contains("token_count")) count = j["token_count"].get<std::int64_t>();
    docs.push_back(make_document(j["id"].get<std::string>(), j["text"].get<std::string>(),
                                 parse_domain_group(j["domain_group"].get<std::string>()), count));
  }
  return docs;
}

inline std::vector<Document> read_jsonl_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open corpus file " + path);
  return read_jsonl(f);
}

inline void write_jsonl(const std::vector<Document>& docs, std::ostream& out) {
  for (const Document& d : docs) {
    nlohmann::json j;
    j["id"] = d.id;
    j["text"] = d.text;
    j["domain_group"] = to_string(d.group);
    j["token_count"] = d.token_count;
    out << j.dump() << "\n";
  }
}

inline void write_jsonl_file(const std::vector<Document>& docs, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::invalid_argument("cannot open " + path + " for writing");
  write_jsonl(docs, f);
}

}  // namespace motif
