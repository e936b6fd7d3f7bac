#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "motif/common.hpp"
#include "motif/corpus.hpp"

namespace motif {

/// MinHash / LSH configuration. The default 16 bands x 8 rows puts the
/// candidate-probability knee near J ~ 0.77, safely below the 0.9
/// verification threshold.
struct MinHashConfig {
  std::size_t shingle_size = 5;
  std::size_t num_hashes = 128;
  std::size_t bands = 16;
  std::size_t rows = 8;
  double jaccard_threshold = 0.9;
  std::uint64_t seed = 1;

  void validate() const {
    if (shingle_size == 0) throw std::invalid_argument("minhash: shingle_size must be positive");
    if (bands * rows != num_hashes) {
      throw std::invalid_argument("minhash: bands (" + std::to_string(bands) + ") * rows (" +
                                  std::to_string(rows) + ") must equal num_hashes (" +
                                  std::to_string(num_hashes) + ")");
    }
    if (jaccard_threshold <= 0 || jaccard_threshold > 1) {
      throw std::invalid_argument("minhash: jaccard_threshold must lie in (0,1]");
    }
  }
};

/// Sorted set of hashed token shingles (whitespace tokens, window of
/// shingle_size, FNV over the joined window).
inline std::vector<std::uint64_t> shingle_set(std::string_view text, std::size_t shingle_size) {
  std::vector<std::string_view> tokens;
  std::size_t start = std::string_view::npos;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    const bool space = i == text.size() || text[i] == ' ' || text[i] == '\t' ||
                       text[i] == '\n' || text[i] == '\r';
    if (!space && start == std::string_view::npos) start = i;
    if (space && start != std::string_view::npos) {
      tokens.push_back(text.substr(start, i - start));
      start = std::string_view::npos;
    }
  }
  std::vector<std::uint64_t> shingles;
  if (tokens.size() < shingle_size) return shingles;
  shingles.reserve(tokens.size() - shingle_size + 1);
  for (std::size_t i = 0; i + shingle_size <= tokens.size(); ++i) {
    std::uint64_t h = 1469598103934665603ull;
    for (std::size_t k = 0; k < shingle_size; ++k) {
      for (char c : tokens[i + k]) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
      }
      h ^= 0x1f;  // token separator
      h *= 1099511628211ull;
    }
    shingles.push_back(h);
  }
  std::sort(shingles.begin(), shingles.end());
  shingles.erase(std::unique(shingles.begin(), shingles.end()), shingles.end());
  return shingles;
}

/// Exact Jaccard |A n B| / |A u B| over sorted shingle sets.
inline double exact_jaccard(const std::vector<std::uint64_t>& a,
                            const std::vector<std::uint64_t>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t inter = 0, i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++inter;
      ++i;
      ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  return double(inter) / double(uni);
}

/// num_hashes min-values over independently salted 64-bit hashes.
class MinHasher {
 public:
  explicit MinHasher(const MinHashConfig& cfg) : num_hashes_(cfg.num_hashes) {
    cfg.validate();
    salts_.resize(num_hashes_);
    std::uint64_t state = cfg.seed;
    for (auto& s : salts_) {
      state = splitmix64(state);
      s = state;
    }
  }

  std::vector<std::uint64_t> signature(const std::vector<std::uint64_t>& shingles) const {
    std::vector<std::uint64_t> sig(num_hashes_, ~0ull);
    for (std::uint64_t x : shingles) {
      for (std::size_t i = 0; i < num_hashes_; ++i) {
        sig[i] = std::min(sig[i], splitmix64(x ^ salts_[i]));
      }
    }
    return sig;
  }

  /// Fraction of agreeing signature coordinates -- the Jaccard estimator.
  static double estimate_jaccard(const std::vector<std::uint64_t>& a,
                                 const std::vector<std::uint64_t>& b) {
    if (a.size() != b.size() || a.empty()) {
      throw std::invalid_argument("minhash: signature lengths differ");
    }
    std::size_t match = 0;
    for (std::size_t i = 0; i < a.size(); ++i) match += a[i] == b[i];
    return double(match) / double(a.size());
  }

 private:
  std::size_t num_hashes_;
  std::vector<std::uint64_t> salts_;
};

struct DuplicatePair {
  std::string id_a, id_b;  // id_a is the earlier document
  double jaccard = 0;
};

struct NearDedupResult {
  std::vector<Document> unique;
  std::vector<DuplicatePair> pairs;       // verified pairs at or above threshold
  std::vector<std::string> empty_shingle; // flagged pass-through documents
  std::uint64_t candidate_pairs = 0;      // LSH proposals before verification
  std::uint64_t removed = 0;
};

/// MinHash/LSH near-deduplication. LSH banding proposes candidates; every
/// candidate is verified with exact Jaccard over shingle sets, so precision
/// is 1.0 by construction. Connected components collapse to their earliest
/// member, preserving input order.
inline NearDedupResult minhash_near_dedup(const std::vector<Document>& docs,
                                          const MinHashConfig& cfg) {
  cfg.validate();
  MinHasher hasher(cfg);
  const std::size_t n = docs.size();
  NearDedupResult result;

  std::vector<std::vector<std::uint64_t>> shingles(n);
  std::vector<std::vector<std::uint64_t>> sigs(n);
  parallel_for(n, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      shingles[i] = shingle_set(docs[i].text, cfg.shingle_size);
      if (!shingles[i].empty()) sigs[i] = hasher.signature(shingles[i]);
    }
  });
  for (std::size_t i = 0; i < n; ++i) {
    if (shingles[i].empty()) result.empty_shingle.push_back(docs[i].id);
  }

  // LSH banding: documents sharing any band bucket become candidates
  std::vector<std::pair<std::size_t, std::size_t>> candidates;
  {
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> buckets;
    for (std::size_t band = 0; band < cfg.bands; ++band) {
      buckets.clear();
      for (std::size_t i = 0; i < n; ++i) {
        if (sigs[i].empty()) continue;
        std::uint64_t key = 1469598103934665603ull ^ (band * 0x9e3779b97f4a7c15ull);
        for (std::size_t r = 0; r < cfg.rows; ++r) {
          key = fnv1a64_mix(key, sigs[i][band * cfg.rows + r]);
        }
        buckets[key].push_back(i);
      }
      for (const auto& [key, members] : buckets) {
        for (std::size_t a = 0; a < members.size(); ++a) {
          for (std::size_t b = a + 1; b < members.size(); ++b) {
            candidates.emplace_back(members[a], members[b]);
          }
        }
      }
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  }
  result.candidate_pairs = candidates.size();

  // exact verification, then union-find collapse to the earliest member
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (const auto& [i, j] : candidates) {
    const double jac = exact_jaccard(shingles[i], shingles[j]);
    if (jac >= cfg.jaccard_threshold) {
      result.pairs.push_back({docs[i].id, docs[j].id, jac});
      const std::size_t ri = find(i), rj = find(j);
      if (ri != rj) parent[std::max(ri, rj)] = std::min(ri, rj);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (find(i) == i) {
      result.unique.push_back(docs[i]);
    } else {
      ++result.removed;
    }
  }
  return result;
}

/// Duplicate-pair report as CSV: id_a,id_b,jaccard.
inline void write_pair_report(const std::vector<DuplicatePair>& pairs, std::ostream& out) {
  out << "id_a,id_b,jaccard\n";
  out.precision(6);
  for (const auto& p : pairs) {
    out << p.id_a << "," << p.id_b << "," << std::fixed << p.jaccard << "\n";
  }
}

}  // namespace motif
