#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace amps {

/// Sparse bag-of-words document. Word ids are zero-based internally; the
/// on-disk format uses one-based ids.
struct Document {
  std::vector<std::pair<std::size_t, std::size_t>> entries;  // (word, count)

  std::size_t length() const;
};

struct Corpus {
  std::size_t vocabulary_size = 0;
  std::vector<Document> documents;
  std::vector<std::string> vocabulary;  // optional

  std::size_t size() const { return documents.size(); }
  std::size_t total_tokens() const;
  /// Throws EmptyCorpus / RangeError when invariants fail.
  void validate() const;
  Corpus subset(std::span<const std::size_t> indices) const;
};

}  // namespace amps
