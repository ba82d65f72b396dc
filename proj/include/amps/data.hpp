#pragma once

// Synthetic generators for the three experiment families and bag-of-words
// corpus I/O.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

#include "amps/corpus.hpp"
#include "amps/posterior.hpp"

namespace amps {

struct GmmTruth {
  std::vector<double> means{1.0, -1.0, 3.0};
  std::vector<double> weights{0.6, 0.3, 0.1};
  double variance = 0.09;
};

struct GmmDataset {
  std::vector<double> points;
  std::vector<std::size_t> labels;
  GmmTruth truth;
};

GmmDataset gen_gmm(std::uint64_t seed, std::size_t n = 30, const GmmTruth& truth = {});

struct LdaTruth {
  RowMatrix topics;      // K x W
  RowMatrix doc_topics;  // D x K
  double topic_concentration = 0.0;
  double doc_concentration = 0.0;
};

struct LdaDataset {
  Corpus corpus;
  LdaTruth truth;
};

LdaDataset gen_lda(std::uint64_t seed, std::size_t topics, std::size_t vocabulary, std::size_t n_docs,
                   std::size_t doc_len, double topic_concentration, double doc_concentration);

struct LfmGenOptions {
  std::size_t features = 5;
  std::size_t dim = 10;
  std::size_t n_train = 1000;
  std::size_t n_test = 300;
  double noise_variance = 0.04;
  /// Diagnostic: every assignment z_nk = 0, so observations are pure noise.
  bool force_zero_assignments = false;
};

struct LfmTruth {
  RowMatrix features;  // K x D, binary
  std::vector<double> weights;
  RowMatrix assignments;  // (n_train + n_test) x K, binary
  double noise_variance = 0.0;
};

struct LfmDataset {
  RowMatrix train;
  RowMatrix test;
  LfmTruth truth;
};

LfmDataset gen_lfm(std::uint64_t seed, const LfmGenOptions& options = {});

/// Reads "docId wordId count" triples (one-based ids), optionally preceded
/// by the three header lines D, W, NNZ. Without a header the vocabulary size
/// is `vocabulary` if given, else the largest word id.
Corpus parse_bow(std::istream& in, std::optional<std::size_t> vocabulary = std::nullopt);
Corpus load_bow(const std::filesystem::path& path, std::optional<std::size_t> vocabulary = std::nullopt);
void write_bow(std::ostream& out, const Corpus& corpus);

/// Seeded disjoint split; both halves keep the original document order.
std::pair<Corpus, Corpus> split_docs(const Corpus& corpus, std::size_t n_test, std::uint64_t seed);

/// One row per line, whitespace-separated, 17 significant digits.
void write_matrix(std::ostream& out, const RowMatrix& m);
RowMatrix read_matrix(std::istream& in);

}  // namespace amps
