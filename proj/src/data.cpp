#include "amps/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "amps/errors.hpp"
#include "amps/random.hpp"

namespace amps {

std::size_t Document::length() const {
  std::size_t n = 0;
  for (const auto& [w, c] : entries) n += c;
  return n;
}

std::size_t Corpus::total_tokens() const {
  std::size_t n = 0;
  for (const auto& d : documents) n += d.length();
  return n;
}

void Corpus::validate() const {
  if (documents.empty()) throw EmptyCorpus("corpus has no documents");
  for (std::size_t d = 0; d < documents.size(); ++d) {
    for (const auto& [w, c] : documents[d].entries) {
      if (w >= vocabulary_size)
        throw RangeError("document " + std::to_string(d + 1) + ": word id " + std::to_string(w + 1) +
                         " outside [1, " + std::to_string(vocabulary_size) + "]");
      if (c < 1) throw RangeError("document " + std::to_string(d + 1) + ": zero count");
    }
  }
}

Corpus Corpus::subset(std::span<const std::size_t> indices) const {
  Corpus out;
  out.vocabulary_size = vocabulary_size;
  out.vocabulary = vocabulary;
  for (std::size_t i : indices) out.documents.push_back(documents.at(i));
  return out;
}

GmmDataset gen_gmm(std::uint64_t seed, std::size_t n, const GmmTruth& truth) {
  if (truth.means.size() != truth.weights.size()) throw ShapeMismatch("gen_gmm: means/weights size mismatch");
  Rng rng(seed);
  GmmDataset out;
  out.truth = truth;
  const double sd = std::sqrt(truth.variance);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = rng.categorical(truth.weights);
    out.labels.push_back(c);
    out.points.push_back(rng.normal(truth.means[c], sd));
  }
  return out;
}

LdaDataset gen_lda(std::uint64_t seed, std::size_t topics, std::size_t vocabulary, std::size_t n_docs,
                   std::size_t doc_len, double topic_concentration, double doc_concentration) {
  if (topics < 2 || vocabulary < topics) throw DomainError("gen_lda: need K >= 2 and W >= K");
  Rng rng(seed);
  LdaDataset out;
  out.truth.topic_concentration = topic_concentration;
  out.truth.doc_concentration = doc_concentration;
  out.truth.topics.resize(topics, vocabulary);
  for (std::size_t k = 0; k < topics; ++k) {
    const auto row = rng.dirichlet(vocabulary, topic_concentration);
    for (std::size_t w = 0; w < vocabulary; ++w) out.truth.topics(k, w) = row[w];
  }
  out.truth.doc_topics.resize(n_docs, topics);
  out.corpus.vocabulary_size = vocabulary;
  std::vector<double> topic_row(vocabulary);
  for (std::size_t d = 0; d < n_docs; ++d) {
    const auto theta = rng.dirichlet(topics, doc_concentration);
    for (std::size_t k = 0; k < topics; ++k) out.truth.doc_topics(d, k) = theta[k];
    std::map<std::size_t, std::size_t> counts;
    for (std::size_t t = 0; t < doc_len; ++t) {
      const std::size_t z = rng.categorical(theta);
      for (std::size_t w = 0; w < vocabulary; ++w) topic_row[w] = out.truth.topics(z, w);
      ++counts[rng.categorical(topic_row)];
    }
    Document doc;
    doc.entries.assign(counts.begin(), counts.end());
    out.corpus.documents.push_back(std::move(doc));
  }
  return out;
}

LfmDataset gen_lfm(std::uint64_t seed, const LfmGenOptions& options) {
  Rng rng(seed);
  const std::size_t k = options.features, d = options.dim, n = options.n_train + options.n_test;
  LfmDataset out;
  out.truth.noise_variance = options.noise_variance;
  out.truth.features.resize(k, d);
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t j = 0; j < d; ++j) out.truth.features(c, j) = rng.bernoulli(0.5) ? 1.0 : 0.0;
  for (std::size_t c = 0; c < k; ++c) out.truth.weights.push_back(rng.uniform());
  out.truth.assignments = RowMatrix::Zero(n, k);
  RowMatrix all(n, d);
  const double sd = std::sqrt(options.noise_variance);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < k; ++c) {
      const bool on = rng.bernoulli(out.truth.weights[c]);
      out.truth.assignments(i, c) = (on && !options.force_zero_assignments) ? 1.0 : 0.0;
    }
    for (std::size_t j = 0; j < d; ++j) {
      double mean = 0.0;
      for (std::size_t c = 0; c < k; ++c) mean += out.truth.assignments(i, c) * out.truth.features(c, j);
      all(i, j) = rng.normal(mean, sd);
    }
  }
  out.train = all.topRows(options.n_train);
  out.test = all.bottomRows(options.n_test);
  return out;
}

namespace {

bool parse_single_integer(const std::string& line, long long& value) {
  std::istringstream is(line);
  std::string extra;
  if (!(is >> value)) return false;
  return !(is >> extra);
}

}  // namespace

Corpus parse_bow(std::istream& in, std::optional<std::size_t> vocabulary) {
  struct Line {
    std::size_t number;
    std::string text;
  };
  std::vector<Line> lines;
  std::string text;
  for (std::size_t number = 1; std::getline(in, text); ++number) {
    const auto first = text.find_first_not_of(" \t\r");
    if (first == std::string::npos || text[first] == '#') continue;
    lines.push_back({number, text});
  }

  std::optional<std::size_t> declared_docs, declared_nnz;
  std::size_t start = 0;
  long long h[3];
  if (lines.size() >= 3 && parse_single_integer(lines[0].text, h[0]) && parse_single_integer(lines[1].text, h[1]) &&
      parse_single_integer(lines[2].text, h[2])) {
    if (h[0] < 0 || h[1] < 1 || h[2] < 0) throw ParseError(lines[0].number, "invalid header values");
    declared_docs = static_cast<std::size_t>(h[0]);
    vocabulary = static_cast<std::size_t>(h[1]);
    declared_nnz = static_cast<std::size_t>(h[2]);
    start = 3;
  }

  std::map<std::size_t, std::map<std::size_t, std::size_t>> docs;
  std::size_t max_word = 0, triples = 0;
  for (std::size_t i = start; i < lines.size(); ++i) {
    std::istringstream is(lines[i].text);
    long long doc = 0, word = 0, count = 0;
    std::string extra;
    if (!(is >> doc >> word >> count) || (is >> extra))
      throw ParseError(lines[i].number, "expected 'docId wordId count', got '" + lines[i].text + "'");
    if (doc < 1) throw ParseError(lines[i].number, "document ids start at 1");
    if (count < 1) throw ParseError(lines[i].number, "counts must be positive");
    if (word < 1 || (vocabulary && static_cast<std::size_t>(word) > *vocabulary))
      throw RangeError("line " + std::to_string(lines[i].number) + ": word id " + std::to_string(word) +
                       " outside vocabulary");
    if (declared_docs && static_cast<std::size_t>(doc) > *declared_docs)
      throw RangeError("line " + std::to_string(lines[i].number) + ": document id exceeds header count");
    docs[static_cast<std::size_t>(doc)][static_cast<std::size_t>(word) - 1] += static_cast<std::size_t>(count);
    max_word = std::max(max_word, static_cast<std::size_t>(word));
    ++triples;
  }
  if (declared_nnz && *declared_nnz != triples)
    throw ParseError(lines.empty() ? 0 : lines.back().number,
                     "header declares " + std::to_string(*declared_nnz) + " entries, found " + std::to_string(triples));

  Corpus corpus;
  corpus.vocabulary_size = vocabulary.value_or(max_word);
  for (auto& [id, entries] : docs) {
    Document d;
    d.entries.assign(entries.begin(), entries.end());
    corpus.documents.push_back(std::move(d));
  }
  corpus.validate();
  return corpus;
}

Corpus load_bow(const std::filesystem::path& path, std::optional<std::size_t> vocabulary) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return parse_bow(in, vocabulary);
}

void write_bow(std::ostream& out, const Corpus& corpus) {
  std::size_t nnz = 0;
  for (const auto& d : corpus.documents) nnz += d.entries.size();
  out << corpus.documents.size() << '\n' << corpus.vocabulary_size << '\n' << nnz << '\n';
  for (std::size_t d = 0; d < corpus.documents.size(); ++d)
    for (const auto& [w, c] : corpus.documents[d].entries) out << d + 1 << ' ' << w + 1 << ' ' << c << '\n';
}

std::pair<Corpus, Corpus> split_docs(const Corpus& corpus, std::size_t n_test, std::uint64_t seed) {
  if (n_test > corpus.size()) throw RangeError("split_docs: n_test exceeds corpus size");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::size_t> test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {corpus.subset(train), corpus.subset(test)};
}

void write_matrix(std::ostream& out, const RowMatrix& m) {
  char buf[32];
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
      out << (c ? " " : "") << buf;
    }
    out << '\n';
  }
}

RowMatrix read_matrix(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::istringstream is(line);
    std::vector<double> row;
    double v;
    while (is >> v) row.push_back(v);
    if (!is.eof()) throw ParseError(number, "non-numeric entry");
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows.front().size()) throw ParseError(number, "ragged row");
    rows.push_back(std::move(row));
  }
  RowMatrix m(rows.size(), rows.empty() ? 0 : rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
  return m;
}

}  // namespace amps
