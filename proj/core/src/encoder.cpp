// SPDX-License-Identifier: Apache-2.0

#include "csn/encoder.hpp"

#include "csn/corpus.hpp"
#include "csn/vocabulary.hpp"

#include <fstream>
#include <sstream>

namespace csn {

int pretrained_dimension(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open pretrained embedding file: " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string token;
    if (!(ss >> token)) continue;
    int dim = 0;
    double v = 0;
    while (ss >> v) ++dim;
    if (dim == 0) throw DataError(path.string() + ": first entry has no vector");
    return dim;
  }
  throw DataError(path.string() + ": empty embedding file");
}

template <typename T>
std::vector<std::size_t> initialize_embeddings(Matrix<T>& table, const Vocabulary& vocab,
                                               const std::vector<std::filesystem::path>& files, Rng& rng) {
  if (static_cast<std::size_t>(table.rows()) != vocab.size())
    throw ConfigError("embedding table rows differ from vocabulary size");
  for (Index r = 1; r < table.rows(); ++r)
    for (Index c = 0; c < table.cols(); ++c) table(r, c) = static_cast<T>(uniform(rng, -0.1, 0.1));
  table.row(0).setZero();

  std::vector<std::size_t> hits;
  Index offset = 0;
  for (const auto& path : files) {
    const int dim = pretrained_dimension(path);
    if (offset + dim > table.cols())
      throw ConfigError("pretrained dimensions exceed the embedding width " + std::to_string(table.cols()));
    std::ifstream in(path);
    std::string line;
    std::size_t lineno = 0, found = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::istringstream ss(line);
      std::string token;
      if (!(ss >> token)) continue;
      std::vector<double> vec;
      double v = 0;
      while (ss >> v) vec.push_back(v);
      if (static_cast<int>(vec.size()) != dim)
        throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(dim) + " values");
      const auto id = vocab.id(token);
      if (id <= Vocabulary::kUnk) continue;
      for (int k = 0; k < dim; ++k) table(id, offset + k) = static_cast<T>(vec[static_cast<std::size_t>(k)]);
      ++found;
    }
    hits.push_back(found);
    offset += dim;
  }
  if (!files.empty() && offset != table.cols())
    throw ConfigError("pretrained dimensions sum to " + std::to_string(offset) + " but the embedding width is " +
                      std::to_string(table.cols()));
  return hits;
}

template std::vector<std::size_t> initialize_embeddings<float>(Matrix<float>&, const Vocabulary&,
                                                               const std::vector<std::filesystem::path>&, Rng&);
template std::vector<std::size_t> initialize_embeddings<double>(Matrix<double>&, const Vocabulary&,
                                                                const std::vector<std::filesystem::path>&, Rng&);

}  // namespace csn
