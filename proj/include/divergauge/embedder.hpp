#pragma once

// Deterministic random-projection text embedder.
//
// Each unigram and bigram feature is hashed to a seeded Gaussian direction;
// a text's embedding is the count-weighted sum of its feature directions
// scaled by 1/sqrt(feature count). It carries lexical rather than semantic
// signal and stands in for a neural embedder when none is available.

#include "divergauge/features.hpp"
#include "divergauge/rng.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace divergauge {

struct ProjectionEmbedder {
  std::size_t dim = 64;
  std::uint64_t seed = 0x9e3779b97f4a7c15ULL;

  std::string model_id() const {
    return "projection-d" + std::to_string(dim) + "-" + hex64(seed);
  }

  EmbeddingMatrix embed(const std::vector<std::string>& ids, const std::vector<std::string>& texts) const {
    if (ids.size() != texts.size()) throw std::invalid_argument("embed: ids/texts mismatch");
    if (dim == 0) throw std::invalid_argument("embed: dimension must be positive");
    EmbeddingMatrix e;
    e.rows = texts.size();
    e.cols = dim;
    e.ids = ids;
    e.values.assign(e.rows * dim, 0.0f);
    std::unordered_map<std::string, std::vector<double>> cache;
    auto direction = [&](const std::string& feature) -> const std::vector<double>& {
      auto it = cache.find(feature);
      if (it != cache.end()) return it->second;
      Rng rng(splitmix64(seed ^ fnv1a64(feature)));
      std::vector<double> v(dim);
      for (double& x : v) x = rng.normal();
      return cache.emplace(feature, std::move(v)).first->second;
    };
    std::vector<double> acc(dim);
    for (std::size_t r = 0; r < texts.size(); ++r) {
      const auto tokens = tokenize(texts[r]);
      std::vector<std::string> features;
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        features.push_back("1\x1f" + tokens[i]);
        if (i + 1 < tokens.size()) features.push_back("2\x1f" + tokens[i] + "\x1f" + tokens[i + 1]);
      }
      if (features.empty()) features.push_back("<empty>");
      std::fill(acc.begin(), acc.end(), 0.0);
      for (const auto& f : features) {
        const auto& d = direction(f);
        for (std::size_t c = 0; c < dim; ++c) acc[c] += d[c];
      }
      const double scale = 1.0 / std::sqrt(static_cast<double>(features.size()));
      for (std::size_t c = 0; c < dim; ++c) e.values[r * dim + c] = static_cast<float>(acc[c] * scale);
    }
    return e;
  }
};

}  // namespace divergauge
