#pragma once

// Text features: the word tokenizer, n-gram count profiles and the two
// cosine similarity kernels (lexical n-gram, dense embedding) consumed by
// the Vendi Score.

#include "divergauge/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace divergauge {

// ============================================================================
// Tokenizer
// ============================================================================

namespace detail {

struct CodePoint {
  char32_t value;
  std::size_t offset;
  std::size_t length;
};

// Lenient UTF-8 decoder: a malformed byte decodes as itself, length 1.
inline std::vector<CodePoint> decode_utf8(std::string_view s) {
  std::vector<CodePoint> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    char32_t cp = b0;
    if (b0 >= 0xC0 && b0 < 0xE0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if (b0 >= 0xE0 && b0 < 0xF0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if (b0 >= 0xF0 && b0 < 0xF8) {
      len = 4;
      cp = b0 & 0x07;
    }
    bool ok = len == 1 || i + len <= s.size();
    for (std::size_t k = 1; ok && k < len; ++k) {
      const auto bk = static_cast<unsigned char>(s[i + k]);
      if ((bk & 0xC0) != 0x80) ok = false;
      cp = (cp << 6) | (bk & 0x3F);
    }
    if (!ok) {
      len = 1;
      cp = b0;
    }
    out.push_back({cp, i, len});
    i += len;
  }
  return out;
}

inline bool is_unicode_space(char32_t c) {
  return (c >= 0x09 && c <= 0x0D) || c == 0x20 || c == 0x85 || c == 0xA0 || c == 0x1680 ||
         (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F ||
         c == 0x205F || c == 0x3000;
}

inline bool is_punctuation(char32_t c) {
  if (c < 0x80) {
    return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
           (c >= 0x7B && c <= 0x7E);
  }
  return c == 0xA1 || c == 0xA7 || c == 0xAB || c == 0xB6 || c == 0xB7 || c == 0xBB ||
         c == 0xBF || (c >= 0x2010 && c <= 0x2027) || (c >= 0x2030 && c <= 0x205E) ||
         (c >= 0x3001 && c <= 0x3003) || (c >= 0x3008 && c <= 0x3011);
}

inline void append_utf8(std::string& out, char32_t c) {
  if (c < 0x80) {
    out.push_back(static_cast<char>(c));
  } else if (c < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (c >> 6)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else if (c < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (c >> 12)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (c >> 18)));
    out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  }
}

// ASCII and Latin-1 upper case only.
inline char32_t to_lower(char32_t c) {
  if (c >= 'A' && c <= 'Z') return c + 0x20;
  if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 0x20;
  return c;
}

}  // namespace detail

// Lowercase, split on Unicode whitespace, strip leading/trailing punctuation.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  const auto cps = detail::decode_utf8(text);
  std::size_t i = 0;
  while (i < cps.size()) {
    while (i < cps.size() && detail::is_unicode_space(cps[i].value)) ++i;
    std::size_t j = i;
    while (j < cps.size() && !detail::is_unicode_space(cps[j].value)) ++j;
    std::size_t b = i;
    std::size_t e = j;
    while (b < e && detail::is_punctuation(cps[b].value)) ++b;
    while (e > b && detail::is_punctuation(cps[e - 1].value)) --e;
    if (b < e) {
      std::string tok;
      for (std::size_t k = b; k < e; ++k) detail::append_utf8(tok, detail::to_lower(cps[k].value));
      tokens.push_back(std::move(tok));
    }
    i = j;
  }
  return tokens;
}

// ============================================================================
// N-gram profiles
// ============================================================================

struct NGramProfile {
  using CountMap = std::unordered_map<std::string, std::uint32_t>;

  std::vector<std::size_t> orders;  // ascending, unique
  std::vector<CountMap> counts;     // counts[i] holds n-grams of length orders[i]
  std::size_t token_count = 0;

  const CountMap& at_order(std::size_t n) const {
    for (std::size_t i = 0; i < orders.size(); ++i)
      if (orders[i] == n) return counts[i];
    throw std::out_of_range("NGramProfile: order " + std::to_string(n) + " not profiled");
  }
};

inline const std::vector<std::size_t>& default_ngram_orders() {
  static const std::vector<std::size_t> orders{1, 2, 3, 4};
  return orders;
}

inline NGramProfile ngram_profile(const std::vector<std::string>& tokens,
                                  std::vector<std::size_t> orders = default_ngram_orders()) {
  std::sort(orders.begin(), orders.end());
  orders.erase(std::unique(orders.begin(), orders.end()), orders.end());
  if (!orders.empty() && orders.front() == 0)
    throw std::invalid_argument("ngram_profile: n-gram order must be positive");

  NGramProfile prof;
  prof.orders = orders;
  prof.token_count = tokens.size();
  prof.counts.resize(orders.size());
  for (std::size_t oi = 0; oi < orders.size(); ++oi) {
    const std::size_t n = orders[oi];
    if (tokens.size() < n) continue;
    for (std::size_t s = 0; s + n <= tokens.size(); ++s) {
      std::string key = tokens[s];
      for (std::size_t k = 1; k < n; ++k) {
        key.push_back('\x1f');
        key += tokens[s + k];
      }
      ++prof.counts[oi][key];
    }
  }
  return prof;
}

namespace detail {

inline double count_norm(const NGramProfile::CountMap& m) {
  double s = 0.0;
  for (const auto& [_, c] : m) s += static_cast<double>(c) * c;
  return std::sqrt(s);
}

inline double count_dot(const NGramProfile::CountMap& a, const NGramProfile::CountMap& b) {
  const auto& small = a.size() <= b.size() ? a : b;
  const auto& large = a.size() <= b.size() ? b : a;
  double s = 0.0;
  for (const auto& [key, c] : small) {
    auto it = large.find(key);
    if (it != large.end()) s += static_cast<double>(c) * it->second;
  }
  return s;
}

}  // namespace detail

// K[i][j] = mean over profiled orders of the cosine between count vectors.
// Orders where a text has no n-grams contribute 0 off the diagonal.
inline SymMatrix ngram_kernel(const std::vector<NGramProfile>& profiles) {
  const std::size_t n = profiles.size();
  if (n == 0) throw std::invalid_argument("ngram_kernel: no profiles");
  const auto& orders = profiles.front().orders;
  for (std::size_t i = 1; i < n; ++i) {
    if (profiles[i].orders != orders)
      throw std::invalid_argument("ngram_kernel: profile " + std::to_string(i) +
                                  " uses a different order set");
  }
  if (orders.empty()) throw std::invalid_argument("ngram_kernel: empty order set");

  const std::size_t m = orders.size();
  std::vector<double> norms(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < m; ++o) norms[i * m + o] = detail::count_norm(profiles[i].counts[o]);

  SymMatrix k(n);
  for (std::size_t i = 0; i < n; ++i) {
    k.set(i, i, 1.0);
    for (std::size_t j = i + 1; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t o = 0; o < m; ++o) {
        const double ni = norms[i * m + o];
        const double nj = norms[j * m + o];
        if (ni == 0.0 || nj == 0.0) continue;
        const double c =
            detail::count_dot(profiles[i].counts[o], profiles[j].counts[o]) / (ni * nj);
        acc += std::clamp(c, 0.0, 1.0);
      }
      k.set(i, j, acc / static_cast<double>(m));
    }
  }
  return k;
}

inline SymMatrix ngram_kernel_for_texts(const std::vector<std::string>& texts,
                                        const std::vector<std::size_t>& orders =
                                            default_ngram_orders()) {
  std::vector<NGramProfile> profiles;
  profiles.reserve(texts.size());
  for (const auto& t : texts) profiles.push_back(ngram_profile(tokenize(t), orders));
  return ngram_kernel(profiles);
}

// ============================================================================
// Embeddings
// ============================================================================

struct EmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // row-major
  std::vector<std::string> ids;

  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }

  PointSet to_points() const { return PointSet(rows, cols, values); }

  // Rows whose id appears in `keep`, in the order of `keep`.
  EmbeddingMatrix select(const std::vector<std::string>& keep) const {
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < ids.size(); ++i) index.emplace(ids[i], i);
    EmbeddingMatrix out;
    out.cols = cols;
    for (const auto& id : keep) {
      auto it = index.find(id);
      if (it == index.end()) throw std::out_of_range("embedding id not found: " + id);
      auto r = row(it->second);
      out.values.insert(out.values.end(), r.begin(), r.end());
      out.ids.push_back(id);
      ++out.rows;
    }
    return out;
  }
};

inline SymMatrix embedding_kernel(const EmbeddingMatrix& e) {
  std::vector<double> norms(e.rows);
  for (std::size_t i = 0; i < e.rows; ++i) {
    double s = 0.0;
    for (double v : e.row(i)) s += v * v;
    norms[i] = std::sqrt(s);
    if (!(norms[i] > 0.0) || !std::isfinite(norms[i])) {
      const std::string id = i < e.ids.size() ? e.ids[i] : std::to_string(i);
      throw std::invalid_argument("embedding_kernel: row '" + id + "' has zero or invalid norm");
    }
  }
  SymMatrix k(e.rows);
  for (std::size_t i = 0; i < e.rows; ++i) {
    k.set(i, i, 1.0);
    for (std::size_t j = i + 1; j < e.rows; ++j) {
      double dot = 0.0;
      auto a = e.row(i);
      auto b = e.row(j);
      for (std::size_t c = 0; c < e.cols; ++c) dot += a[c] * b[c];
      k.set(i, j, std::clamp(dot / (norms[i] * norms[j]), -1.0, 1.0));
    }
  }
  return k;
}

}  // namespace divergauge
