#pragma once

/**
 * Word-level n-gram LM used as a desk-scale stand-in for a base/instruct
 * model pair.
 *
 * P(w | ctx) = (c(ctx, w) + alpha) / (c(ctx) + alpha * V) for the longest
 * suffix of the context that was seen in training; unseen suffixes back off
 * to shorter ones, ending at the unigram table. The stupid-backoff factor
 * multiplies a whole distribution, so after normalization it is a constant
 * and does not change next_logprobs; it is kept for the serialized model.
 *
 * An "instruct" surrogate is a sharpened copy: either every conditional is
 * raised to 1/tau and renormalized, or the model is retrained on a seeded
 * subset of the corpus.
 */

#include "divergauge/decoding.hpp"
#include "divergauge/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace divergauge {

// ============================================================================
// Vocabulary
// ============================================================================

class Vocabulary {
 public:
  static constexpr TokenId kBegin = 0;
  static constexpr TokenId kEnd = 1;
  static constexpr TokenId kUnknown = 2;

  Vocabulary() : words_{"<s>", "</s>", "<unk>"} { reindex(); }

  // Reserved markers followed by the sorted unique corpus words.
  static Vocabulary from_corpus(const std::vector<std::vector<std::string>>& corpus) {
    std::vector<std::string> words;
    for (const auto& seq : corpus) words.insert(words.end(), seq.begin(), seq.end());
    std::sort(words.begin(), words.end());
    words.erase(std::unique(words.begin(), words.end()), words.end());
    Vocabulary v;
    for (auto& w : words)
      if (!v.index_.count(w)) v.words_.push_back(std::move(w));
    v.reindex();
    return v;
  }

  static Vocabulary from_words(std::vector<std::string> words) {
    if (words.size() < 3 || words[0] != "<s>" || words[1] != "</s>" || words[2] != "<unk>")
      throw std::invalid_argument("Vocabulary: must start with <s>, </s>, <unk>");
    Vocabulary v;
    v.words_ = std::move(words);
    v.reindex();
    if (v.index_.size() != v.words_.size())
      throw std::invalid_argument("Vocabulary: duplicate words");
    return v;
  }

  std::size_t size() const { return words_.size(); }
  const std::string& word(TokenId id) const { return words_.at(id); }
  const std::vector<std::string>& words() const { return words_; }

  TokenId id(const std::string& w) const {
    auto it = index_.find(w);
    return it == index_.end() ? kUnknown : it->second;
  }

  TokenSeq encode(const std::vector<std::string>& tokens) const {
    TokenSeq out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(id(t));
    return out;
  }

  // Space-joined words; reserved markers are dropped.
  std::string decode(std::span<const TokenId> ids) const {
    std::string out;
    for (TokenId t : ids) {
      if (t <= kUnknown) continue;
      if (!out.empty()) out.push_back(' ');
      out += words_.at(t);
    }
    return out;
  }

  bool operator==(const Vocabulary& o) const { return words_ == o.words_; }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < words_.size(); ++i)
      index_.emplace(words_[i], static_cast<TokenId>(i));
  }

  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

// ============================================================================
// Sharpening spec
// ============================================================================

struct SharpenSpec {
  enum class Method { temperature, subset_retrain };
  Method method = Method::temperature;
  double tau = 0.6;        // temperature method, in (0, 1)
  double fraction = 0.5;   // subset method, in (0, 1)
  std::uint64_t seed = 0;  // subset selection

  static SharpenSpec temperature(double tau) { return {Method::temperature, tau, 0.5, 0}; }
  static SharpenSpec subset(double fraction, std::uint64_t seed) {
    return {Method::subset_retrain, 0.6, fraction, seed};
  }

  void validate() const {
    if (method == Method::temperature && !(tau > 0.0 && tau < 1.0))
      throw std::invalid_argument("SharpenSpec: tau must be in (0, 1), got " + std::to_string(tau));
    if (method == Method::subset_retrain && !(fraction > 0.0 && fraction < 1.0))
      throw std::invalid_argument("SharpenSpec: fraction must be in (0, 1), got " +
                                  std::to_string(fraction));
  }

  bool operator==(const SharpenSpec&) const = default;
};

// ============================================================================
// NGramLM
// ============================================================================

class NGramLM {
 public:
  struct ContextStats {
    std::uint64_t total = 0;
    std::vector<std::pair<TokenId, std::uint64_t>> next;  // ascending id
    bool operator==(const ContextStats&) const = default;
  };

  std::size_t order() const { return order_; }
  double smoothing() const { return smoothing_; }
  double backoff() const { return backoff_; }
  const Vocabulary& vocab() const { return vocab_; }
  std::size_t vocab_size() const { return vocab_.size(); }
  const std::optional<SharpenSpec>& sharpening() const { return sharpen_; }

  // Contexts seen in training, grouped by length (0 .. order-1).
  std::vector<TokenSeq> contexts() const {
    std::vector<TokenSeq> out;
    for (const auto& table : tables_) {
      std::vector<TokenSeq> keys;
      for (const auto& [key, _] : table) keys.push_back(unpack(key));
      std::sort(keys.begin(), keys.end());
      out.insert(out.end(), keys.begin(), keys.end());
    }
    return out;
  }

  const ContextStats* find(std::span<const TokenId> ctx) const {
    if (ctx.size() >= tables_.size()) return nullptr;
    const auto& table = tables_[ctx.size()];
    auto it = table.find(pack(ctx));
    return it == table.end() ? nullptr : &it->second;
  }

  // Normalized log-probabilities over the whole vocabulary.
  LogProbVector next_logprobs(std::span<const TokenId> context) const {
    for (std::size_t i = 0; i < context.size(); ++i) {
      if (context[i] >= vocab_.size())
        throw std::invalid_argument("next_logprobs: token id " + std::to_string(context[i]) +
                                    " at position " + std::to_string(i) +
                                    " is outside the vocabulary");
    }
    const std::size_t h = std::min(context.size(), order_ - 1);
    const ContextStats* stats = nullptr;
    for (std::size_t len = h + 1; len-- > 0;) {
      stats = find(context.subspan(context.size() - len));
      if (stats) break;
    }
    const double v = static_cast<double>(vocab_.size());
    const double denom = static_cast<double>(stats->total) + smoothing_ * v;
    LogProbVector out;
    out.values.assign(vocab_.size(), std::log(smoothing_ / denom));
    for (const auto& [id, c] : stats->next)
      out.values[id] = std::log((static_cast<double>(c) + smoothing_) / denom);
    out.normalized = true;
    if (sharpen_ && sharpen_->method == SharpenSpec::Method::temperature) {
      for (double& x : out.values) x /= sharpen_->tau;
      out = log_softmax(out);
    }
    return out;
  }

  bool operator==(const NGramLM& o) const {
    return order_ == o.order_ && smoothing_ == o.smoothing_ && backoff_ == o.backoff_ &&
           vocab_ == o.vocab_ && sharpen_ == o.sharpen_ && tables_ == o.tables_;
  }

  // NDJSON: one header line, then one line per training context.
  void save(std::ostream& os) const {
    nlohmann::json header = {{"type", "header"},       {"format", "divergauge-ngram"},
                             {"order", order_},        {"smoothing", smoothing_},
                             {"backoff", backoff_},    {"vocab", vocab_.words()}};
    if (sharpen_) {
      header["sharpen"] = {
          {"method", sharpen_->method == SharpenSpec::Method::temperature ? "temperature"
                                                                          : "subset_retrain"},
          {"tau", sharpen_->tau},
          {"fraction", sharpen_->fraction},
          {"seed", sharpen_->seed}};
    } else {
      header["sharpen"] = nullptr;
    }
    os << header.dump() << '\n';
    for (const auto& ctx : contexts()) {
      const ContextStats& s = *find(ctx);
      nlohmann::json rec = {{"type", "ctx"}, {"ctx", ctx}, {"total", s.total}};
      nlohmann::json next = nlohmann::json::array();
      for (const auto& [id, c] : s.next) next.push_back({id, c});
      rec["next"] = std::move(next);
      os << rec.dump() << '\n';
    }
  }

  static NGramLM load(std::istream& is) {
    std::string line;
    std::size_t lineno = 0;
    auto fail = [&](const std::string& what) -> NGramLM {
      throw std::runtime_error("ngram model line " + std::to_string(lineno) + ": " + what);
    };
    if (!std::getline(is, line)) return fail("missing header");
    ++lineno;
    NGramLM lm;
    try {
      const auto h = nlohmann::json::parse(line);
      if (h.at("type") != "header" || h.at("format") != "divergauge-ngram")
        return fail("not a divergauge-ngram header");
      lm.order_ = h.at("order").get<std::size_t>();
      lm.smoothing_ = h.at("smoothing").get<double>();
      lm.backoff_ = h.at("backoff").get<double>();
      lm.vocab_ = Vocabulary::from_words(h.at("vocab").get<std::vector<std::string>>());
      if (!h.at("sharpen").is_null()) {
        const auto& s = h["sharpen"];
        SharpenSpec spec;
        spec.method = s.at("method") == "temperature" ? SharpenSpec::Method::temperature
                                                      : SharpenSpec::Method::subset_retrain;
        spec.tau = s.at("tau").get<double>();
        spec.fraction = s.at("fraction").get<double>();
        spec.seed = s.at("seed").get<std::uint64_t>();
        lm.sharpen_ = spec;
      }
    } catch (const nlohmann::json::exception& e) {
      return fail(e.what());
    }
    if (lm.order_ == 0) return fail("order must be >= 1");
    lm.tables_.resize(lm.order_);
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        const auto r = nlohmann::json::parse(line);
        const auto ctx = r.at("ctx").get<TokenSeq>();
        if (ctx.size() >= lm.order_) return fail("context longer than order-1");
        ContextStats s;
        s.total = r.at("total").get<std::uint64_t>();
        for (const auto& e : r.at("next")) {
          const auto id = e.at(0).get<TokenId>();
          if (id >= lm.vocab_.size()) return fail("token id outside vocabulary");
          s.next.emplace_back(id, e.at(1).get<std::uint64_t>());
        }
        lm.tables_[ctx.size()].emplace(pack(ctx), std::move(s));
      } catch (const nlohmann::json::exception& e) {
        return fail(e.what());
      }
    }
    if (lm.tables_[0].empty()) return fail("missing unigram table");
    return lm;
  }

 private:
  friend NGramLM train_ngram_lm(const Vocabulary&, const std::vector<TokenSeq>&, std::size_t,
                                double);
  friend NGramLM sharpen_lm(const NGramLM&, const SharpenSpec&, std::span<const TokenSeq>);

  static std::string pack(std::span<const TokenId> ids) {
    std::string key(ids.size() * sizeof(TokenId), '\0');
    if (!ids.empty()) std::memcpy(key.data(), ids.data(), key.size());
    return key;
  }

  static TokenSeq unpack(const std::string& key) {
    TokenSeq ids(key.size() / sizeof(TokenId));
    if (!ids.empty()) std::memcpy(ids.data(), key.data(), key.size());
    return ids;
  }

  std::size_t order_ = 1;
  double smoothing_ = 0.01;
  double backoff_ = 0.4;
  Vocabulary vocab_;
  std::optional<SharpenSpec> sharpen_;
  std::vector<std::unordered_map<std::string, ContextStats>> tables_;
};

// Sequences are padded with order-1 begin markers and one end marker.
inline NGramLM train_ngram_lm(const Vocabulary& vocab, const std::vector<TokenSeq>& corpus,
                              std::size_t order, double smoothing = 0.01) {
  if (order == 0) throw std::invalid_argument("train_ngram_lm: order must be >= 1");
  if (corpus.empty()) throw std::invalid_argument("train_ngram_lm: empty corpus");
  if (!(smoothing > 0.0)) throw std::invalid_argument("train_ngram_lm: smoothing must be > 0");

  NGramLM lm;
  lm.order_ = order;
  lm.smoothing_ = smoothing;
  lm.vocab_ = vocab;
  lm.tables_.resize(order);

  std::vector<std::unordered_map<std::string, std::map<TokenId, std::uint64_t>>> raw(order);
  TokenSeq padded;
  for (const auto& seq : corpus) {
    padded.assign(order - 1, Vocabulary::kBegin);
    for (TokenId t : seq) {
      if (t >= vocab.size()) throw std::invalid_argument("train_ngram_lm: token outside vocabulary");
      padded.push_back(t);
    }
    padded.push_back(Vocabulary::kEnd);
    for (std::size_t pos = order - 1; pos < padded.size(); ++pos) {
      for (std::size_t len = 0; len < order; ++len) {
        const std::span<const TokenId> ctx(padded.data() + pos - len, len);
        ++raw[len][NGramLM::pack(ctx)][padded[pos]];
      }
    }
  }
  for (std::size_t len = 0; len < order; ++len) {
    for (auto& [key, counts] : raw[len]) {
      NGramLM::ContextStats s;
      for (const auto& [id, c] : counts) {
        s.total += c;
        s.next.emplace_back(id, c);
      }
      lm.tables_[len].emplace(key, std::move(s));
    }
  }
  return lm;
}

inline NGramLM train_ngram_lm(const std::vector<std::vector<std::string>>& corpus,
                              std::size_t order, double smoothing = 0.01) {
  if (corpus.empty()) throw std::invalid_argument("train_ngram_lm: empty corpus");
  const Vocabulary vocab = Vocabulary::from_corpus(corpus);
  std::vector<TokenSeq> ids;
  ids.reserve(corpus.size());
  for (const auto& seq : corpus) ids.push_back(vocab.encode(seq));
  return train_ngram_lm(vocab, ids, order, smoothing);
}

// `corpus` is only read by the subset method and must be the training corpus
// of `lm`, encoded with its vocabulary.
inline NGramLM sharpen_lm(const NGramLM& lm, const SharpenSpec& spec,
                          std::span<const TokenSeq> corpus = {}) {
  spec.validate();
  if (lm.sharpen_) throw std::invalid_argument("sharpen_lm: model is already sharpened");
  if (spec.method == SharpenSpec::Method::temperature) {
    NGramLM out = lm;
    out.sharpen_ = spec;
    return out;
  }
  if (corpus.empty())
    throw std::invalid_argument("sharpen_lm: subset retraining needs the training corpus");
  std::vector<std::size_t> idx(corpus.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(spec.seed);
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  const auto keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(spec.fraction * static_cast<double>(corpus.size()))));
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  std::vector<TokenSeq> subset;
  subset.reserve(keep);
  for (std::size_t i : idx) subset.push_back(corpus[i]);
  NGramLM out = train_ngram_lm(lm.vocab_, subset, lm.order_, lm.smoothing_);
  out.backoff_ = lm.backoff_;
  out.sharpen_ = spec;
  return out;
}

// Shannon entropy (nats) of a normalized log-prob vector.
inline double entropy(const LogProbVector& lp) {
  double h = 0.0;
  for (double v : lp.values)
    if (v != kNegInf) h -= std::exp(v) * v;
  return h;
}

class NGramProvider : public DistributionProvider {
 public:
  explicit NGramProvider(const NGramLM& lm) : lm_(&lm) {}
  std::size_t vocab_size() const override { return lm_->vocab_size(); }
  LogProbVector next_logprobs(std::span<const TokenId> context) override {
    return lm_->next_logprobs(context);
  }

 private:
  const NGramLM* lm_;
};

}  // namespace divergauge
