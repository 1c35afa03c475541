#pragma once

/**
 * Conformative decoding.
 *
 * At each step the instruct model's next-token distribution is truncated
 * (nucleus or top-k) to a valid set V. Inside V the sampling score is
 *
 *     score(x) = gamma * log p_instruct(x) + (1 - gamma) * log p_base(x)
 *
 * and every x outside V is masked to -inf. Scores are renormalized over V
 * before sampling. Mixing raw logits or normalized log-probs gives the same
 * distribution: each model's normalizer is a constant shift that cancels.
 *
 * With no base model attached the loop degenerates to plain truncated
 * sampling, and it is bit-identical to gamma = 1 with a base attached.
 */

#include "divergauge/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace divergauge {

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Logits or log-probabilities over a fixed vocabulary. -inf marks an
// impossible token.
struct LogProbVector {
  std::vector<double> values;
  bool normalized = false;

  std::size_t size() const { return values.size(); }

  static LogProbVector from_probabilities(std::span<const double> probs) {
    LogProbVector v;
    v.values.reserve(probs.size());
    for (double p : probs) v.values.push_back(p > 0.0 ? std::log(p) : kNegInf);
    v.normalized = true;
    return v;
  }
};

inline void check_log_values(const LogProbVector& v, const char* who) {
  for (std::size_t i = 0; i < v.values.size(); ++i) {
    const double x = v.values[i];
    if (std::isnan(x) || x == std::numeric_limits<double>::infinity())
      throw std::invalid_argument(std::string(who) + ": invalid value at token " +
                                  std::to_string(i));
  }
}

inline double log_sum_exp(std::span<const double> xs) {
  double m = kNegInf;
  for (double x : xs) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

inline LogProbVector log_softmax(const LogProbVector& v) {
  const double z = log_sum_exp(v.values);
  if (z == kNegInf) throw std::invalid_argument("log_softmax: all tokens have zero probability");
  LogProbVector out;
  out.values.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out.values[i] = v.values[i] - z;
  out.normalized = true;
  return out;
}

inline std::vector<double> softmax(const LogProbVector& v) {
  const auto lp = log_softmax(v);
  std::vector<double> p(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) p[i] = std::exp(lp.values[i]);
  return p;
}

inline LogProbVector apply_temperature(LogProbVector v, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (temperature != 1.0) {
    for (double& x : v.values) x /= temperature;
    v.normalized = false;
  }
  return v;
}

// ============================================================================
// Truncation
// ============================================================================

struct ValidSet {
  std::vector<TokenId> ids;  // ascending, unique, non-empty
  double mass = 0.0;         // retained probability mass of the truncated distribution

  bool contains(TokenId id) const { return std::binary_search(ids.begin(), ids.end(), id); }
};

namespace detail {

// Token ids by probability descending, lower id first on ties.
inline std::vector<TokenId> rank_tokens(const std::vector<double>& probs) {
  std::vector<TokenId> order(probs.size());
  std::iota(order.begin(), order.end(), TokenId{0});
  std::sort(order.begin(), order.end(), [&](TokenId a, TokenId b) {
    return probs[a] > probs[b] || (probs[a] == probs[b] && a < b);
  });
  return order;
}

}  // namespace detail

// Smallest probability-ranked prefix whose mass reaches p.
inline ValidSet truncate_nucleus(const LogProbVector& dist, double p) {
  if (!(p > 0.0 && p <= 1.0))
    throw std::invalid_argument("truncate_nucleus: p must be in (0, 1], got " + std::to_string(p));
  const auto probs = softmax(dist);
  const auto order = detail::rank_tokens(probs);
  ValidSet vs;
  double cum = 0.0;
  for (TokenId id : order) {
    if (probs[id] <= 0.0) break;
    vs.ids.push_back(id);
    cum += probs[id];
    if (p < 1.0 && cum >= p) break;
  }
  vs.mass = std::min(cum, 1.0);
  std::sort(vs.ids.begin(), vs.ids.end());
  return vs;
}

inline ValidSet truncate_topk(const LogProbVector& dist, std::size_t k) {
  if (k == 0) throw std::invalid_argument("truncate_topk: k must be >= 1");
  const auto probs = softmax(dist);
  const auto order = detail::rank_tokens(probs);
  ValidSet vs;
  double cum = 0.0;
  for (TokenId id : order) {
    if (vs.ids.size() == k || probs[id] <= 0.0) break;
    vs.ids.push_back(id);
    cum += probs[id];
  }
  vs.mass = std::min(cum, 1.0);
  std::sort(vs.ids.begin(), vs.ids.end());
  return vs;
}

struct Truncation {
  enum class Kind { nucleus, top_k };
  Kind kind = Kind::nucleus;
  double p = 0.95;
  std::size_t k = 50;

  static Truncation nucleus(double p) { return {Kind::nucleus, p, 50}; }
  static Truncation top_k(std::size_t k) { return {Kind::top_k, 0.95, k}; }

  ValidSet apply(const LogProbVector& dist) const {
    return kind == Kind::nucleus ? truncate_nucleus(dist, p) : truncate_topk(dist, k);
  }
};

// ============================================================================
// Mixing
// ============================================================================

// Keeps only the valid tokens and renormalizes them; everything else -inf.
inline LogProbVector restrict_to_valid(const LogProbVector& scores, const ValidSet& valid) {
  if (valid.ids.empty()) throw std::invalid_argument("restrict_to_valid: empty valid set");
  std::vector<double> kept;
  kept.reserve(valid.ids.size());
  for (TokenId id : valid.ids) {
    if (id >= scores.size())
      throw std::invalid_argument("restrict_to_valid: token id " + std::to_string(id) +
                                  " outside vocabulary");
    kept.push_back(scores.values[id]);
  }
  const double z = log_sum_exp(kept);
  if (z == kNegInf)
    throw std::invalid_argument("restrict_to_valid: valid set carries no probability");
  LogProbVector out;
  out.values.assign(scores.size(), kNegInf);
  for (TokenId id : valid.ids) out.values[id] = scores.values[id] - z;
  out.normalized = true;
  return out;
}

// gamma-weighted sum of the two scores, skipping a zero-weight term so that
// the endpoints reproduce a single model exactly.
inline double mix_scores(double instruct, double base, double gamma) {
  if (gamma == 1.0) return instruct;
  if (gamma == 0.0) return base;
  return gamma * instruct + (1.0 - gamma) * base;
}

inline LogProbVector conformative_mix(const LogProbVector& instruct, const LogProbVector& base,
                                      const ValidSet& valid, double gamma) {
  if (instruct.size() != base.size())
    throw std::invalid_argument("conformative_mix: vocabulary mismatch (instruct " +
                                std::to_string(instruct.size()) + ", base " +
                                std::to_string(base.size()) + ")");
  if (valid.ids.empty()) throw std::invalid_argument("conformative_mix: empty valid set");
  if (!(gamma >= 0.0 && gamma <= 1.0))
    throw std::invalid_argument("conformative_mix: gamma must be in [0, 1], got " +
                                std::to_string(gamma));
  LogProbVector scores;
  scores.values.assign(instruct.size(), kNegInf);
  for (TokenId id : valid.ids) {
    if (id >= instruct.size())
      throw std::invalid_argument("conformative_mix: token id outside vocabulary");
    scores.values[id] = mix_scores(instruct.values[id], base.values[id], gamma);
  }
  return restrict_to_valid(scores, valid);
}

// ============================================================================
// Sampling
// ============================================================================

// Inverse-CDF draw over tokens in ascending id order. Consumes exactly one
// uniform from the stream.
inline TokenId sample_token(const LogProbVector& dist, Rng& rng) {
  double total = 0.0;
  for (double v : dist.values)
    if (v != kNegInf) total += std::exp(v);
  if (std::abs(total - 1.0) > 1e-6)
    throw std::invalid_argument("sample_token: distribution is not normalized (mass " +
                                std::to_string(total) + ")");
  const double u = rng.uniform();
  double cum = 0.0;
  TokenId last = 0;
  for (TokenId id = 0; id < dist.size(); ++id) {
    if (dist.values[id] == kNegInf) continue;
    last = id;
    cum += std::exp(dist.values[id]);
    if (u < cum) return id;
  }
  return last;
}

// ============================================================================
// Generation loop
// ============================================================================

class DistributionProvider {
 public:
  virtual ~DistributionProvider() = default;
  virtual std::size_t vocab_size() const = 0;
  // Next-token logits or log-probs for the given context.
  virtual LogProbVector next_logprobs(std::span<const TokenId> context) = 0;
};

struct DecodeConfig {
  Truncation truncation = Truncation::nucleus(0.95);
  double gamma = 0.5;  // only used when a base model is attached
  double temperature = 1.0;
  std::size_t max_tokens = 500;
  std::uint64_t seed = 0;
  std::vector<TokenId> stop_tokens;
  bool mix_before_truncation = false;  // ablation only

  void validate() const {
    if (truncation.kind == Truncation::Kind::nucleus && !(truncation.p > 0.0 && truncation.p <= 1.0))
      throw std::invalid_argument("DecodeConfig: nucleus p must be in (0, 1]");
    if (truncation.kind == Truncation::Kind::top_k && truncation.k == 0)
      throw std::invalid_argument("DecodeConfig: top-k needs k >= 1");
    if (!(gamma >= 0.0 && gamma <= 1.0))
      throw std::invalid_argument("DecodeConfig: gamma must be in [0, 1]");
    if (!(temperature > 0.0)) throw std::invalid_argument("DecodeConfig: temperature must be > 0");
  }
};

struct StepRecord {
  TokenId token = 0;
  std::size_t valid_size = 0;
  double valid_mass = 0.0;
};

enum class StopReason { stop_token, max_tokens };

inline const char* to_string(StopReason r) {
  return r == StopReason::stop_token ? "stop_token" : "max_tokens";
}

struct Generation {
  TokenSeq tokens;  // continuation only; a terminating stop token is not included
  std::vector<StepRecord> steps;
  StopReason stop_reason = StopReason::max_tokens;
};

class VocabDriftError : public std::runtime_error {
 public:
  VocabDriftError(std::size_t step, const std::string& what)
      : std::runtime_error("generation aborted at step " + std::to_string(step) + ": " + what),
        step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

inline Generation generate_sequence(DistributionProvider& instruct, DistributionProvider* base,
                                    const DecodeConfig& cfg, std::span<const TokenId> prompt) {
  cfg.validate();
  const std::size_t vocab = instruct.vocab_size();
  if (base && base->vocab_size() != vocab)
    throw std::invalid_argument("generate_sequence: base vocabulary (" +
                                std::to_string(base->vocab_size()) +
                                ") differs from instruct vocabulary (" + std::to_string(vocab) +
                                ")");

  Rng rng(cfg.seed);
  Generation out;
  TokenSeq context(prompt.begin(), prompt.end());

  auto fetch = [&](DistributionProvider& model, std::size_t step, const char* name) {
    LogProbVector v = model.next_logprobs(context);
    if (v.size() != vocab)
      throw VocabDriftError(step, std::string(name) + " returned " + std::to_string(v.size()) +
                                      " values, expected " + std::to_string(vocab));
    check_log_values(v, name);
    return apply_temperature(std::move(v), cfg.temperature);
  };

  for (std::size_t step = 0; step < cfg.max_tokens; ++step) {
    const LogProbVector inst = fetch(instruct, step, "instruct");
    LogProbVector dist;
    ValidSet valid;
    if (base && cfg.mix_before_truncation) {
      const LogProbVector b = fetch(*base, step, "base");
      LogProbVector mixed;
      mixed.values.resize(vocab);
      for (std::size_t i = 0; i < vocab; ++i)
        mixed.values[i] = mix_scores(inst.values[i], b.values[i], cfg.gamma);
      valid = cfg.truncation.apply(mixed);
      dist = restrict_to_valid(mixed, valid);
    } else {
      valid = cfg.truncation.apply(inst);
      if (base) {
        dist = conformative_mix(inst, fetch(*base, step, "base"), valid, cfg.gamma);
      } else {
        dist = restrict_to_valid(inst, valid);
      }
    }

    const TokenId tok = sample_token(dist, rng);
    out.steps.push_back({tok, valid.ids.size(), valid.mass});
    if (std::find(cfg.stop_tokens.begin(), cfg.stop_tokens.end(), tok) != cfg.stop_tokens.end()) {
      out.stop_reason = StopReason::stop_token;
      return out;
    }
    out.tokens.push_back(tok);
    context.push_back(tok);
  }
  out.stop_reason = StopReason::max_tokens;
  return out;
}

}  // namespace divergauge
