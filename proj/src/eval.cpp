#include "clie/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <unordered_map>

#include "clie/error.hpp"

namespace clie::eval {

using corpus::TaggedVocabulary;
using corpus::TokenId;

std::vector<TokenId> greedy_decode(const model::ModelParams& params, std::span<const TokenId> source,
                                   std::size_t max_len) {
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
  const auto encoded = model::encode(source, params);
  auto state = model::initial_state(encoded, params);
  std::vector<TokenId> out;
  TokenId prev = TaggedVocabulary::kBos;
  while (out.size() < max_len) {
    state = model::decoder_step(prev, state, encoded, params);
    const ad::Var dist = model::project_distribution(state.h, params.output);
    const auto p = dist->value().data();
    TokenId best = 0;
    for (TokenId v = 1; v < p.size(); ++v) {
      if (p[v] > p[best]) best = v;
    }
    if (best == TaggedVocabulary::kEos) break;
    out.push_back(best);
    prev = best;
  }
  return out;
}

namespace {

void require_parallel(std::size_t h, std::size_t r) {
  if (h != r) {
    throw ValidationError("hypothesis/reference count mismatch: " + std::to_string(h) + " vs " + std::to_string(r));
  }
}

std::map<std::string, std::size_t> ngram_counts(const Tokens& toks, std::size_t n) {
  std::map<std::string, std::size_t> counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    std::string key;
    for (std::size_t j = i; j < i + n; ++j) {
      key += toks[j];
      key += '\x1f';
    }
    ++counts[key];
  }
  return counts;
}

bool is_eos(const std::string& t) { return t == TaggedVocabulary::kEosSurface; }

Tokens strip_eos(const Tokens& toks) {
  Tokens out;
  out.reserve(toks.size());
  for (const auto& t : toks) {
    if (!is_eos(t)) out.push_back(t);
  }
  return out;
}

}  // namespace

double corpus_bleu(std::span<const Tokens> hypotheses, std::span<const Tokens> references, int max_n) {
  require_parallel(hypotheses.size(), references.size());
  if (references.empty()) throw ValidationError("corpus_bleu: no references");
  if (max_n < 1) throw ConfigError("corpus_bleu: max_n must be >= 1");
  std::vector<std::size_t> matches(max_n, 0), totals(max_n, 0);
  std::size_t hyp_len = 0, ref_len = 0;
  for (std::size_t k = 0; k < hypotheses.size(); ++k) {
    const Tokens hyp = strip_eos(hypotheses[k]);
    const Tokens ref = strip_eos(references[k]);
    hyp_len += hyp.size();
    ref_len += ref.size();
    for (int n = 1; n <= max_n; ++n) {
      const auto hc = ngram_counts(hyp, n);
      const auto rc = ngram_counts(ref, n);
      for (const auto& [g, c] : hc) {
        auto it = rc.find(g);
        if (it != rc.end()) matches[n - 1] += std::min(c, it->second);
      }
      if (hyp.size() >= static_cast<std::size_t>(n)) totals[n - 1] += hyp.size() - n + 1;
    }
  }
  if (hyp_len == 0) return 0.0;
  double log_precision = 0.0;
  for (int n = 0; n < max_n; ++n) {
    if (matches[n] == 0 || totals[n] == 0) return 0.0;
    log_precision += std::log(static_cast<double>(matches[n]) / static_cast<double>(totals[n])) / max_n;
  }
  const double bp = hyp_len >= ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len) / hyp_len);
  return bp * std::exp(log_precision);
}

PRF tag_f1(std::span<const Tokens> hypotheses, std::span<const Tokens> references, corpus::SemanticTag tag) {
  require_parallel(hypotheses.size(), references.size());
  std::size_t matched = 0, hyp_total = 0, ref_total = 0;
  auto tagged_counts = [tag](const Tokens& toks, std::size_t& total) {
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& t : toks) {
      if (is_eos(t) || corpus::parse_tagged_token(t).tag != tag) continue;
      ++counts[t];
      ++total;
    }
    return counts;
  };
  for (std::size_t k = 0; k < hypotheses.size(); ++k) {
    const auto hc = tagged_counts(hypotheses[k], hyp_total);
    const auto rc = tagged_counts(references[k], ref_total);
    for (const auto& [t, c] : hc) {
      auto it = rc.find(t);
      if (it != rc.end()) matched += std::min(c, it->second);
    }
  }
  PRF out;
  out.precision = hyp_total ? static_cast<double>(matched) / hyp_total : 0.0;
  out.recall = ref_total ? static_cast<double>(matched) / ref_total : 0.0;
  const double s = out.precision + out.recall;
  out.f1 = s > 0.0 ? 2.0 * out.precision * out.recall / s : 0.0;
  return out;
}

EvalResult score(std::span<const Tokens> hypotheses, std::span<const Tokens> references) {
  EvalResult r;
  r.bleu = corpus_bleu(hypotheses, references);
  r.pred = tag_f1(hypotheses, references, corpus::SemanticTag::Predicate);
  r.arg = tag_f1(hypotheses, references, corpus::SemanticTag::Argument);
  return r;
}

std::vector<Tokens> decode_corpus(const model::ModelParams& params, const TaggedVocabulary& vocab,
                                  std::span<const corpus::RawPair> pairs, std::size_t max_len) {
  std::vector<Tokens> hyps;
  hyps.reserve(pairs.size());
  for (const auto& p : pairs) {
    const auto ids = greedy_decode(params, vocab.encode_source(p.source), max_len);
    hyps.push_back(vocab.decode_target(ids));
  }
  return hyps;
}

EvalResult evaluate(const model::ModelParams& params, const TaggedVocabulary& vocab,
                    std::span<const corpus::RawPair> pairs, std::size_t max_len) {
  const auto hyps = decode_corpus(params, vocab, pairs, max_len);
  std::vector<Tokens> refs;
  refs.reserve(pairs.size());
  for (const auto& p : pairs) refs.push_back(p.target);
  return score(hyps, refs);
}

double halo_tag_accuracy(const model::ModelParams& params, std::span<const corpus::ParallelExample> examples,
                         const corpus::ClassPartition& partition, const halo::BetaParams& beta, std::uint64_t seed) {
  halo::Rng rng(seed);
  std::size_t correct = 0, total = 0;
  for (const auto& ex : examples) {
    const auto encoded = model::encode(ex.source, params);
    auto state = model::initial_state(encoded, params);
    TokenId prev = TaggedVocabulary::kBos;
    for (TokenId gold : ex.target) {
      state = model::decoder_step(prev, state, encoded, params);
      const auto sample = halo::sample_neighbor(state.h->value(), beta, rng);
      const auto p = model::project_distribution(ad::constant(sample.h_prime), params.output);
      const auto q = halo::aggregate_tags(p->value().data(), partition);
      const auto best = std::max_element(q.q.begin(), q.q.end()) - q.q.begin();
      correct += static_cast<std::size_t>(best) == partition.class_of(gold);
      ++total;
      prev = gold;
    }
  }
  return total ? static_cast<double>(correct) / total : 0.0;
}

void write_metrics(std::ostream& os, const EvalResult& r) {
  char buf[64];
  auto line = [&](const char* key, double v) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    os << key << " = " << buf << '\n';
  };
  line("bleu", r.bleu);
  line("bleu_x100", 100.0 * r.bleu);
  line("f1_pred.p", r.pred.precision);
  line("f1_pred.r", r.pred.recall);
  line("f1_pred.f1", r.pred.f1);
  line("f1_arg.p", r.arg.precision);
  line("f1_arg.r", r.arg.recall);
  line("f1_arg.f1", r.arg.f1);
  if (r.halo_tag_accuracy) line("halo_tag_acc", *r.halo_tag_accuracy);
}

}  // namespace clie::eval
