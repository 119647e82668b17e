#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clie/corpus.hpp"
#include "clie/halo.hpp"
#include "clie/model.hpp"

namespace clie::eval {

using Tokens = std::vector<std::string>;

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct EvalResult {
  double bleu = 0.0;
  PRF pred;
  PRF arg;
  // Teacher-forced accuracy of the class argmax of q' at sampled neighbors.
  std::optional<double> halo_tag_accuracy;
};

// Argmax decoding (lowest id wins ties) until EOS or max_len tokens; EOS is
// not part of the output.
std::vector<corpus::TokenId> greedy_decode(const model::ModelParams& params, std::span<const corpus::TokenId> source,
                                           std::size_t max_len);

// Corpus BLEU over single references: clipped n-gram precisions aggregated
// over the corpus, uniform geometric mean, brevity penalty min(1, e^{1-r/c}).
// Zero when any order has no matches. Unsmoothed.
double corpus_bleu(std::span<const Tokens> hypotheses, std::span<const Tokens> references, int max_n = 4);

// Corpus-level multiset overlap restricted to tokens carrying `tag`.
PRF tag_f1(std::span<const Tokens> hypotheses, std::span<const Tokens> references, corpus::SemanticTag tag);

EvalResult score(std::span<const Tokens> hypotheses, std::span<const Tokens> references);

std::vector<Tokens> decode_corpus(const model::ModelParams& params, const corpus::TaggedVocabulary& vocab,
                                  std::span<const corpus::RawPair> pairs, std::size_t max_len);

// Hypotheses are compared against the raw (pre-OOV) reference tokens.
EvalResult evaluate(const model::ModelParams& params, const corpus::TaggedVocabulary& vocab,
                    std::span<const corpus::RawPair> pairs, std::size_t max_len);

// Fraction of gold steps whose sampled neighbor h'_t assigns the most class
// mass to the gold class c_t. Uses its own RNG seeded with `seed`.
double halo_tag_accuracy(const model::ModelParams& params, std::span<const corpus::ParallelExample> examples,
                         const corpus::ClassPartition& partition, const halo::BetaParams& beta, std::uint64_t seed);

// key = value lines: bleu, bleu_x100, f1_pred.{p,r,f1}, f1_arg.{p,r,f1}
// and halo_tag_acc when present.
void write_metrics(std::ostream& os, const EvalResult& result);

}  // namespace clie::eval
