#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "clie/error.hpp"
#include "clie/eval.hpp"

using namespace clie;
using namespace clie::eval;
using corpus::SemanticTag;

namespace {

Tokens split(const std::string& s) {
  Tokens out;
  std::istringstream in(s);
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

std::vector<Tokens> random_corpus(std::mt19937_64& rng, std::size_t n) {
  static const std::vector<std::string> pool = {"eat:p", "run:p", "fish:a", "dog:a", "man:a", "the", "chips:a", "see:p"};
  std::vector<Tokens> out(n);
  for (auto& s : out) {
    const std::size_t len = 1 + rng() % 7;
    for (std::size_t i = 0; i < len; ++i) s.push_back(pool[rng() % pool.size()]);
  }
  return out;
}

}  // namespace

TEST_CASE("BLEU hand example") {
  const std::vector<Tokens> hyp = {split("a b c d e")};
  const std::vector<Tokens> ref = {split("a b c d f")};
  CHECK(std::abs(corpus_bleu(hyp, ref) - std::pow(0.8 * 0.75 * (2.0 / 3.0) * 0.5, 0.25)) < 1e-12);
  CHECK(std::abs(corpus_bleu(hyp, ref) - 0.66874) < 1e-4);
}

TEST_CASE("BLEU limits and brevity") {
  const std::vector<Tokens> same = {split("x y z w v"), split("a b c d")};
  CHECK(corpus_bleu(same, same) == 1.0);
  CHECK(corpus_bleu(std::vector<Tokens>{split("q r s t")}, std::vector<Tokens>{split("a b c d")}) == 0.0);
  // Only three tokens: no 4-grams at all.
  CHECK(corpus_bleu(std::vector<Tokens>{split("a b c")}, std::vector<Tokens>{split("a b c")}) == 0.0);
  // Short hypothesis: every n-gram matches, BP = e^{1 - 6/4}.
  const double bp = corpus_bleu(std::vector<Tokens>{split("a b c d")}, std::vector<Tokens>{split("a b c d e f")});
  CHECK(std::abs(bp - std::exp(1.0 - 6.0 / 4.0)) < 1e-12);
  // Clipping: "the the the the" against "the cat" counts one unigram.
  CHECK(corpus_bleu(std::vector<Tokens>{split("the the the the")}, std::vector<Tokens>{split("the cat")}) == 0.0);
  CHECK_THROWS_AS(corpus_bleu(same, std::vector<Tokens>{same[0]}), ValidationError);
}

TEST_CASE("tag F1 hand example") {
  const std::vector<Tokens> hyp = {split("eat:p fish:a fish:a")};
  const std::vector<Tokens> ref = {split("eat:p fish:a chips:a")};
  const auto arg = tag_f1(hyp, ref, SemanticTag::Argument);
  CHECK(arg.precision == 0.5);
  CHECK(arg.recall == 0.5);
  CHECK(arg.f1 == 0.5);
  const auto pred = tag_f1(hyp, ref, SemanticTag::Predicate);
  CHECK(pred.f1 == 1.0);

  const auto none = tag_f1(std::vector<Tokens>{split("the fish:a")}, std::vector<Tokens>{split("eat:p")},
                           SemanticTag::Predicate);
  CHECK(none.precision == 0.0);
  CHECK(none.f1 == 0.0);
  CHECK_THROWS_AS(tag_f1(hyp, std::vector<Tokens>{}, SemanticTag::Argument), ValidationError);
}

TEST_CASE("end markers are not scored") {
  const std::vector<Tokens> hyp = {split("a b c d </s>")};
  const std::vector<Tokens> ref = {split("a b c d")};
  CHECK(corpus_bleu(hyp, ref) == 1.0);
  const auto r = score(hyp, ref);
  CHECK(r.bleu == 1.0);
}

TEST_CASE("metric properties") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 6;
    auto hyp = random_corpus(rng, n);
    auto ref = random_corpus(rng, n);
    const auto base = score(hyp, ref);
    for (double v : {base.bleu, base.pred.precision, base.pred.recall, base.pred.f1, base.arg.precision,
                     base.arg.recall, base.arg.f1}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    if (base.pred.precision + base.pred.recall > 0.0) {
      const double f = 2 * base.pred.precision * base.pred.recall / (base.pred.precision + base.pred.recall);
      CHECK(std::abs(base.pred.f1 - f) < 1e-15);
    }

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Tokens> ph, pr, dh = hyp, dr = ref;
    for (std::size_t i : perm) {
      ph.push_back(hyp[i]);
      pr.push_back(ref[i]);
    }
    dh.insert(dh.end(), hyp.begin(), hyp.end());
    dr.insert(dr.end(), ref.begin(), ref.end());
    for (const auto& other : {score(ph, pr), score(dh, dr)}) {
      CHECK(std::abs(other.bleu - base.bleu) < 1e-12);
      CHECK(other.pred.f1 == doctest::Approx(base.pred.f1).epsilon(1e-12));
      CHECK(other.arg.f1 == doctest::Approx(base.arg.f1).epsilon(1e-12));
    }

    // Untagged tokens touch neither F1.
    auto noisy = hyp;
    for (auto& s : noisy) s.push_back("the");
    const auto with_special = score(noisy, ref);
    CHECK(with_special.pred.f1 == base.pred.f1);
    CHECK(with_special.arg.f1 == base.arg.f1);
  }
}

TEST_CASE("greedy decoding") {
  const std::vector<corpus::RawPair> raw = {corpus::parse_corpus_line("ka lo\tfire:p gun:a")};
  const auto vocab = corpus::build_vocabulary(raw, 1);
  const std::vector<corpus::TokenId> src = {1, 2};

  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    model::ModelParams p({vocab.source_size(), vocab.target_size(), 4, 3});
    std::mt19937_64 rng(seed);
    p.init_uniform(rng, 1.0);
    const auto out = greedy_decode(p, src, 5);
    CHECK(out.size() <= 5);
    for (auto id : out) CHECK(id != corpus::TaggedVocabulary::kEos);

    // Recompute the first step by hand.
    const auto enc = model::encode(src, p);
    const auto s1 = model::decoder_step(corpus::TaggedVocabulary::kBos, model::initial_state(enc, p), enc, p);
    const ad::Var dist = model::project_distribution(s1.h, p.output);
    const auto q = dist->value().data();
    const auto first = static_cast<corpus::TokenId>(std::max_element(q.begin(), q.end()) - q.begin());
    if (first == corpus::TaggedVocabulary::kEos) {
      CHECK(out.empty());
    } else {
      REQUIRE_FALSE(out.empty());
      CHECK(out[0] == first);
    }
  }

  // Zero output weights give a uniform distribution: the lowest id wins.
  model::ModelParams flat({vocab.source_size(), vocab.target_size(), 4, 3});
  CHECK(greedy_decode(flat, src, 3) == std::vector<corpus::TokenId>{0, 0, 0});

  // A large bias toward EOS stops immediately.
  model::ModelParams eos({vocab.source_size(), vocab.target_size(), 4, 3});
  std::mt19937_64 rng(1);
  eos.init_uniform(rng, 0.5);
  auto& w = eos.output->mutable_value();
  for (double& v : w.data()) v = 0.0;
  for (double& v : eos.combine_weight->mutable_value().data()) v = 0.0;
  eos.combine_bias->mutable_value() = ad::Array::vector({0.9, 0.9, 0.9, 0.9});
  for (std::size_t c = 0; c < 4; ++c) w[corpus::TaggedVocabulary::kEos * 4 + c] = 10.0;
  CHECK(greedy_decode(eos, src, 5).empty());
}

TEST_CASE("metrics output") {
  EvalResult r;
  r.bleu = 0.25;
  r.pred = {0.5, 0.25, 1.0 / 3.0};
  std::ostringstream os;
  write_metrics(os, r);
  const std::string s = os.str();
  CHECK(s.find("bleu = 0.250000\n") == 0);
  CHECK(s.find("bleu_x100 = 25.000000\n") != std::string::npos);
  CHECK(s.find("f1_pred.f1 = 0.333333\n") != std::string::npos);
  CHECK(s.find("f1_arg.p = 0.000000\n") != std::string::npos);
  CHECK(s.find("halo_tag_acc") == std::string::npos);
  r.halo_tag_accuracy = 0.5;
  std::ostringstream with;
  write_metrics(with, r);
  CHECK(with.str().find("halo_tag_acc = 0.500000\n") != std::string::npos);
}

TEST_CASE("halo tag accuracy") {
  const std::vector<corpus::RawPair> raw = {corpus::parse_corpus_line("ka lo mi\tfire:p gun:a man:a"),
                                            corpus::parse_corpus_line("lo tu\trun:p dog:a")};
  const auto vocab = corpus::build_vocabulary(raw, 1);
  const auto part = corpus::partition_classes(vocab, corpus::PartitionScheme::by_tag());
  std::vector<corpus::ParallelExample> ex;
  for (const auto& p : raw) ex.push_back(vocab.encode(p));
  model::ModelParams p({vocab.source_size(), vocab.target_size(), 4, 3});
  std::mt19937_64 rng(4);
  p.init_uniform(rng, 0.5);
  const double a = halo_tag_accuracy(p, ex, part, {1.0, 19.0}, 9);
  CHECK(a >= 0.0);
  CHECK(a <= 1.0);
  CHECK(a == halo_tag_accuracy(p, ex, part, {1.0, 19.0}, 9));
}
