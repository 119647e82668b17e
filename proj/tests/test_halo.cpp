#include <doctest.h>

#include <cmath>
#include <random>

#include "clie/error.hpp"
#include "clie/halo.hpp"

using namespace clie;
using namespace clie::halo;
using ad::Array;

namespace {

struct Toy {
  corpus::TaggedVocabulary vocab;
  model::ModelParams params;
  std::vector<corpus::ParallelExample> examples;
};

Toy make_toy(std::uint64_t seed = 1, std::size_t hidden = 4) {
  const std::vector<corpus::RawPair> raw = {corpus::parse_corpus_line("ka lo mi\tfire:p gun:a man:a"),
                                            corpus::parse_corpus_line("lo tu\trun:p dog:a x")};
  auto vocab = corpus::build_vocabulary(raw, 1);
  model::ModelParams params({vocab.source_size(), vocab.target_size(), hidden, 3});
  std::mt19937_64 rng(seed);
  params.init_uniform(rng, 0.5);
  std::vector<corpus::ParallelExample> examples;
  for (const auto& p : raw) examples.push_back(vocab.encode(p));
  return {std::move(vocab), std::move(params), std::move(examples)};
}

double mean_lambda(const BetaParams& b, int n, std::uint64_t seed) {
  Rng rng(seed);
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    const double l = sample_lambda(b, rng);
    REQUIRE(l > 0.0);
    REQUIRE(l < 1.0);
    s += l;
  }
  return s / n;
}

}  // namespace

TEST_CASE("Beta draws") {
  CHECK(std::abs(mean_lambda({1.0, 1.0}, 100000, 1) - 0.5) < 0.01);
  CHECK(std::abs(mean_lambda({19.0, 1.0}, 100000, 2) - 0.95) < 0.01);
  CHECK(std::abs(mean_lambda({1.0, 19.0}, 100000, 3) - 0.05) < 0.005);
  // Tiny alpha drives many gamma draws to underflow; they must be rejected, not returned.
  CHECK(mean_lambda({0.01, 19.99}, 20000, 4) < 0.01);
  Rng rng(1);
  CHECK_THROWS_AS(sample_lambda({0.0, 1.0}, rng), ConfigError);
  CHECK_THROWS_AS(sample_lambda({1.0, -2.0}, rng), ConfigError);
  CHECK(BetaParams{}.mean() == doctest::Approx(0.05));
}

TEST_CASE("neighbor geometry") {
  CHECK(interpolate(Array::vector({0, 0}), Array::vector({0.8, -0.4}), 0.5) == Array::vector({0.4, -0.2}));

  Rng rng(3);
  const auto h = Array::vector({0.2, -0.5, 0.9});
  const auto at0 = sample_neighbor(h, {}, rng, 0.0);
  CHECK(at0.h_prime == h);
  const auto at1 = sample_neighbor(h, {}, rng, 1.0);
  for (std::size_t i = 0; i < h.size(); ++i) CHECK(std::abs(at1.h_prime[i] - at1.h_corner[i]) <= 1e-15);

  std::uniform_real_distribution<double> u(-0.999, 0.999);
  for (int trial = 0; trial < 2000; ++trial) {
    Array x(ad::Shape::vector(1 + trial % 6));
    for (double& v : x.data()) v = u(rng);
    const auto s = sample_neighbor(x, {2.0, 3.0}, rng);
    CHECK(s.lambda > 0.0);
    CHECK(s.lambda < 1.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(std::abs(s.h_corner[i]) < 1.0);
      CHECK(std::abs(s.h_prime[i]) < 1.0);
      CHECK(std::abs(s.h_prime[i] - (x[i] + s.lambda * (s.h_corner[i] - x[i]))) <= 1e-12);
    }
  }

  CHECK_THROWS_AS(sample_neighbor(Array::vector({0.0, 1.0}), {}, rng), DomainError);
  CHECK_THROWS_AS(sample_neighbor(Array::vector({-1.5}), {}, rng), DomainError);
  CHECK_THROWS_AS(sample_neighbor(Array::vector({0.0}), {}, rng, 1.5), ConfigError);
}

TEST_CASE("tag aggregation") {
  const corpus::ClassPartition one(std::vector<std::size_t>(4, 0));
  const std::vector<double> p4 = {0.1, 0.2, 0.3, 0.4};
  CHECK(aggregate_tags(p4, one)[0] == doctest::Approx(1.0));

  const corpus::ClassPartition pa({0, 0, 1});
  const std::vector<double> p = {0.2, 0.5, 0.3};
  const auto q = aggregate_tags(p, pa);
  CHECK(q[0] == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(q[1] == doctest::Approx(0.3).epsilon(1e-15));

  const corpus::ClassPartition single({0, 1, 2, 3});
  const auto qs = aggregate_tags(p4, single);
  for (std::size_t v = 0; v < 4; ++v) CHECK(qs[v] == p4[v]);

  CHECK_THROWS_AS(aggregate_tags(p, single), ValidationError);
}

TEST_CASE("aggregation dominates the members of each class") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t v = 3 + rng() % 30;
    std::vector<double> p(v);
    double z = 0.0;
    for (double& x : p) z += (x = u(rng) + 1e-12);
    for (double& x : p) x /= z;
    std::vector<std::size_t> map(v);
    for (std::size_t i = 0; i < v; ++i) map[i] = i < 3 ? i : rng() % 3;
    const corpus::ClassPartition part(map);
    const auto q = aggregate_tags(p, part);
    CHECK(std::abs(q.total() - 1.0) < 1e-9);
    for (std::size_t i = 0; i < v; ++i) CHECK(q[map[i]] >= p[i]);
  }
}

TEST_CASE("halo config validation") {
  HaloConfig c;
  c.validate();
  c.n_neighbors = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.weight = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.beta.alpha = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.enabled = false;
  c.validate();
  CHECK_FALSE(c.active());
}

TEST_CASE("zero weight reproduces the baseline loss exactly") {
  auto toy = make_toy();
  const auto part = corpus::partition_classes(toy.vocab, corpus::PartitionScheme::by_tag());
  HaloConfig off;
  off.enabled = false;
  HaloConfig zero;
  zero.weight = 0.0;
  for (const auto& ex : toy.examples) {
    Rng r1(1), r2(2);
    const auto base = halo_sequence_loss(toy.params, ex, part, off, r1);
    const auto z = halo_sequence_loss(toy.params, ex, part, zero, r2);
    CHECK(base.breakdown.total == base.breakdown.token_nll);
    CHECK(z.breakdown.total == base.breakdown.token_nll);
    CHECK(z.breakdown.token_nll == base.breakdown.token_nll);
    CHECK(z.breakdown.halo_nll > 0.0);
    CHECK(base.breakdown.halo_nll == 0.0);
  }
}

TEST_CASE("lambda = 0 limits") {
  auto toy = make_toy(2);
  HaloConfig cfg;
  cfg.fixed_lambda = 0.0;
  const auto single = corpus::partition_classes(toy.vocab, corpus::PartitionScheme::singleton());
  const auto by_tag = corpus::partition_classes(toy.vocab, corpus::PartitionScheme::by_tag());
  for (const auto& ex : toy.examples) {
    Rng rng(5);
    const auto s = halo_sequence_loss(toy.params, ex, single, cfg, rng);
    CHECK(std::abs(s.breakdown.halo_nll - s.breakdown.token_nll) <= 1e-9);
    CHECK(s.breakdown.total == doctest::Approx(2.0 * s.breakdown.token_nll));

    LossTrace trace;
    const auto t = halo_sequence_loss(toy.params, ex, by_tag, cfg, rng, &trace);
    REQUIRE(trace.distribution.size() == ex.target.size());
    double expected = 0.0;
    for (std::size_t step = 0; step < ex.target.size(); ++step) {
      const auto& p = trace.distribution[step];
      double mass = 0.0;
      for (corpus::TokenId v = 0; v < p.size(); ++v) {
        if (toy.vocab.tag(v) == toy.vocab.tag(ex.target[step])) mass += p[v];
      }
      expected -= std::log(mass);
      CHECK(trace.halo_step_nll[step] <= -std::log(p[ex.target[step]]) + 1e-12);
    }
    CHECK(std::abs(t.breakdown.halo_nll - expected) <= 1e-9);
  }
}

TEST_CASE("neighbors never feed the recurrence") {
  auto toy = make_toy(3);
  const auto part = corpus::partition_classes(toy.vocab, corpus::PartitionScheme::by_tag());
  HaloConfig off;
  off.enabled = false;
  HaloConfig on;
  on.beta = {5.0, 5.0};
  on.n_neighbors = 3;
  for (const auto& ex : toy.examples) {
    LossTrace base;
    Rng r0(0);
    const auto b = halo_sequence_loss(toy.params, ex, part, off, r0, &base);
    for (std::uint64_t seed : {1u, 2u, 99u}) {
      LossTrace t;
      Rng rng(seed);
      const auto l = halo_sequence_loss(toy.params, ex, part, on, rng, &t);
      REQUIRE(t.hidden.size() == base.hidden.size());
      for (std::size_t i = 0; i < t.hidden.size(); ++i) CHECK(t.hidden[i] == base.hidden[i]);
      CHECK(std::abs(l.breakdown.token_nll - b.breakdown.token_nll) <= 1e-12);
    }
  }
}

TEST_CASE("breakdown invariant and neighbor averaging") {
  auto toy = make_toy(4);
  const auto part = corpus::partition_classes(toy.vocab, corpus::PartitionScheme::by_tag());
  HaloConfig cfg;
  cfg.weight = 0.7;
  cfg.n_neighbors = 4;
  Rng rng(8);
  LossTrace trace;
  const auto l = halo_sequence_loss(toy.params, toy.examples[0], part, cfg, rng, &trace);
  const auto& b = l.breakdown;
  CHECK(b.total == doctest::Approx(b.token_nll + 0.7 * b.halo_nll).epsilon(1e-14));
  CHECK(b.token_nll >= 0.0);
  CHECK(b.halo_nll >= 0.0);
  double sum = 0.0;
  for (double v : trace.halo_step_nll) sum += v;
  CHECK(sum == doctest::Approx(b.halo_nll).epsilon(1e-12));
  CHECK(l.tokens == toy.examples[0].target.size());
}

TEST_CASE("gradient of the joint loss") {
  auto toy = make_toy(5, 5);
  const auto part = corpus::partition_classes(toy.vocab, corpus::PartitionScheme::by_tag());
  HaloConfig cfg;
  cfg.beta = {2.0, 8.0};
  auto loss = [&] {
    Rng rng(13);  // same draws in every evaluation
    const auto a = halo_sequence_loss(toy.params, toy.examples[0], part, cfg, rng);
    const auto b = halo_sequence_loss(toy.params, toy.examples[1], part, cfg, rng);
    return ad::add(a.total, b.total);
  };
  const auto vars = toy.params.vars();
  CHECK(ad::grad_check_params(loss, vars) <= 1e-4);
}

TEST_CASE("detached neighbors only train the output layer through the halo term") {
  auto toy = make_toy(6);
  const auto part = corpus::partition_classes(toy.vocab, corpus::PartitionScheme::by_tag());
  HaloConfig off;
  off.enabled = false;
  HaloConfig det;
  det.detach_neighbor = true;
  auto grads = [&](const HaloConfig& c) {
    toy.params.zero_grad();
    Rng rng(1);
    ad::backward(halo_sequence_loss(toy.params, toy.examples[0], part, c, rng).total);
    std::vector<Array> g;
    for (const auto& v : toy.params.vars()) g.push_back(v->grad());
    return g;
  };
  const auto base = grads(off);
  const auto detached = grads(det);
  const auto names = toy.params.named();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i].name == "output") {
      CHECK_FALSE(base[i] == detached[i]);
    } else {
      CHECK(base[i] == detached[i]);
    }
  }
}

TEST_CASE("small alpha approaches the lambda = 0 loss") {
  auto toy = make_toy(7);
  const auto part = corpus::partition_classes(toy.vocab, corpus::PartitionScheme::by_tag());
  HaloConfig zero;
  zero.fixed_lambda = 0.0;
  Rng r(1);
  const double limit = halo_sequence_loss(toy.params, toy.examples[0], part, zero, r).breakdown.halo_nll;

  auto mean_halo = [&](BetaParams b) {
    HaloConfig c;
    c.beta = b;
    Rng rng(2);
    double s = 0.0;
    for (int i = 0; i < 1000; ++i) s += halo_sequence_loss(toy.params, toy.examples[0], part, c, rng).breakdown.halo_nll;
    return s / 1000.0;
  };
  const double tiny = mean_halo({0.01, 19.99});
  const double moderate = mean_halo({5.0, 15.0});
  CHECK(std::abs(tiny - limit) < 0.01 * limit);
  CHECK(std::abs(tiny - limit) < std::abs(moderate - limit));
}

TEST_CASE("loss errors") {
  auto toy = make_toy();
  const auto part = corpus::partition_classes(toy.vocab, corpus::PartitionScheme::by_tag());
  Rng rng(1);
  corpus::ParallelExample empty{{1}, {}};
  CHECK_THROWS_AS(halo_sequence_loss(toy.params, empty, part, {}, rng), ValidationError);
  const corpus::ClassPartition small({0, 1});
  CHECK_THROWS_AS(halo_sequence_loss(toy.params, toy.examples[0], small, {}, rng), ValidationError);
}
