#include "clie/halo.hpp"

#include <cmath>
#include <string>

#include "clie/error.hpp"

namespace clie::halo {

using ad::Array;
using ad::Var;

void BetaParams::validate() const {
  if (!(alpha > 0.0) || !(beta > 0.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
    throw ConfigError("Beta parameters must be positive and finite (alpha=" + std::to_string(alpha) +
                      ", beta=" + std::to_string(beta) + ")");
  }
}

double sample_lambda(const BetaParams& params, Rng& rng) {
  params.validate();
  std::gamma_distribution<double> ga(params.alpha, 1.0);
  std::gamma_distribution<double> gb(params.beta, 1.0);
  for (;;) {
    const double x = ga(rng);
    const double y = gb(rng);
    const double lambda = x / (x + y);
    // Underflowing gamma draws land on 0, 1 or NaN; redraw those.
    if (lambda > 0.0 && lambda < 1.0) return lambda;
  }
}

Array interpolate(const Array& h, const Array& corner, double lambda) {
  if (!(h.shape() == corner.shape())) {
    throw DimensionError("interpolate: shapes " + h.shape().to_string() + " and " + corner.shape().to_string());
  }
  Array out = h;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = h[i] + lambda * (corner[i] - h[i]);
  return out;
}

namespace {

bool strictly_inside(const Array& a) {
  for (double v : a.data()) {
    if (!(v > -1.0 && v < 1.0)) return false;
  }
  return true;
}

}  // namespace

NeighborSample sample_neighbor(const Array& h, const BetaParams& params, Rng& rng, std::optional<double> fixed_lambda) {
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (!(h[i] > -1.0 && h[i] < 1.0)) {
      throw DomainError("sample_neighbor: h[" + std::to_string(i) + "] = " + std::to_string(h[i]) +
                        " is not strictly inside (-1, 1)");
    }
  }
  if (fixed_lambda && !(*fixed_lambda >= 0.0 && *fixed_lambda <= 1.0)) {
    throw ConfigError("fixed lambda must lie in [0, 1]");
  }
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (;;) {
    Array corner(h.shape());
    for (double& v : corner.data()) {
      do v = unit(rng);
      while (v == -1.0);
    }
    const double lambda = fixed_lambda ? *fixed_lambda : sample_lambda(params, rng);
    Array prime = interpolate(h, corner, lambda);
    // Rounding can in principle land on the boundary; redraw in that case.
    if (strictly_inside(prime)) return {std::move(prime), std::move(corner), lambda};
  }
}

double TagDistribution::total() const {
  double s = 0.0;
  for (double v : q) s += v;
  return s;
}

TagDistribution aggregate_tags(std::span<const double> p, const corpus::ClassPartition& partition) {
  if (p.size() != partition.vocab_size()) {
    throw ValidationError("aggregate_tags: partition covers " + std::to_string(partition.vocab_size()) +
                          " tokens but the distribution has " + std::to_string(p.size()));
  }
  TagDistribution out{std::vector<double>(partition.num_classes(), 0.0)};
  for (std::size_t v = 0; v < p.size(); ++v) out.q[partition.class_of(static_cast<corpus::TokenId>(v))] += p[v];
  return out;
}

void HaloConfig::validate() const {
  if (!enabled) return;
  if (!fixed_lambda) beta.validate();
  if (n_neighbors < 1) throw ConfigError("halo.n_neighbors must be >= 1");
  if (!(weight >= 0.0) || !std::isfinite(weight)) throw ConfigError("halo.weight must be a finite value >= 0");
}

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  token_nll += o.token_nll;
  halo_nll += o.halo_nll;
  total += o.total;
  halo_weight = o.halo_weight;
  return *this;
}

SequenceLoss halo_sequence_loss(const model::ModelParams& params, const corpus::ParallelExample& example,
                                const corpus::ClassPartition& partition, const HaloConfig& config, Rng& halo_rng,
                                LossTrace* trace) {
  if (example.target.empty()) throw ValidationError("halo_sequence_loss: empty target");
  if (partition.vocab_size() != params.dims().target_vocab) {
    throw ValidationError("halo_sequence_loss: partition does not cover the target vocabulary");
  }
  config.validate();
  const std::size_t vocab = params.dims().target_vocab;

  // Indicator vectors of the classes that occur as gold classes, built on demand.
  std::vector<Var> masks(partition.num_classes());
  auto mask_of = [&](std::size_t c) -> const Var& {
    if (!masks[c]) {
      Array m(ad::Shape::vector(vocab));
      for (corpus::TokenId v : partition.members(c)) m[v] = 1.0;
      masks[c] = ad::constant(std::move(m));
    }
    return masks[c];
  };

  const auto encoded = model::encode(example.source, params);
  auto state = model::initial_state(encoded, params);
  corpus::TokenId prev = corpus::TaggedVocabulary::kBos;

  std::vector<Var> token_terms, halo_terms;
  token_terms.reserve(example.target.size());
  std::vector<double> step_halo;
  for (corpus::TokenId gold : example.target) {
    state = model::decoder_step(prev, state, encoded, params);
    const Var p = model::project_distribution(state.h, params.output);
    token_terms.push_back(ad::log(ad::slice(p, gold, 1)));

    if (config.enabled) {
      const Var& mask = mask_of(partition.class_of(gold));
      const Var center = config.detach_neighbor ? ad::constant(state.h->value()) : state.h;
      double step_nll = 0.0;
      for (int k = 0; k < config.n_neighbors; ++k) {
        const auto sample = sample_neighbor(state.h->value(), config.beta, halo_rng, config.fixed_lambda);
        const Var lambda = ad::constant(Array(state.h->value().shape(), sample.lambda));
        const Var corner = ad::constant(sample.h_corner);
        const Var neighbor = ad::add(center, ad::mul(lambda, ad::add(corner, ad::neg(center))));
        const Var p_neighbor = model::project_distribution(neighbor, params.output);
        const Var log_q = ad::log(ad::sum(ad::mul(p_neighbor, mask)));
        step_nll -= log_q->value()[0];
        halo_terms.push_back(log_q);
      }
      step_halo.push_back(step_nll / config.n_neighbors);
    }

    if (trace) {
      trace->hidden.push_back(state.h->value());
      trace->distribution.push_back(p->value());
    }
    prev = gold;
  }
  if (trace) trace->halo_step_nll = step_halo;

  SequenceLoss out;
  out.tokens = example.target.size();
  const Var token_nll = ad::neg(ad::sum(ad::concat(token_terms)));
  out.breakdown.token_nll = token_nll->value()[0];
  out.total = token_nll;
  if (config.enabled) {
    const Var halo_sum = ad::sum(ad::concat(halo_terms));
    const Var halo_nll = ad::mul(ad::constant(Array::scalar(-1.0 / config.n_neighbors)), halo_sum);
    out.breakdown.halo_nll = halo_nll->value()[0];
    out.breakdown.halo_weight = config.weight;
    if (config.weight > 0.0) {
      out.total = ad::add(token_nll, ad::mul(ad::constant(Array::scalar(config.weight)), halo_nll));
    }
  }
  out.breakdown.total = out.total->value()[0];
  return out;
}

}  // namespace clie::halo
