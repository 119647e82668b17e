#pragma once

// Halo regularization: random neighbors of each decoder output state must
// still put their probability mass on the semantic class (predicate,
// argument, ...) of the gold token.
//
//   h''_t ~ U(-1,1)^D,  lambda_t ~ Beta(alpha, beta)
//   h'_t  = h_t + lambda_t (h''_t - h_t)
//   q'_t[c] = sum_{v in class c} softmax(W h'_t)_v
//   loss  = -sum_t log p_t[y_t]  -  weight * sum_t log q'_t[c_t]
//
// The neighbor only feeds the extra term; the recurrence continues from the
// unperturbed state.

#include <optional>
#include <random>
#include <span>
#include <vector>

#include "clie/autodiff.hpp"
#include "clie/corpus.hpp"
#include "clie/model.hpp"

namespace clie::halo {

using Rng = std::mt19937_64;

struct BetaParams {
  double alpha = 1.0;
  double beta = 19.0;

  void validate() const;
  double mean() const { return alpha / (alpha + beta); }
};

// One Beta(alpha, beta) draw strictly inside (0,1); endpoint draws are rejected.
double sample_lambda(const BetaParams& params, Rng& rng);

struct NeighborSample {
  ad::Array h_prime;
  ad::Array h_corner;
  double lambda;
};

// h must lie strictly inside (-1,1)^D. When fixed_lambda is given the corner
// is still drawn (keeping the stream aligned) but lambda is not.
NeighborSample sample_neighbor(const ad::Array& h, const BetaParams& params, Rng& rng,
                               std::optional<double> fixed_lambda = std::nullopt);

// h + lambda (corner - h), entrywise.
ad::Array interpolate(const ad::Array& h, const ad::Array& corner, double lambda);

struct TagDistribution {
  std::vector<double> q;

  double operator[](std::size_t c) const { return q.at(c); }
  double total() const;
};

TagDistribution aggregate_tags(std::span<const double> p, const corpus::ClassPartition& partition);

struct HaloConfig {
  bool enabled = true;
  BetaParams beta;
  int n_neighbors = 1;
  double weight = 1.0;
  // Treat h'_t as a constant so the extra term only trains the output layer.
  bool detach_neighbor = false;
  // Replaces the Beta draw; used for the lambda -> 0 / lambda -> 1 limits.
  std::optional<double> fixed_lambda;

  void validate() const;
  bool active() const { return enabled && weight > 0.0; }
};

struct LossBreakdown {
  double token_nll = 0.0;
  double halo_nll = 0.0;
  double total = 0.0;
  double halo_weight = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& o);
};

// Optional per-step record of a teacher-forced pass.
struct LossTrace {
  std::vector<ad::Array> hidden;        // h_t
  std::vector<ad::Array> distribution;  // p_t
  std::vector<double> halo_step_nll;    // mean over neighbors of -log q'_t[c_t]
};

struct SequenceLoss {
  LossBreakdown breakdown;
  ad::Var total;  // differentiable total
  std::size_t tokens = 0;
};

// Teacher-forced loss of one example. Neighbor draws come only from
// halo_rng. With halo enabled but weight 0 the extra term is still measured
// but kept out of the graph.
SequenceLoss halo_sequence_loss(const model::ModelParams& params, const corpus::ParallelExample& example,
                                const corpus::ClassPartition& partition, const HaloConfig& config, Rng& halo_rng,
                                LossTrace* trace = nullptr);

}  // namespace clie::halo
