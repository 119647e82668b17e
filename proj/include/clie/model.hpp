#pragma once

// Attentional LSTM encoder-decoder with a residual input path.
//
//   encoder:  e_i = LSTM_enc(emb_src(x_i), e_{i-1})
//   decoder:  s_t, c_t = LSTM_dec([emb_tgt(y_{t-1}); ctx_{t-1}], s_{t-1}, c_{t-1})
//             r_t      = s_t + R emb_tgt(y_{t-1})
//             ctx_t    = sum_i softmax_i(r_t^T W_a e_i) e_i
//             h_t      = tanh(W_c [r_t; ctx_t] + b_c)          in (-1,1)^D
//             p_t      = softmax(W h_t)
//
// h_t is the state the output layer and the halo regularizer see; only
// (s_t, c_t, ctx_t) feed the next step.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "clie/autodiff.hpp"
#include "clie/corpus.hpp"

namespace clie::model {

struct ModelDims {
  std::size_t source_vocab = 0;
  std::size_t target_vocab = 0;
  std::size_t hidden = 64;
  std::size_t embed = 32;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

class ModelParams {
 public:
  // All parameters zero.
  explicit ModelParams(ModelDims dims);

  const ModelDims& dims() const { return dims_; }

  // uniform(-scale, scale) on every parameter, in declaration order.
  void init_uniform(std::mt19937_64& rng, double scale = 0.08);

  struct Named {
    std::string name;
    ad::Var var;
  };
  const std::vector<Named>& named() const { return named_; }
  std::vector<ad::Var> vars() const;
  void zero_grad() const;

  // Deep copy of the current values (fresh leaves, no gradients).
  ModelParams clone() const;

  ad::Var source_embedding;  // |Vs| x E
  ad::Var target_embedding;  // |Vt| x E
  ad::Var encoder_weight;    // 4D x (E + D), gate order i, f, g, o
  ad::Var encoder_bias;      // 4D
  ad::Var decoder_weight;    // 4D x (E + D + D)
  ad::Var decoder_bias;      // 4D
  ad::Var residual;          // D x E
  ad::Var attention;         // D x D (W_a)
  ad::Var combine_weight;    // D x 2D
  ad::Var combine_bias;      // D
  ad::Var output;            // |Vt| x D (W)

 private:
  ModelDims dims_;
  std::vector<Named> named_;
};

struct EncodedSource {
  std::vector<ad::Var> states;  // one per source position
  ad::Var rows;                 // states stacked, I x D
  ad::Var final_h;
  ad::Var final_c;
};

struct DecoderState {
  ad::Var h;        // output state, strictly inside (-1,1)^D
  ad::Var lstm_h;   // o ⊙ tanh(c), carried to the next step
  ad::Var c;
  ad::Var context;  // attention context, carried to the next step
};

EncodedSource encode(std::span<const corpus::TokenId> source, const ModelParams& params);

// Luong general score: s_i = h^T W_a e_i, context = sum_i softmax(s)_i e_i.
ad::Var attend(const ad::Var& h, std::span<const ad::Var> encoder_states, const ad::Var& w_a);
ad::Var attend(const ad::Var& h, const ad::Var& encoder_rows, const ad::Var& w_a);

// Decoder state before the first step: the encoder's final LSTM state and a zero context.
DecoderState initial_state(const EncodedSource& encoded, const ModelParams& params);

DecoderState decoder_step(corpus::TokenId prev_token, const DecoderState& prev, const EncodedSource& encoded,
                          const ModelParams& params);

// softmax(W h).
ad::Var project_distribution(const ad::Var& h, const ad::Var& w);

// Checkpoints: a text header (format version, dims, vocabulary fingerprint,
// parameter names and shapes) terminated by "end\n", then every parameter as
// little-endian IEEE-754 doubles in header order.
inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(std::ostream& os, const ModelParams& params, std::uint64_t vocab_fingerprint);
ModelParams load_checkpoint(std::istream& is, std::uint64_t expected_fingerprint);

// File variants also write/read the vocabulary to "<path>.vocab".
void save_model(const std::filesystem::path& path, const ModelParams& params, const corpus::TaggedVocabulary& vocab);
struct LoadedModel {
  corpus::TaggedVocabulary vocab;
  ModelParams params;
};
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace clie::model
