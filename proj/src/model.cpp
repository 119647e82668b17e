#include "clie/model.hpp"

#include "clie/error.hpp"

namespace clie::model {

using ad::Array;
using ad::Shape;
using ad::Var;

ModelParams::ModelParams(ModelDims dims) : dims_(dims) {
  if (dims.source_vocab == 0 || dims.target_vocab == 0 || dims.hidden == 0 || dims.embed == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  const std::size_t d = dims.hidden, e = dims.embed;
  auto add = [this](const char* name, Var& slot, Shape shape) {
    slot = ad::variable(Array(shape));
    named_.push_back({name, slot});
  };
  add("source_embedding", source_embedding, Shape::matrix(dims.source_vocab, e));
  add("target_embedding", target_embedding, Shape::matrix(dims.target_vocab, e));
  add("encoder_weight", encoder_weight, Shape::matrix(4 * d, e + d));
  add("encoder_bias", encoder_bias, Shape::vector(4 * d));
  add("decoder_weight", decoder_weight, Shape::matrix(4 * d, e + 2 * d));
  add("decoder_bias", decoder_bias, Shape::vector(4 * d));
  add("residual", residual, Shape::matrix(d, e));
  add("attention", attention, Shape::matrix(d, d));
  add("combine_weight", combine_weight, Shape::matrix(d, 2 * d));
  add("combine_bias", combine_bias, Shape::vector(d));
  add("output", output, Shape::matrix(dims.target_vocab, d));
}

void ModelParams::init_uniform(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (auto& p : named_) {
    for (double& v : p.var->mutable_value().data()) v = dist(rng);
  }
}

std::vector<Var> ModelParams::vars() const {
  std::vector<Var> out;
  out.reserve(named_.size());
  for (const auto& p : named_) out.push_back(p.var);
  return out;
}

void ModelParams::zero_grad() const {
  for (const auto& p : named_) p.var->zero_grad();
}

ModelParams ModelParams::clone() const {
  ModelParams copy(dims_);
  for (std::size_t i = 0; i < named_.size(); ++i) {
    copy.named_[i].var->mutable_value() = named_[i].var->value();
  }
  return copy;
}

namespace {

struct LstmOut {
  Var h;
  Var c;
};

LstmOut lstm_step(const Var& input, const Var& h_prev, const Var& c_prev, const Var& weight, const Var& bias) {
  const std::size_t d = h_prev->value().size();
  const Var joined[] = {input, h_prev};
  const Var gates = ad::add(ad::matmul(weight, ad::concat(joined)), bias);
  const Var i = ad::sigmoid(ad::slice(gates, 0, d));
  const Var f = ad::sigmoid(ad::slice(gates, d, d));
  const Var g = ad::tanh(ad::slice(gates, 2 * d, d));
  const Var o = ad::sigmoid(ad::slice(gates, 3 * d, d));
  const Var c = ad::add(ad::mul(f, c_prev), ad::mul(i, g));
  return {ad::mul(o, ad::tanh(c)), c};
}

}  // namespace

EncodedSource encode(std::span<const corpus::TokenId> source, const ModelParams& params) {
  if (source.empty()) throw ValidationError("encode: empty source sequence");
  const std::size_t d = params.dims().hidden;
  EncodedSource out;
  Var h = ad::constant(Array(Shape::vector(d)));
  Var c = h;
  out.states.reserve(source.size());
  for (corpus::TokenId id : source) {
    auto step = lstm_step(ad::embedding(params.source_embedding, id), h, c, params.encoder_weight,
                          params.encoder_bias);
    h = step.h;
    c = step.c;
    out.states.push_back(h);
  }
  out.rows = ad::stack(out.states);
  out.final_h = h;
  out.final_c = c;
  return out;
}

Var attend(const Var& h, const Var& encoder_rows, const Var& w_a) {
  const Var query = ad::matmul(h, w_a);  // W_a^T h
  const Var scores = ad::matmul(encoder_rows, query);
  return ad::matmul(ad::softmax_stable(scores), encoder_rows);
}

Var attend(const Var& h, std::span<const Var> encoder_states, const Var& w_a) {
  if (encoder_states.empty()) throw ValidationError("attend: no encoder states");
  return attend(h, ad::stack(encoder_states), w_a);
}

DecoderState initial_state(const EncodedSource& encoded, const ModelParams& params) {
  const Var zero = ad::constant(Array(Shape::vector(params.dims().hidden)));
  return {zero, encoded.final_h, encoded.final_c, zero};
}

DecoderState decoder_step(corpus::TokenId prev_token, const DecoderState& prev, const EncodedSource& encoded,
                          const ModelParams& params) {
  const std::size_t d = params.dims().hidden;
  if (prev.lstm_h->value().size() != d || prev.c->value().size() != d || prev.context->value().size() != d) {
    throw DimensionError("decoder_step: state does not match hidden size " + std::to_string(d));
  }
  const Var x = ad::embedding(params.target_embedding, prev_token);
  const Var input[] = {x, prev.context};
  auto lstm = lstm_step(ad::concat(input), prev.lstm_h, prev.c, params.decoder_weight, params.decoder_bias);
  const Var r = ad::add(lstm.h, ad::matmul(params.residual, x));
  const Var context = attend(r, encoded.rows, params.attention);
  const Var combined[] = {r, context};
  const Var h = ad::tanh(ad::add(ad::matmul(params.combine_weight, ad::concat(combined)), params.combine_bias));
  return {h, lstm.h, lstm.c, context};
}

Var project_distribution(const Var& h, const Var& w) { return ad::softmax_stable(ad::matmul(w, h)); }

}  // namespace clie::model
