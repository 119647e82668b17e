#include "clie/training.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "clie/error.hpp"

namespace clie::training {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename Int>
Int parse_int(std::string_view key, std::string_view v) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("invalid integer for " + std::string(key) + ": '" + std::string(v) + "'");
  }
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  const std::string s(v);
  char* end = nullptr;
  const double out = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(out)) {
    throw ConfigError("invalid number for " + std::string(key) + ": '" + s + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("invalid boolean for " + std::string(key) + ": '" + std::string(v) + "'");
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct KeyBinding {
  ConfigKey key;
  std::function<void(TrainConfig&, std::string_view)> set;
  std::function<std::string(const TrainConfig&)> get;
};

const std::vector<KeyBinding>& bindings() {
  static const std::vector<KeyBinding> table = [] {
    std::vector<KeyBinding> t;
    auto add = [&t](std::string name, std::string help, auto set, auto get) {
      t.push_back({{std::move(name), std::move(help)}, set, get});
    };
    add("epochs", "training epochs", [](TrainConfig& c, std::string_view v) { c.epochs = parse_int<int>("epochs", v); },
        [](const TrainConfig& c) { return std::to_string(c.epochs); });
    add("batch_size", "examples per update",
        [](TrainConfig& c, std::string_view v) { c.batch_size = parse_int<int>("batch_size", v); },
        [](const TrainConfig& c) { return std::to_string(c.batch_size); });
    add("learning_rate", "optimizer step size",
        [](TrainConfig& c, std::string_view v) { c.learning_rate = parse_double("learning_rate", v); },
        [](const TrainConfig& c) { return format_double(c.learning_rate); });
    add("optimizer", "sgd | adam",
        [](TrainConfig& c, std::string_view v) {
          if (v == "sgd") c.optimizer = OptimizerKind::Sgd;
          else if (v == "adam") c.optimizer = OptimizerKind::Adam;
          else throw ConfigError("optimizer must be sgd or adam, got '" + std::string(v) + "'");
        },
        [](const TrainConfig& c) { return std::string(c.optimizer == OptimizerKind::Sgd ? "sgd" : "adam"); });
    add("clip_norm", "global gradient norm limit",
        [](TrainConfig& c, std::string_view v) { c.clip_norm = parse_double("clip_norm", v); },
        [](const TrainConfig& c) { return format_double(c.clip_norm); });
    add("seed", "seed for parameters, shuffling and data",
        [](TrainConfig& c, std::string_view v) { c.seed = parse_int<std::uint64_t>("seed", v); },
        [](const TrainConfig& c) { return std::to_string(c.seed); });
    add("halo.seed", "seed for neighbor sampling",
        [](TrainConfig& c, std::string_view v) { c.halo_seed = parse_int<std::uint64_t>("halo.seed", v); },
        [](const TrainConfig& c) { return std::to_string(c.halo_seed); });
    add("dev_eval_every", "epochs between dev evaluations",
        [](TrainConfig& c, std::string_view v) { c.dev_eval_every = parse_int<int>("dev_eval_every", v); },
        [](const TrainConfig& c) { return std::to_string(c.dev_eval_every); });
    add("patience", "dev evaluations without improvement before stopping",
        [](TrainConfig& c, std::string_view v) { c.patience = parse_int<int>("patience", v); },
        [](const TrainConfig& c) { return std::to_string(c.patience); });
    add("min_count", "rare-word threshold for the vocabulary",
        [](TrainConfig& c, std::string_view v) { c.min_count = parse_int<int>("min_count", v); },
        [](const TrainConfig& c) { return std::to_string(c.min_count); });
    add("model.hidden", "hidden size D",
        [](TrainConfig& c, std::string_view v) { c.hidden = parse_int<std::size_t>("model.hidden", v); },
        [](const TrainConfig& c) { return std::to_string(c.hidden); });
    add("model.embed", "embedding size E",
        [](TrainConfig& c, std::string_view v) { c.embed = parse_int<std::size_t>("model.embed", v); },
        [](const TrainConfig& c) { return std::to_string(c.embed); });
    add("model.init_scale", "uniform initialization half-width",
        [](TrainConfig& c, std::string_view v) { c.init_scale = parse_double("model.init_scale", v); },
        [](const TrainConfig& c) { return format_double(c.init_scale); });
    add("max_decode_len", "greedy decoding length limit",
        [](TrainConfig& c, std::string_view v) { c.max_decode_len = parse_int<std::size_t>("max_decode_len", v); },
        [](const TrainConfig& c) { return std::to_string(c.max_decode_len); });
    add("halo.enabled", "add the halo term to the loss",
        [](TrainConfig& c, std::string_view v) { c.halo.enabled = parse_bool("halo.enabled", v); },
        [](const TrainConfig& c) { return std::string(c.halo.enabled ? "true" : "false"); });
    add("halo.alpha", "Beta alpha for the interpolation weight",
        [](TrainConfig& c, std::string_view v) { c.halo.beta.alpha = parse_double("halo.alpha", v); },
        [](const TrainConfig& c) { return format_double(c.halo.beta.alpha); });
    add("halo.beta", "Beta beta for the interpolation weight",
        [](TrainConfig& c, std::string_view v) { c.halo.beta.beta = parse_double("halo.beta", v); },
        [](const TrainConfig& c) { return format_double(c.halo.beta.beta); });
    add("halo.n_neighbors", "neighbors sampled per decoder state",
        [](TrainConfig& c, std::string_view v) { c.halo.n_neighbors = parse_int<int>("halo.n_neighbors", v); },
        [](const TrainConfig& c) { return std::to_string(c.halo.n_neighbors); });
    add("halo.weight", "multiplier on the halo term",
        [](TrainConfig& c, std::string_view v) { c.halo.weight = parse_double("halo.weight", v); },
        [](const TrainConfig& c) { return format_double(c.halo.weight); });
    add("halo.detach_neighbor", "stop gradients from the halo term into the decoder",
        [](TrainConfig& c, std::string_view v) { c.halo.detach_neighbor = parse_bool("halo.detach_neighbor", v); },
        [](const TrainConfig& c) { return std::string(c.halo.detach_neighbor ? "true" : "false"); });
    add("halo.partition", "bytag | singleton | custom(<path>)",
        [](TrainConfig& c, std::string_view v) { c.partition = std::string(v); },
        [](const TrainConfig& c) { return c.partition; });
    return t;
  }();
  return table;
}

const KeyBinding& binding(std::string_view key) {
  for (const auto& b : bindings()) {
    if (b.key.name == key) return b;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

const std::vector<ConfigKey>& TrainConfig::keys() {
  static const std::vector<ConfigKey> out = [] {
    std::vector<ConfigKey> k;
    for (const auto& b : bindings()) k.push_back(b.key);
    return k;
  }();
  return out;
}

void TrainConfig::set(std::string_view key, std::string_view value) { binding(key).set(*this, trim(value)); }

std::string TrainConfig::get(std::string_view key) const { return binding(key).get(*this); }

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  // Zero is allowed: it freezes the parameters.
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be > 0");
  if (dev_eval_every < 1) throw ConfigError("dev_eval_every must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (min_count < 1) throw ConfigError("min_count must be >= 1");
  if (hidden < 1 || embed < 1) throw ConfigError("model dimensions must be >= 1");
  if (!(init_scale >= 0.0)) throw ConfigError("model.init_scale must be >= 0");
  if (max_decode_len < 1) throw ConfigError("max_decode_len must be >= 1");
  halo.validate();
}

void load_config(std::istream& is, TrainConfig& config) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    config.set(trim(std::string_view(body).substr(0, eq)), std::string_view(body).substr(eq + 1));
  }
}

void load_config_file(const std::filesystem::path& path, TrainConfig& config) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  load_config(in, config);
}

double clip_gradients(std::span<const ad::Var> params, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("clip_gradients: max_norm must be > 0");
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p->has_grad()) continue;
    for (double g : p->mutable_grad().data()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (const auto& p : params) {
      if (!p->has_grad()) continue;
      for (double& g : p->mutable_grad().data()) g *= scale;
    }
  }
  return norm;
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, std::span<const ad::Var> params)
    : kind_(kind), lr_(learning_rate) {
  if (kind_ == OptimizerKind::Adam) {
    for (const auto& p : params) {
      m_.emplace_back(p->value().shape());
      v_.emplace_back(p->value().shape());
    }
  }
}

void Optimizer::step(std::span<const ad::Var> params) {
  ++t_;
  if (kind_ == OptimizerKind::Sgd) {
    for (const auto& p : params) {
      if (!p->has_grad()) continue;
      auto w = p->mutable_value().data();
      const auto g = p->mutable_grad().data();
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr_ * g[i];
    }
    return;
  }
  if (params.size() != m_.size()) throw DimensionError("optimizer: parameter count changed");
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& p = params[k];
    auto w = p->mutable_value().data();
    if (!(m_[k].shape() == p->value().shape())) throw DimensionError("optimizer: parameter shape changed");
    const auto g = p->mutable_grad().data();
    auto m = m_[k].data();
    auto v = v_[k].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      w[i] -= lr_ * m_hat / (std::sqrt(v_hat) + kEpsilon);
    }
  }
}

void TrainReport::write(std::ostream& os, bool with_timing) const {
  char buf[256];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof buf, "epoch %d token_nll=%.9g halo_nll=%.9g total=%.9g", e.epoch, e.loss.token_nll,
                  e.loss.halo_nll, e.loss.total);
    os << buf;
    if (e.dev) {
      std::snprintf(buf, sizeof buf, " dev_bleu=%.9g dev_f1_pred=%.9g dev_f1_arg=%.9g", e.dev->bleu, e.dev->pred.f1,
                    e.dev->arg.f1);
      os << buf;
    }
    if (with_timing) {
      std::snprintf(buf, sizeof buf, " seconds=%.3f", e.seconds);
      os << buf;
    }
    os << '\n';
  }
  std::snprintf(buf, sizeof buf, "%.9g", best_dev_bleu);
  os << "best_epoch = " << best_epoch << '\n' << "best_dev_bleu = " << buf << '\n'
     << "stopped_early = " << (stopped_early ? "true" : "false") << '\n';
}

model::ModelParams init_model(const corpus::TaggedVocabulary& vocab, const TrainConfig& config, std::mt19937_64& rng) {
  model::ModelParams params({vocab.source_size(), vocab.target_size(), config.hidden, config.embed});
  params.init_uniform(rng, config.init_scale);
  return params;
}

corpus::ClassPartition make_partition(const corpus::TaggedVocabulary& vocab, const std::string& spec) {
  if (spec == "bytag") return corpus::partition_classes(vocab, corpus::PartitionScheme::by_tag());
  if (spec == "singleton") return corpus::partition_classes(vocab, corpus::PartitionScheme::singleton());
  if (spec.starts_with("custom(") && spec.ends_with(")") && spec.size() > 8) {
    const std::string path = spec.substr(7, spec.size() - 8);
    return corpus::partition_classes(vocab, corpus::load_custom_partition(path, vocab));
  }
  throw ConfigError("halo.partition must be bytag, singleton or custom(<path>), got '" + spec + "'");
}

halo::LossBreakdown accumulate_batch_gradients(const model::ModelParams& params,
                                               std::span<const corpus::ParallelExample* const> batch,
                                               const corpus::ClassPartition& partition,
                                               const halo::HaloConfig& halo_config, halo::Rng& halo_rng,
                                               std::size_t* tokens) {
  std::size_t n_tokens = 0;
  for (const auto* ex : batch) n_tokens += ex->target.size();
  const auto scale = ad::constant(ad::Array::scalar(1.0 / static_cast<double>(n_tokens)));
  halo::LossBreakdown sum;
  for (const auto* ex : batch) {
    auto loss = halo::halo_sequence_loss(params, *ex, partition, halo_config, halo_rng);
    sum += loss.breakdown;
    ad::backward(ad::mul(scale, loss.total));
  }
  if (tokens) *tokens = n_tokens;
  return sum;
}

namespace {

void check_ids(const corpus::TaggedVocabulary& vocab, std::span<const corpus::ParallelExample> set) {
  for (std::size_t k = 0; k < set.size(); ++k) {
    const auto& ex = set[k];
    const bool ok = !ex.source.empty() && !ex.target.empty() &&
                    std::all_of(ex.source.begin(), ex.source.end(), [&](auto id) { return id < vocab.source_size(); }) &&
                    std::all_of(ex.target.begin(), ex.target.end(), [&](auto id) { return id < vocab.target_size(); });
    if (!ok) throw ValidationError("training example " + std::to_string(k) + " does not match the vocabulary");
  }
}

}  // namespace

TrainResult train(const corpus::TaggedVocabulary& vocab, std::span<const corpus::ParallelExample> train_set,
                  std::span<const corpus::RawPair> dev_set, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.empty()) throw ValidationError("empty training set");
  if (dev_set.empty()) throw ValidationError("empty dev set");
  check_ids(vocab, train_set);
  const auto partition = make_partition(vocab, config.partition);

  std::mt19937_64 rng(config.seed);
  halo::Rng halo_rng(config.halo_seed);
  auto params = init_model(vocab, config, rng);
  const auto vars = params.vars();
  Optimizer optimizer(config.optimizer, config.learning_rate, vars);

  TrainResult result{{}, params.clone()};
  auto& report = result.report;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  int stale = 0;
  double best_f1 = -1.0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord record;
    record.epoch = epoch;
    std::size_t epoch_tokens = 0;
    std::vector<const corpus::ParallelExample*> batch;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      batch.clear();
      for (std::size_t k = b; k < std::min(order.size(), b + config.batch_size); ++k) {
        batch.push_back(&train_set[order[k]]);
      }
      params.zero_grad();
      std::size_t tokens = 0;
      record.loss += accumulate_batch_gradients(params, batch, partition, config.halo, halo_rng, &tokens);
      epoch_tokens += tokens;
      clip_gradients(vars, config.clip_norm);
      optimizer.step(vars);
    }
    const double n = static_cast<double>(epoch_tokens);
    record.loss.token_nll /= n;
    record.loss.halo_nll /= n;
    record.loss.total /= n;

    bool stop = false;
    if (epoch % config.dev_eval_every == 0) {
      record.dev = eval::evaluate(params, vocab, dev_set, config.max_decode_len);
      // Corpus BLEU is often exactly 0 early on, so ties fall back to F1.
      const double f1 = record.dev->pred.f1 + record.dev->arg.f1;
      if (record.dev->bleu > report.best_dev_bleu || (record.dev->bleu == report.best_dev_bleu && f1 > best_f1)) {
        report.best_dev_bleu = record.dev->bleu;
        best_f1 = f1;
        report.best_epoch = epoch;
        result.best = params.clone();
        stale = 0;
      } else if (++stale >= config.patience) {
        stop = true;
      }
    }
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
    if (stop) {
      report.stopped_early = epoch < config.epochs;
      break;
    }
  }
  if (report.best_epoch == 0) {
    // Dev set never evaluated: keep the final parameters.
    report.best_epoch = report.epochs.back().epoch;
    result.best = params.clone();
  }
  return result;
}

}  // namespace clie::training
