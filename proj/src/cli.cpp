#include "clie/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "clie/corpus.hpp"
#include "clie/error.hpp"
#include "clie/eval.hpp"
#include "clie/model.hpp"
#include "clie/training.hpp"

namespace clie::cli {

namespace fs = std::filesystem;

namespace {

struct GenDataArgs {
  std::string out_dir;
  std::uint64_t seed = 1;
  std::size_t n_train = 500;
  std::size_t n_dev = 100;
  std::size_t n_test = 100;
  corpus::SyntheticConfig synth;
};

struct TrainArgs {
  std::string corpus;
  std::string dev;
  std::string config;
  std::string out = "model.ckpt";
  std::string report;
  std::map<std::string, std::string> overrides;
};

struct EvalArgs {
  std::string checkpoint;
  std::string corpus;
  std::string out;
  std::size_t max_len = 50;
  double alpha = 1.0;
  double beta = 19.0;
  std::uint64_t halo_seed = 2;
};

struct DecodeArgs {
  std::string checkpoint;
  std::string input = "-";
  std::size_t max_len = 50;
};

struct StatsArgs {
  std::vector<std::string> corpora;
};

void run_gen_data(const GenDataArgs& a, std::ostream& out) {
  auto cfg = a.synth;
  cfg.n_pairs = a.n_train + a.n_dev + a.n_test;
  const auto data = corpus::generate_synthetic(cfg, a.seed);
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  const std::span<const corpus::RawPair> all(data.pairs);
  corpus::write_corpus(dir / "train.tsv", all.subspan(0, a.n_train));
  corpus::write_corpus(dir / "dev.tsv", all.subspan(a.n_train, a.n_dev));
  corpus::write_corpus(dir / "test.tsv", all.subspan(a.n_train + a.n_dev, a.n_test));
  std::ofstream meta(dir / "meta.txt", std::ios::binary);
  if (!meta) throw IoError("cannot write " + (dir / "meta.txt").string());
  meta << "split.train = " << a.n_train << "\nsplit.dev = " << a.n_dev << "\nsplit.test = " << a.n_test << '\n';
  corpus::write_synthetic_metadata(meta, cfg, a.seed, data.dictionary);
  out << "wrote " << a.n_train << '/' << a.n_dev << '/' << a.n_test << " pairs to " << dir.string() << '\n';
}

void run_train(const TrainArgs& a, const CLI::App& cmd, std::ostream& out, std::ostream& err) {
  training::TrainConfig cfg;
  if (!a.config.empty()) training::load_config_file(a.config, cfg);
  for (const auto& [key, value] : a.overrides) {
    if (cmd.get_option("--" + key)->count() > 0) cfg.set(key, value);
  }
  cfg.validate();

  const auto train_pairs = corpus::read_corpus(fs::path(a.corpus));
  const auto dev_pairs = a.dev.empty() ? train_pairs : corpus::read_corpus(fs::path(a.dev));
  const auto vocab = corpus::build_vocabulary(train_pairs, cfg.min_count);
  std::vector<corpus::ParallelExample> train_set;
  train_set.reserve(train_pairs.size());
  for (const auto& p : train_pairs) train_set.push_back(vocab.encode(p));

  auto result = training::train(vocab, train_set, dev_pairs, cfg, [&err](const training::EpochRecord& e) {
    err << "epoch " << e.epoch << " loss " << e.loss.total;
    if (e.dev) err << " dev_bleu " << e.dev->bleu;
    err << '\n';
  });
  model::save_model(a.out, result.best, vocab);
  result.report.write(out);
  if (!a.report.empty()) {
    std::ofstream rep(a.report, std::ios::binary);
    if (!rep) throw IoError("cannot write report " + a.report);
    result.report.write(rep, true);
  }
}

void run_eval(const EvalArgs& a, std::ostream& out) {
  halo::BetaParams beta{a.alpha, a.beta};
  beta.validate();
  const auto loaded = model::load_model(a.checkpoint);
  const auto pairs = corpus::read_corpus(fs::path(a.corpus));
  if (pairs.empty()) throw ValidationError("empty evaluation corpus " + a.corpus);
  auto result = eval::evaluate(loaded.params, loaded.vocab, pairs, a.max_len);
  std::vector<corpus::ParallelExample> examples;
  for (const auto& p : pairs) examples.push_back(loaded.vocab.encode(p));
  const auto partition = corpus::partition_classes(loaded.vocab, corpus::PartitionScheme::by_tag());
  result.halo_tag_accuracy = eval::halo_tag_accuracy(loaded.params, examples, partition, beta, a.halo_seed);
  eval::write_metrics(out, result);
  if (!a.out.empty()) {
    std::ofstream f(a.out, std::ios::binary);
    if (!f) throw IoError("cannot write metrics file " + a.out);
    eval::write_metrics(f, result);
  }
}

void run_decode(const DecodeArgs& a, std::ostream& out) {
  const auto loaded = model::load_model(a.checkpoint);
  std::ifstream file;
  std::istream* in = &std::cin;
  if (a.input != "-") {
    file.open(a.input);
    if (!file) throw IoError("cannot open input file " + a.input);
    in = &file;
  }
  std::string line;
  while (std::getline(*in, line)) {
    // Accept either raw source lines or full corpus lines (target ignored).
    const auto tab = line.find('\t');
    if (tab != std::string::npos) line.erase(tab);
    const auto src = corpus::parse_corpus_line(line + '\t').source;
    if (src.empty()) {
      out << '\n';
      continue;
    }
    const auto ids = eval::greedy_decode(loaded.params, loaded.vocab.encode_source(src), a.max_len);
    const auto toks = loaded.vocab.decode_target(ids);
    for (std::size_t i = 0; i < toks.size(); ++i) out << (i ? " " : "") << toks[i];
    out << '\n';
  }
}

void run_stats(const StatsArgs& a, std::ostream& out) {
  out << "corpus\tpairs\tsource_vocab\ttarget_vocab\tsource_tokens\ttarget_tokens\tpredicates\targuments\ttoken_type\n";
  for (const auto& path : a.corpora) {
    const auto pairs = corpus::read_corpus(fs::path(path));
    const auto s = corpus::corpus_stats(pairs);
    char ratio[32];
    std::snprintf(ratio, sizeof ratio, "%.2f", s.token_type_ratio());
    out << path << '\t' << s.pairs << '\t' << s.source_types << '\t' << s.target_types << '\t' << s.source_tokens
        << '\t' << s.target_tokens << '\t' << s.predicate_tokens << '\t' << s.argument_tokens << '\t' << ratio
        << '\n';
  }
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Seq2seq predicate-argument extraction with halo regularization", "halo-clie"};
  app.require_subcommand(1);
  app.fallthrough(false);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "write a synthetic train/dev/test corpus and its metadata");
  gen_cmd->add_option("--out-dir", gen.out_dir, "output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "data seed")->capture_default_str();
  gen_cmd->add_option("--n", gen.n_train, "training pairs")->capture_default_str();
  gen_cmd->add_option("--n-dev", gen.n_dev, "dev pairs")->capture_default_str();
  gen_cmd->add_option("--n-test", gen.n_test, "test pairs")->capture_default_str();
  gen_cmd->add_option("--source-vocab-size", gen.synth.source_vocab_size, "dictionary size")->capture_default_str();
  gen_cmd->add_option("--dict-seed", gen.synth.dict_seed, "dictionary seed")->capture_default_str();
  gen_cmd->add_option("--min-len", gen.synth.min_len, "shortest source sentence")->capture_default_str();
  gen_cmd->add_option("--max-len", gen.synth.max_len, "longest source sentence")->capture_default_str();
  gen_cmd->add_option("--noise-rate", gen.synth.noise_rate, "fraction of target tokens swapped within their class")
      ->capture_default_str();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a model and write the best dev checkpoint");
  train_cmd->add_option("--corpus", tr.corpus, "training corpus (TSV)")->required();
  train_cmd->add_option("--dev", tr.dev, "dev corpus used for model selection (default: the training corpus)");
  train_cmd->add_option("--config", tr.config, "key = value config file; flags override it");
  train_cmd->add_option("--out", tr.out, "checkpoint path (vocabulary goes to <out>.vocab)")->capture_default_str();
  train_cmd->add_option("--report", tr.report, "also write the training report here");
  {
    const training::TrainConfig defaults;
    for (const auto& key : training::TrainConfig::keys()) {
      std::string names = "--" + key.name;
      if (key.name == "halo.seed") names += ",--halo-seed";
      tr.overrides[key.name];
      train_cmd->add_option(names, tr.overrides[key.name], key.help)->default_str(defaults.get(key.name));
    }
  }

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a corpus");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "checkpoint path")->required();
  eval_cmd->add_option("--corpus", ev.corpus, "evaluation corpus (TSV)")->required();
  eval_cmd->add_option("--out", ev.out, "also write metrics to this file");
  eval_cmd->add_option("--max-len", ev.max_len, "decoding length limit")->capture_default_str();
  eval_cmd->add_option("--halo.alpha", ev.alpha, "Beta alpha for halo tag accuracy")->capture_default_str();
  eval_cmd->add_option("--halo.beta", ev.beta, "Beta beta for halo tag accuracy")->capture_default_str();
  eval_cmd->add_option("--halo.seed,--halo-seed", ev.halo_seed, "neighbor sampling seed")->capture_default_str();

  DecodeArgs dec;
  auto* decode_cmd = app.add_subcommand("decode", "greedy-decode raw source lines");
  decode_cmd->add_option("--checkpoint", dec.checkpoint, "checkpoint path")->required();
  decode_cmd->add_option("--input", dec.input, "source lines, '-' for stdin")->capture_default_str();
  decode_cmd->add_option("--max-len", dec.max_len, "decoding length limit")->capture_default_str();

  StatsArgs st;
  auto* stats_cmd = app.add_subcommand("corpus-stats", "pair counts, vocabulary sizes and token/type ratios");
  stats_cmd->add_option("--corpus", st.corpora, "corpus files (TSV)")->required()->expected(1, -1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    const CLI::App* target = &app;
    for (const auto* sub : app.get_subcommands()) target = sub;
    out << target->help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*gen_cmd) run_gen_data(gen, out);
    else if (*train_cmd) run_train(tr, *train_cmd, out, err);
    else if (*eval_cmd) run_eval(ev, out);
    else if (*decode_cmd) run_decode(dec, out);
    else if (*stats_cmd) run_stats(st, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace clie::cli
