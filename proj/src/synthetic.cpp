#include <algorithm>
#include <numeric>
#include <ostream>
#include <random>

#include "clie/corpus.hpp"
#include "clie/error.hpp"

namespace clie::corpus {

namespace {

constexpr std::string_view kSourceSyllables[] = {"ka", "lo", "mi", "tu", "re", "sa", "no", "vi",
                                                 "zu", "pe", "do", "ha", "gi", "bu", "ye", "fo"};
constexpr std::string_view kTargetSyllables[] = {"tar", "mel", "dun", "kis", "por", "lan", "vek", "sor",
                                                 "bim", "gal", "fen", "rud", "cho", "nix", "wal", "jep"};

// Base-16 syllable spelling of an index; distinct indices give distinct words.
template <std::size_t N>
std::string spell(std::size_t index, const std::string_view (&syllables)[N]) {
  std::string out;
  do {
    out += syllables[index % N];
    index /= N;
  } while (index > 0);
  return out;
}

char tag_suffix(SemanticTag tag) { return tag == SemanticTag::Predicate ? 'p' : 'a'; }

}  // namespace

void SyntheticConfig::validate() const {
  if (n_pairs == 0) throw ConfigError("n_pairs must be positive");
  if (source_vocab_size < 3) throw ConfigError("source_vocab_size must be at least 3");
  if (min_len == 0 || max_len < min_len) throw ConfigError("sentence length range must satisfy 1 <= min <= max");
  if (!(noise_rate >= 0.0 && noise_rate < 1.0)) throw ConfigError("noise_rate must lie in [0, 1)");
}

std::vector<DictionaryEntry> make_dictionary(std::size_t source_vocab_size, std::uint64_t dict_seed) {
  std::mt19937_64 rng(dict_seed);
  std::vector<std::size_t> target_ids(source_vocab_size);
  std::iota(target_ids.begin(), target_ids.end(), 0);
  std::shuffle(target_ids.begin(), target_ids.end(), rng);

  // One predicate-like word for every two argument-like words.
  std::vector<std::size_t> order(source_vocab_size);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_pred = std::max<std::size_t>(1, (source_vocab_size + 1) / 3);
  std::vector<SemanticTag> tags(source_vocab_size, SemanticTag::Argument);
  for (std::size_t i = 0; i < n_pred; ++i) tags[order[i]] = SemanticTag::Predicate;

  std::bernoulli_distribution drop(0.15);
  std::vector<DictionaryEntry> dict;
  dict.reserve(source_vocab_size);
  for (std::size_t i = 0; i < source_vocab_size; ++i) {
    dict.push_back({spell(i, kSourceSyllables), spell(target_ids[i], kTargetSyllables), tags[i], drop(rng)});
  }
  // Each class keeps at least one translated word.
  for (SemanticTag t : {SemanticTag::Predicate, SemanticTag::Argument}) {
    auto kept = std::find_if(dict.begin(), dict.end(), [t](const auto& e) { return e.tag == t && !e.dropped; });
    if (kept == dict.end()) {
      std::find_if(dict.begin(), dict.end(), [t](const auto& e) { return e.tag == t; })->dropped = false;
    }
  }
  return dict;
}

SyntheticDataset generate_synthetic(const SyntheticConfig& config, std::uint64_t seed) {
  config.validate();
  SyntheticDataset out;
  out.dictionary = make_dictionary(config.source_vocab_size, config.dict_seed);
  const auto& dict = out.dictionary;

  std::vector<std::size_t> preds, args;
  for (std::size_t i = 0; i < dict.size(); ++i) {
    (dict[i].tag == SemanticTag::Predicate ? preds : args).push_back(i);
  }
  // Zipfian word frequencies within each class.
  auto zipf = [](std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t r = 0; r < n; ++r) w[r] = 1.0 / static_cast<double>(r + 1);
    return std::discrete_distribution<std::size_t>(w.begin(), w.end());
  };
  auto pick_pred = zipf(preds.size());
  auto pick_arg = zipf(args.size());

  // Noise substitutes among translatable words of the same class.
  std::vector<std::size_t> noise_preds, noise_args;
  for (std::size_t i : preds) if (!dict[i].dropped) noise_preds.push_back(i);
  for (std::size_t i : args) if (!dict[i].dropped) noise_args.push_back(i);

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> length(config.min_len, config.max_len);
  std::uniform_int_distribution<int> clause_args(1, 2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  out.pairs.reserve(config.n_pairs);
  out.alignment.reserve(config.n_pairs);
  while (out.pairs.size() < config.n_pairs) {
    const std::size_t len = length(rng);
    std::vector<std::size_t> words;
    while (words.size() < len) {
      words.push_back(preds[pick_pred(rng)]);
      const int n_args = clause_args(rng);
      for (int a = 0; a < n_args && words.size() < len; ++a) words.push_back(args[pick_arg(rng)]);
    }

    RawPair pair;
    std::vector<std::size_t> align;
    for (std::size_t pos = 0; pos < words.size(); ++pos) {
      const auto& e = dict[words[pos]];
      pair.source.push_back(e.source);
      if (e.dropped) continue;
      std::size_t emitted = words[pos];
      const auto& pool = e.tag == SemanticTag::Predicate ? noise_preds : noise_args;
      if (config.noise_rate > 0.0 && pool.size() > 1 && unit(rng) < config.noise_rate) {
        std::uniform_int_distribution<std::size_t> other(0, pool.size() - 2);
        std::size_t k = other(rng);
        // Skip over the correct word so the substitute always differs.
        const auto self = std::find(pool.begin(), pool.end(), words[pos]) - pool.begin();
        if (static_cast<std::ptrdiff_t>(k) >= self) ++k;
        emitted = pool[k];
      }
      pair.target.push_back(dict[emitted].target_lemma + ':' + tag_suffix(dict[emitted].tag));
      align.push_back(pos);
    }
    if (pair.target.empty()) continue;
    out.pairs.push_back(std::move(pair));
    out.alignment.push_back(std::move(align));
  }
  return out;
}

void write_synthetic_metadata(std::ostream& os, const SyntheticConfig& config, std::uint64_t seed,
                              std::span<const DictionaryEntry> dictionary) {
  os << "# synthetic parallel corpus\n";
  os << "seed = " << seed << '\n';
  os << "n_pairs = " << config.n_pairs << '\n';
  os << "source_vocab_size = " << config.source_vocab_size << '\n';
  os << "dict_seed = " << config.dict_seed << '\n';
  os << "min_len = " << config.min_len << '\n';
  os << "max_len = " << config.max_len << '\n';
  os << "noise_rate = " << config.noise_rate << '\n';
  os << "dictionary.size = " << dictionary.size() << '\n';
  for (const auto& e : dictionary) {
    os << "dictionary." << e.source << " = " << e.target_lemma << ':' << tag_suffix(e.tag)
       << (e.dropped ? " dropped" : "") << '\n';
  }
}

}  // namespace clie::corpus
