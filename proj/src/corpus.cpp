#include "clie/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "clie/error.hpp"

namespace clie::corpus {

const char* tag_name(SemanticTag tag) {
  switch (tag) {
    case SemanticTag::Predicate: return "predicate";
    case SemanticTag::Argument: return "argument";
    case SemanticTag::Special: return "special";
  }
  return "?";
}

TaggedToken parse_tagged_token(std::string_view surface) {
  if (surface.size() > 2 && surface[surface.size() - 2] == ':') {
    const char t = surface.back();
    const std::string lemma(surface.substr(0, surface.size() - 2));
    if (t == 'p') return {lemma, SemanticTag::Predicate};
    if (t == 'a') return {lemma, SemanticTag::Argument};
  }
  return {std::string(surface), SemanticTag::Special};
}

TaggedVocabulary::TaggedVocabulary(std::vector<std::string> source_tokens,
                                   std::vector<std::string> target_tokens, int min_count)
    : source_tokens_(std::move(source_tokens)), target_tokens_(std::move(target_tokens)), min_count_(min_count) {
  if (min_count_ < 1) throw ConfigError("min_count must be >= 1");
  if (source_tokens_.empty() || source_tokens_[kOovSource] != kOovSurface) {
    throw ValidationError("source vocabulary must start with the reserved OOV symbol");
  }
  const std::string_view reserved[] = {kBosSurface, kEosSurface, kOovPredicateSurface,
                                       kOovArgumentSurface, kOovSurface};
  if (target_tokens_.size() < kReservedTarget ||
      !std::equal(std::begin(reserved), std::end(reserved), target_tokens_.begin())) {
    throw ValidationError("target vocabulary must start with the reserved symbols");
  }
  for (TokenId i = 0; i < source_tokens_.size(); ++i) {
    if (!source_index_.emplace(source_tokens_[i], i).second) {
      throw ValidationError("duplicate source token '" + source_tokens_[i] + "'");
    }
  }
  tags_.reserve(target_tokens_.size());
  for (TokenId i = 0; i < target_tokens_.size(); ++i) {
    if (!target_index_.emplace(target_tokens_[i], i).second) {
      throw ValidationError("duplicate target token '" + target_tokens_[i] + "'");
    }
    tags_.push_back(parse_tagged_token(target_tokens_[i]).tag);
  }
  // BOS/EOS and the untagged OOV stay Special even though "<unk>" could be a lemma.
  tags_[kBos] = tags_[kEos] = tags_[kOovSpecial] = SemanticTag::Special;
}

TokenId TaggedVocabulary::source_id(std::string_view surface) const {
  auto it = source_index_.find(std::string(surface));
  return it == source_index_.end() ? kOovSource : it->second;
}

TokenId TaggedVocabulary::target_id(std::string_view surface) const {
  auto it = target_index_.find(std::string(surface));
  if (it != target_index_.end()) return it->second;
  switch (parse_tagged_token(surface).tag) {
    case SemanticTag::Predicate: return kOovPredicate;
    case SemanticTag::Argument: return kOovArgument;
    case SemanticTag::Special: return kOovSpecial;
  }
  return kOovSpecial;
}

bool TaggedVocabulary::has_target(std::string_view surface) const {
  return target_index_.count(std::string(surface)) != 0;
}

std::vector<TokenId> TaggedVocabulary::encode_source(std::span<const std::string> tokens) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(source_id(t));
  return ids;
}

ParallelExample TaggedVocabulary::encode(const RawPair& pair) const {
  if (pair.source.empty()) throw ValidationError("example has an empty source side");
  ParallelExample ex;
  ex.source = encode_source(pair.source);
  ex.target.reserve(pair.target.size() + 1);
  for (const auto& t : pair.target) ex.target.push_back(target_id(t));
  ex.target.push_back(kEos);
  return ex;
}

std::vector<std::string> TaggedVocabulary::decode_target(std::span<const TokenId> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (TokenId id : ids) out.push_back(target_token(id));
  return out;
}

std::uint64_t TaggedVocabulary::fingerprint() const {
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    h ^= 0xff;
    h *= 1099511628211ull;
  };
  for (const auto& t : source_tokens_) mix(t);
  mix("\t");
  for (const auto& t : target_tokens_) mix(t);
  return h;
}

void TaggedVocabulary::save(std::ostream& os) const {
  os << "vocabulary 1\n";
  os << "min_count " << min_count_ << '\n';
  os << "source " << source_tokens_.size() << '\n';
  for (const auto& t : source_tokens_) os << t << '\n';
  os << "target " << target_tokens_.size() << '\n';
  for (const auto& t : target_tokens_) os << t << '\n';
}

TaggedVocabulary TaggedVocabulary::load(std::istream& is) {
  std::string word;
  int version = 0, min_count = 0;
  std::size_t n = 0;
  auto expect = [&](const char* key) {
    if (!(is >> word) || word != key) throw ValidationError(std::string("vocabulary: expected '") + key + "'");
  };
  expect("vocabulary");
  if (!(is >> version) || version != 1) throw ValidationError("vocabulary: unsupported version");
  expect("min_count");
  is >> min_count;
  auto read_list = [&](const char* key) {
    expect(key);
    if (!(is >> n)) throw ValidationError("vocabulary: bad count");
    std::vector<std::string> out(n);
    for (auto& t : out) {
      if (!(is >> t)) throw ValidationError("vocabulary: truncated token list");
    }
    return out;
  };
  auto source = read_list("source");
  auto target = read_list("target");
  return TaggedVocabulary(std::move(source), std::move(target), min_count);
}

namespace {

bool is_reserved(std::string_view s) {
  return s == TaggedVocabulary::kBosSurface || s == TaggedVocabulary::kEosSurface ||
         s == TaggedVocabulary::kOovPredicateSurface || s == TaggedVocabulary::kOovArgumentSurface ||
         s == TaggedVocabulary::kOovSurface;
}

std::vector<std::string> frequent_types(const std::map<std::string, std::size_t>& counts, int min_count) {
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [tok, n] : counts) {
    if (n >= static_cast<std::size_t>(min_count) && !is_reserved(tok)) kept.emplace_back(tok, n);
  }
  // std::map iteration is already lexicographic, so a stable sort on count suffices.
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  out.reserve(kept.size());
  for (auto& [tok, n] : kept) out.push_back(std::move(tok));
  return out;
}

}  // namespace

TaggedVocabulary build_vocabulary(std::span<const RawPair> pairs, int min_count) {
  if (min_count < 1) throw ConfigError("min_count must be >= 1, got " + std::to_string(min_count));
  if (pairs.empty()) throw ValidationError("cannot build a vocabulary from an empty corpus");
  std::map<std::string, std::size_t> source_counts, target_counts;
  for (const auto& p : pairs) {
    for (const auto& t : p.source) ++source_counts[t];
    for (const auto& t : p.target) ++target_counts[t];
  }
  std::vector<std::string> source{std::string(TaggedVocabulary::kOovSurface)};
  for (auto& t : frequent_types(source_counts, min_count)) source.push_back(std::move(t));

  std::vector<std::string> target{std::string(TaggedVocabulary::kBosSurface),
                                  std::string(TaggedVocabulary::kEosSurface),
                                  std::string(TaggedVocabulary::kOovPredicateSurface),
                                  std::string(TaggedVocabulary::kOovArgumentSurface),
                                  std::string(TaggedVocabulary::kOovSurface)};
  for (auto& t : frequent_types(target_counts, min_count)) target.push_back(std::move(t));
  return TaggedVocabulary(std::move(source), std::move(target), min_count);
}

ClassPartition::ClassPartition(std::vector<std::size_t> class_of) : class_of_(std::move(class_of)) {
  if (class_of_.empty()) throw ValidationError("partition over an empty vocabulary");
  const std::size_t n_classes = *std::max_element(class_of_.begin(), class_of_.end()) + 1;
  members_.resize(n_classes);
  for (TokenId id = 0; id < class_of_.size(); ++id) members_[class_of_[id]].push_back(id);
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (members_[c].empty()) throw ValidationError("partition class " + std::to_string(c) + " is empty");
  }
}

ClassPartition partition_classes(const TaggedVocabulary& vocab, const PartitionScheme& scheme) {
  const std::size_t v = vocab.target_size();
  std::vector<std::size_t> class_of(v);
  switch (scheme.kind) {
    case PartitionKind::ByTag:
      // The reserved symbols guarantee all three classes are non-empty.
      for (TokenId id = 0; id < v; ++id) class_of[id] = static_cast<std::size_t>(vocab.tag(id));
      break;
    case PartitionKind::Singleton:
      for (TokenId id = 0; id < v; ++id) class_of[id] = id;
      break;
    case PartitionKind::Custom: {
      if (scheme.custom.size() != v) {
        throw ValidationError("custom partition covers " + std::to_string(scheme.custom.size()) +
                              " ids but the target vocabulary has " + std::to_string(v));
      }
      class_of = scheme.custom;
      break;
    }
  }
  return ClassPartition(std::move(class_of));
}

PartitionScheme parse_custom_partition(std::istream& is, const TaggedVocabulary& vocab) {
  constexpr std::size_t kUnassigned = static_cast<std::size_t>(-1);
  std::vector<std::size_t> class_of(vocab.target_size(), kUnassigned);
  std::map<std::string, std::size_t> labels;
  std::vector<std::string> order;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ValidationError("custom partition line " + std::to_string(lineno) + ": expected token<TAB>class");
    }
    const std::string token = line.substr(0, tab);
    const std::string label = line.substr(tab + 1);
    if (!vocab.has_target(token)) {
      throw ValidationError("custom partition line " + std::to_string(lineno) + ": unknown token '" + token + "'");
    }
    const TokenId id = vocab.target_id(token);
    if (class_of[id] != kUnassigned) {
      throw ValidationError("custom partition assigns '" + token + "' more than once");
    }
    auto [it, inserted] = labels.emplace(label, labels.size());
    class_of[id] = it->second;
  }
  for (TokenId id = 0; id < class_of.size(); ++id) {
    if (class_of[id] == kUnassigned) {
      throw ValidationError("custom partition does not assign '" + vocab.target_token(id) + "'");
    }
  }
  return PartitionScheme::from_map(std::move(class_of));
}

PartitionScheme load_custom_partition(const std::filesystem::path& path, const TaggedVocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open partition file " + path.string());
  return parse_custom_partition(in, vocab);
}

namespace {

std::vector<std::string> split_tokens(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i <= s.size()) {
    const std::size_t j = std::min(s.find(' ', i), s.size());
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j + 1;
  }
  return out;
}

}  // namespace

RawPair parse_corpus_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  const auto tab = line.find('\t');
  if (tab == std::string_view::npos) throw ValidationError("corpus line has no TAB separator");
  return {split_tokens(line.substr(0, tab)), split_tokens(line.substr(tab + 1))};
}

std::vector<RawPair> read_corpus(std::istream& is) {
  std::vector<RawPair> pairs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    try {
      pairs.push_back(parse_corpus_line(line));
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return pairs;
}

std::vector<RawPair> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file " + path.string());
  try {
    return read_corpus(in);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_corpus(std::ostream& os, std::span<const RawPair> pairs) {
  auto join = [&os](const std::vector<std::string>& toks) {
    for (std::size_t i = 0; i < toks.size(); ++i) {
      if (i) os << ' ';
      os << toks[i];
    }
  };
  for (const auto& p : pairs) {
    join(p.source);
    os << '\t';
    join(p.target);
    os << '\n';
  }
}

void write_corpus(const std::filesystem::path& path, std::span<const RawPair> pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write corpus file " + path.string());
  write_corpus(out, pairs);
}

double CorpusStats::token_type_ratio() const {
  const std::size_t types = source_types + target_types;
  return types == 0 ? 0.0 : static_cast<double>(source_tokens + target_tokens) / static_cast<double>(types);
}

CorpusStats corpus_stats(std::span<const RawPair> pairs) {
  CorpusStats s;
  std::map<std::string, std::size_t> src, tgt;
  for (const auto& p : pairs) {
    ++s.pairs;
    s.source_tokens += p.source.size();
    s.target_tokens += p.target.size();
    for (const auto& t : p.source) ++src[t];
    for (const auto& t : p.target) {
      ++tgt[t];
      const auto tag = parse_tagged_token(t).tag;
      if (tag == SemanticTag::Predicate) ++s.predicate_tokens;
      if (tag == SemanticTag::Argument) ++s.argument_tokens;
    }
  }
  s.source_types = src.size();
  s.target_types = tgt.size();
  return s;
}

}  // namespace clie::corpus
