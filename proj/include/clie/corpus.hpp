#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace clie::corpus {

enum class SemanticTag { Predicate, Argument, Special };

const char* tag_name(SemanticTag tag);

struct TaggedToken {
  std::string lemma;
  SemanticTag tag;
};

// "x:p" -> (x, Predicate), "x:a" -> (x, Argument), anything else -> (surface, Special).
TaggedToken parse_tagged_token(std::string_view surface);

using TokenId = std::uint32_t;

// One line of a corpus file, tokenized.
struct RawPair {
  std::vector<std::string> source;
  std::vector<std::string> target;

  friend bool operator==(const RawPair&, const RawPair&) = default;
};

// Target excludes BOS and ends with EOS.
struct ParallelExample {
  std::vector<TokenId> source;
  std::vector<TokenId> target;
};

class TaggedVocabulary {
 public:
  // Reserved target ids.
  static constexpr TokenId kBos = 0;
  static constexpr TokenId kEos = 1;
  static constexpr TokenId kOovPredicate = 2;
  static constexpr TokenId kOovArgument = 3;
  static constexpr TokenId kOovSpecial = 4;
  static constexpr std::size_t kReservedTarget = 5;
  // Reserved source id.
  static constexpr TokenId kOovSource = 0;

  static constexpr std::string_view kBosSurface = "<s>";
  static constexpr std::string_view kEosSurface = "</s>";
  static constexpr std::string_view kOovPredicateSurface = "<unk>:p";
  static constexpr std::string_view kOovArgumentSurface = "<unk>:a";
  static constexpr std::string_view kOovSurface = "<unk>";

  TaggedVocabulary(std::vector<std::string> source_tokens, std::vector<std::string> target_tokens,
                   int min_count);

  std::size_t source_size() const { return source_tokens_.size(); }
  std::size_t target_size() const { return target_tokens_.size(); }
  int min_count() const { return min_count_; }

  // Unknown surfaces map to the OOV symbol of their class.
  TokenId source_id(std::string_view surface) const;
  TokenId target_id(std::string_view surface) const;
  bool has_target(std::string_view surface) const;

  const std::string& source_token(TokenId id) const { return source_tokens_.at(id); }
  const std::string& target_token(TokenId id) const { return target_tokens_.at(id); }
  SemanticTag tag(TokenId target) const { return tags_.at(target); }

  const std::vector<std::string>& source_tokens() const { return source_tokens_; }
  const std::vector<std::string>& target_tokens() const { return target_tokens_; }

  // Appends EOS to the target.
  ParallelExample encode(const RawPair& pair) const;
  std::vector<TokenId> encode_source(std::span<const std::string> tokens) const;
  std::vector<std::string> decode_target(std::span<const TokenId> ids) const;

  // FNV-1a over both token lists; identifies the vocabulary in checkpoints.
  std::uint64_t fingerprint() const;

  void save(std::ostream& os) const;
  static TaggedVocabulary load(std::istream& is);

 private:
  std::vector<std::string> source_tokens_;
  std::vector<std::string> target_tokens_;
  std::vector<SemanticTag> tags_;
  std::unordered_map<std::string, TokenId> source_index_;
  std::unordered_map<std::string, TokenId> target_index_;
  int min_count_;
};

// Target types seen fewer than min_count times become the OOV symbol of their
// tag class; ids are assigned by descending count, ties broken lexicographically.
TaggedVocabulary build_vocabulary(std::span<const RawPair> pairs, int min_count);

enum class PartitionKind { ByTag, Singleton, Custom };

struct PartitionScheme {
  PartitionKind kind = PartitionKind::ByTag;
  // Custom only: class index per target id.
  std::vector<std::size_t> custom;

  static PartitionScheme by_tag() { return {}; }
  static PartitionScheme singleton() { return {PartitionKind::Singleton, {}}; }
  static PartitionScheme from_map(std::vector<std::size_t> m) { return {PartitionKind::Custom, std::move(m)}; }
};

// Disjoint cover of the target vocabulary.
class ClassPartition {
 public:
  explicit ClassPartition(std::vector<std::size_t> class_of);

  std::size_t num_classes() const { return members_.size(); }
  std::size_t vocab_size() const { return class_of_.size(); }
  std::size_t class_of(TokenId id) const { return class_of_.at(id); }
  const std::vector<TokenId>& members(std::size_t c) const { return members_.at(c); }
  const std::vector<std::size_t>& class_map() const { return class_of_; }

 private:
  std::vector<std::size_t> class_of_;
  std::vector<std::vector<TokenId>> members_;
};

// ByTag class indices (the SemanticTag ordinal).
inline constexpr std::size_t kPredicateClass = 0;
inline constexpr std::size_t kArgumentClass = 1;
inline constexpr std::size_t kSpecialClass = 2;

ClassPartition partition_classes(const TaggedVocabulary& vocab, const PartitionScheme& scheme);

// Lines of "<target surface><TAB><class label>"; labels become class indices
// in order of first appearance. Every target id must appear exactly once.
PartitionScheme load_custom_partition(const std::filesystem::path& path, const TaggedVocabulary& vocab);
PartitionScheme parse_custom_partition(std::istream& is, const TaggedVocabulary& vocab);

// One pair per line: source TAB target, tokens separated by single spaces.
RawPair parse_corpus_line(std::string_view line);
std::vector<RawPair> read_corpus(std::istream& is);
std::vector<RawPair> read_corpus(const std::filesystem::path& path);
void write_corpus(std::ostream& os, std::span<const RawPair> pairs);
void write_corpus(const std::filesystem::path& path, std::span<const RawPair> pairs);

struct CorpusStats {
  std::size_t pairs = 0;
  std::size_t source_tokens = 0;
  std::size_t target_tokens = 0;
  std::size_t source_types = 0;
  std::size_t target_types = 0;
  std::size_t predicate_tokens = 0;
  std::size_t argument_tokens = 0;

  double token_type_ratio() const;
};

CorpusStats corpus_stats(std::span<const RawPair> pairs);

// Synthetic parallel data with a known ground-truth dictionary.
struct SyntheticConfig {
  std::size_t n_pairs = 500;
  std::size_t source_vocab_size = 200;
  std::uint64_t dict_seed = 1;
  std::size_t min_len = 3;
  std::size_t max_len = 9;
  double noise_rate = 0.1;

  void validate() const;
};

struct DictionaryEntry {
  std::string source;
  std::string target_lemma;
  SemanticTag tag;
  // Dropped words never appear on the target side.
  bool dropped;
};

struct SyntheticDataset {
  std::vector<RawPair> pairs;
  // alignment[k][j]: source position translated by target token j of pair k.
  std::vector<std::vector<std::size_t>> alignment;
  std::vector<DictionaryEntry> dictionary;
};

std::vector<DictionaryEntry> make_dictionary(std::size_t source_vocab_size, std::uint64_t dict_seed);
SyntheticDataset generate_synthetic(const SyntheticConfig& config, std::uint64_t seed);

// Human-readable key = value sidecar describing how a dataset was generated.
void write_synthetic_metadata(std::ostream& os, const SyntheticConfig& config, std::uint64_t seed,
                              std::span<const DictionaryEntry> dictionary);

}  // namespace clie::corpus
