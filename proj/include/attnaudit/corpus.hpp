#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "attnaudit/tensor.hpp"

namespace attnaudit {

using TokenIndex = std::int32_t;

enum class Split { train, dev, test };

std::string_view split_name(Split s);
Split parse_split(std::string_view name);

struct Document {
  std::string id;
  std::string text;
  std::vector<TokenIndex> tokens;
  std::vector<int> labels;
  Split split = Split::train;
};

/// Dense word <-> index table. Indices 0..2 are reserved for the padding,
/// unknown-word and number placeholders.
class Vocabulary {
 public:
  static constexpr TokenIndex kPad = 0;
  static constexpr TokenIndex kUnk = 1;
  static constexpr TokenIndex kNumber = 2;
  static constexpr std::string_view kPadWord = "<pad>";
  static constexpr std::string_view kUnkWord = "<unk>";
  static constexpr std::string_view kNumberWord = "qqq";

  Vocabulary();
  /// Words in index order; must begin with the three reserved words.
  static Vocabulary from_words(const std::vector<std::string>& words);

  std::size_t size() const { return words_.size(); }
  std::optional<TokenIndex> find(std::string_view word) const;
  const std::string& word(TokenIndex index) const;
  const std::vector<std::string>& words() const { return words_; }

  /// JSON array of words in index order.
  std::string to_json() const;
  static Vocabulary from_json(std::string_view json);
  /// Content hash used to tie models and log-odds tables to a vocabulary.
  std::string hash() const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.words_ == b.words_;
  }

 private:
  TokenIndex append(const std::string& word);

  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenIndex> index_;
};

/// Lowercases, splits on whitespace, and emits each ASCII punctuation
/// character as its own token.
std::vector<std::string> tokenize(std::string_view text);

/// Maps any token containing a digit to the number placeholder word;
/// otherwise returns the token unchanged.
std::string normalize_word(std::string_view token);

/// Index of a token after number normalization, or <unk> if absent.
TokenIndex normalize_token(std::string_view token, const Vocabulary& vocab);

/// Reserved words plus every normalized training token seen at least
/// `min_count` times, ordered by descending count then lexicographically.
Vocabulary build_vocab(std::span<const std::string> train_texts,
                       std::size_t min_count = 1);

std::vector<TokenIndex> encode(std::string_view text, const Vocabulary& vocab);
std::vector<std::string> decode(std::span<const TokenIndex> tokens,
                                const Vocabulary& vocab);

enum class RowProvenance { pretrained, gaussian_init, padding };

struct EmbeddingMatrix {
  Tensor values;  // [|V|, dim]
  std::vector<RowProvenance> provenance;
};

/// Reads "word v1 ... v_dim" rows (an optional "count dim" header line is
/// skipped). Vocabulary words found in the file copy their vector; all
/// others are drawn from N(0, 1) with the given seed. The padding row is
/// zero. An empty path or "none" means no file.
EmbeddingMatrix load_embeddings(const std::filesystem::path& path,
                                const Vocabulary& vocab, std::size_t dim,
                                std::uint64_t seed);

struct Dataset {
  std::vector<Document> documents;
  std::size_t label_count = 1;
  Vocabulary vocabulary;

  std::vector<const Document*> split(Split s) const;
  /// Throws ValidationError when a document or label breaks an invariant,
  /// including a binary label lacking either class in the training split.
  void validate() const;
  /// Hash of the ids, tokens and labels of one split.
  std::string split_hash(Split s) const;
};

enum class LabelRule {
  any_trigger,  // single label: positive iff any trigger word occurs
  per_trigger,  // one label per trigger word
};

struct SyntheticCorpusParams {
  std::size_t n_docs = 2000;
  std::size_t doc_len = 200;
  std::size_t vocab_size = 100;
  std::vector<std::string> trigger_words{"trigger"};
  LabelRule label_rule = LabelRule::any_trigger;
  std::uint64_t seed = 0;
};

/// Planted-signal corpus. Filler words are drawn uniformly; each positive
/// document gets one trigger at a uniform position. The vocabulary is
/// exactly `vocab_size` words. Splits are 70/10/20.
Dataset generate_synthetic_corpus(const SyntheticCorpusParams& params);

struct JsonlOptions {
  std::size_t min_count = 1;
  /// Use this vocabulary instead of building one from the train split.
  const Vocabulary* vocabulary = nullptr;
};

/// One {"id","text","labels"[,"split"]} object per line. Without a split
/// field, documents are ranked by id hash and cut 70/10/20.
Dataset load_jsonl(const std::filesystem::path& path, const JsonlOptions& options = {});
Dataset parse_jsonl(std::string_view contents, const JsonlOptions& options = {});
std::string to_jsonl(const Dataset& dataset);

}  // namespace attnaudit
