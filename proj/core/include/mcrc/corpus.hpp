#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mcrc/tensor.hpp"

namespace mcrc {

inline constexpr std::size_t kNumOptions = 4;

using Tokens = std::vector<std::string>;
using TokenIds = std::vector<std::size_t>;

enum class QuestionStyle { kInterrogative, kCloze };

/// One question of a passage, tokenised but not yet mapped to ids.
struct Instance {
  std::string id;
  std::size_t question_index = 0;
  /// Dataset subset, e.g. "middle" / "high"; empty when unknown.
  std::string subset;
  Tokens passage;
  Tokens question;
  std::array<Tokens, kNumOptions> options;
  std::size_t gold = 0;
  QuestionStyle style = QuestionStyle::kInterrogative;

  /// "<document id>:<question index>"
  std::string key() const { return id + ":" + std::to_string(question_index); }
  bool operator==(const Instance&) const = default;
};

/// A RACE document: one article with parallel question/option/answer lists.
struct RaceDocument {
  std::string article;
  std::vector<std::string> questions;
  std::vector<std::array<std::string, kNumOptions>> options;
  std::vector<std::string> answers;
  std::string id;

  bool operator==(const RaceDocument&) const = default;
};

/// Lowercases, splits every ASCII punctuation character (including "_") into
/// its own token, then splits on whitespace.
Tokens tokenize(std::string_view text);

RaceDocument parse_race_document(std::string_view json_text);
std::string serialize_race_document(const RaceDocument& doc);
std::vector<Instance> to_instances(const RaceDocument& doc, const std::string& subset = "");
/// parse_race_document + to_instances. Throws MalformedRecord.
std::vector<Instance> parse_race_record(std::string_view json_text, const std::string& subset = "");

/// Reads every regular file below `dir` (sorted by path) as a RACE document.
/// The subset of an instance is the name of its file's parent directory
/// relative to `dir`, or empty for files directly inside it.
std::vector<Instance> load_race_directory(const std::filesystem::path& dir);

class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kBos = 2;
  static constexpr std::size_t kEos = 3;
  static constexpr std::size_t kReserved = 4;
  static constexpr std::size_t kDefaultCap = 65000;

  /// Content words ranked by frequency, ties broken lexicographically, the
  /// top `cap` kept after the reserved tokens.
  static Vocabulary build(std::span<const Tokens> streams, std::size_t cap = kDefaultCap);
  /// Restores a vocabulary from its id-ordered token list.
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t lookup(std::string_view token) const;
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  std::size_t size() const noexcept { return tokens_.size(); }
  TokenIds encode(std::span<const std::string> tokens) const;
  /// Surface words of `ids`, skipping reserved ids other than UNK.
  std::string decode(std::span<const std::size_t> ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Byte-level vocabulary for the character encoder. Id 0 pads, 1 is unknown.
class CharVocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;

  static CharVocabulary build(const Vocabulary& words);
  static CharVocabulary from_bytes(std::vector<unsigned char> bytes);

  std::size_t size() const noexcept { return bytes_.size() + 2; }
  std::size_t lookup(unsigned char c) const;
  TokenIds encode(std::string_view word) const;
  const std::vector<unsigned char>& bytes() const noexcept { return bytes_; }

 private:
  std::vector<unsigned char> bytes_;
  std::array<std::size_t, 256> index_{};
};

struct EmbeddingTable {
  Tensor vectors;  // [|V| x d]
  std::vector<bool> pretrained;
  bool trainable = false;

  std::size_t dim() const noexcept { return vectors.cols(); }
  double coverage() const noexcept;
};

/// Every row drawn from uniform(-0.1, 0.1) under `seed`.
EmbeddingTable random_embeddings(const Vocabulary& vocab, std::size_t dim, std::uint64_t seed);

/// Text vectors, one "token v1 ... vd" line each. Rows of covered tokens are
/// copied, the rest keep the seeded uniform(-0.1, 0.1) draw.
EmbeddingTable load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                               std::size_t dim, std::uint64_t seed, bool trainable = false);

/// Instance mapped through a vocabulary.
struct IndexedInstance {
  TokenIds passage;
  TokenIds question;
  std::array<TokenIds, kNumOptions> options;
  std::size_t gold = 0;
};

IndexedInstance index_instance(const Instance& inst, const Vocabulary& vocab);

/// Padded, time-major id matrix: id(b, t) lives at ids[t * batch + b].
struct SequenceBatch {
  std::size_t steps = 0;
  std::size_t batch = 0;
  TokenIds ids;
  Tensor mask;  // [batch x steps], 1 on real tokens
  std::vector<std::size_t> lengths;

  std::size_t id(std::size_t b, std::size_t t) const { return ids[t * batch + b]; }
  /// Mask column for one step, one entry per sequence.
  std::vector<double> step_mask(std::size_t t) const;
};

SequenceBatch pad_sequences(std::span<const TokenIds> sequences);

struct Batch {
  std::vector<std::size_t> indices;  // positions in the source instance list
  SequenceBatch passage;
  SequenceBatch question;
  /// Option i of instance b is sequence i * size() + b.
  SequenceBatch options;
  std::vector<std::size_t> gold;

  std::size_t size() const noexcept { return indices.size(); }
};

Batch make_batch(std::span<const IndexedInstance> instances, std::span<const std::size_t> indices);

/// Consecutive batches in original order, or in a seeded shuffled order. The
/// final partial batch is kept.
std::vector<Batch> make_batches(std::span<const IndexedInstance> instances, std::size_t batch_size,
                                std::optional<std::uint64_t> shuffle_seed = std::nullopt);

/// Passages of 3-6 facts "the <noun> is <color> ." with distinct nouns and
/// colours, and one "what color is the <noun> ?" question per fact.
std::vector<RaceDocument> generate_toy_corpus(std::size_t num_passages, std::uint64_t seed);

/// Writes `docs` as <dir>/<split>/toy/<id>.json with train/dev/test splits
/// taken in order.
void write_toy_corpus(const std::filesystem::path& dir, const std::vector<RaceDocument>& docs,
                      double dev_fraction = 0.2, double test_fraction = 0.0);

}  // namespace mcrc
