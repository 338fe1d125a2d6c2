#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cmxqe/common.hpp"

namespace cmxqe {

enum class Source { Syn, Hum };
enum class Context { En, Hi };

std::string_view to_string(Context context);

/// Identifies which encoder pairing produced a vector:
///   syn:{record_id}:{en|hi}          synthetic sentence paired with English/Hindi
///   hum:{pair_id}:{index}:{en|hi}    index-th human reference paired likewise
struct EmbeddingKey {
  Source source = Source::Syn;
  std::string owner_id;
  Context context = Context::En;
  std::optional<std::uint32_t> human_index;  // present iff source == Hum

  static EmbeddingKey synthetic(std::string record_id, Context context);
  static EmbeddingKey human(std::string pair_id, std::uint32_t index, Context context);

  std::string render() const;
  static std::optional<EmbeddingKey> parse(std::string_view text);

  bool operator==(const EmbeddingKey&) const = default;
};

struct EmbeddingVector {
  EmbeddingKey key;
  std::vector<float> values;
};

/// Keyed, fixed-dimension collection of finite float vectors. Keys are kept in
/// byte-lexicographic order of their rendered form. The store does not insist
/// on the embedding key grammar so the same container can carry fused rows.
class EmbeddingStore {
 public:
  using Map = std::map<std::string, std::vector<float>, std::less<>>;

  explicit EmbeddingStore(std::uint32_t dim = kClsDim) : dim_(dim) {}

  std::uint32_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const Map& entries() const { return entries_; }

  /// Throws DimMismatch, NonFiniteInput or DuplicateKey.
  void insert(std::string key, std::vector<float> values);
  void insert(const EmbeddingKey& key, std::vector<float> values) { insert(key.render(), std::move(values)); }

  bool contains(std::string_view key) const { return entries_.find(key) != entries_.end(); }
  const std::vector<float>* find(std::string_view key) const;

  /// Throws MissingKey.
  std::span<const float> at(std::string_view key) const;
  std::span<const float> at(const EmbeddingKey& key) const { return at(key.render()); }

  /// Bitwise comparison of dims, keys and float payloads.
  friend bool operator==(const EmbeddingStore& a, const EmbeddingStore& b);

 private:
  std::uint32_t dim_;
  Map entries_;
};

// CLSV container, little-endian:
//   "CLSV" | version u32 = 1 | dim u32 | count u64 |
//   count x ( key_len u16 | key bytes | dim x f32 ), sorted by key.
inline constexpr std::uint32_t kClsvVersion = 1;
inline constexpr std::size_t kClsvHeaderBytes = 20;

std::string encode_clsv(const EmbeddingStore& store);

/// Throws BadMagic, VersionMismatch, DimMismatch (when expected_dim is set and
/// differs), TruncatedFile, DuplicateKey or NonFiniteInput.
EmbeddingStore decode_clsv(std::string_view bytes, std::optional<std::uint32_t> expected_dim = std::nullopt);

EmbeddingStore read_clsv(const std::filesystem::path& path,
                         std::optional<std::uint32_t> expected_dim = std::nullopt);
void write_clsv(const EmbeddingStore& store, const std::filesystem::path& path);

/// Debug/interop format: one {"key": ..., "values": [...]} object per line.
/// Values are written as the shortest decimal that reads back to the same
/// float, so CLSV -> JSONL -> CLSV is lossless. CLSV stays authoritative.
EmbeddingStore read_jsonl(const std::filesystem::path& path,
                          std::optional<std::uint32_t> expected_dim = std::nullopt);
void write_jsonl(const EmbeddingStore& store, const std::filesystem::path& path);

/// Lowercased tokens split on Unicode whitespace. Only ASCII letters change
/// case; Devanagari and other scripts pass through unchanged.
std::vector<std::string> tokenize(std::string_view sentence);

/// Hash-based stand-in for an encoder's CLS vector. Each token of each
/// sentence is hashed (FNV-1a over seed, sentence tag, token) and expanded by
/// splitmix64 into kClsDim values in [-1, 1]; the token vectors are summed and
/// L2-normalized. Throws EmptySentence when sentence_b has no tokens.
EmbeddingVector deterministic_embed(std::string_view sentence_a, std::string_view sentence_b,
                                    const EmbeddingKey& key, std::uint64_t seed);

struct FileProvider {
  std::filesystem::path path;
};

struct DeterministicProvider {
  std::uint64_t seed = 0;
};

using Provider = std::variant<FileProvider, DeterministicProvider>;

struct EmbeddingRequest {
  EmbeddingKey key;
  std::string sentence_a;
  std::string sentence_b;
};

/// One vector per request. A file provider throws MissingKey naming every
/// absent key; duplicate request keys throw DuplicateKey.
EmbeddingStore provide_embeddings(const Provider& provider, std::span<const EmbeddingRequest> requests);

/// Same as the file provider, over a store that is already loaded.
EmbeddingStore select_embeddings(const EmbeddingStore& source, std::span<const EmbeddingRequest> requests);

}  // namespace cmxqe
