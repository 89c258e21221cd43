#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rvhate/math.hpp"

namespace rvhate {

enum class Split : std::uint8_t { Train, Valid, Test };

std::string_view to_string(Split s) noexcept;
std::optional<Split> parse_split(std::string_view s) noexcept;

struct LabeledExample {
  std::string id;
  std::string text;
  int label = 0;  // 0 = non-hate, 1 = hate
  Split split = Split::Train;
};

struct Dataset {
  std::string name;
  std::vector<LabeledExample> examples;

  std::size_t size() const noexcept { return examples.size(); }
  std::vector<std::size_t> indices_of(Split s) const;
  std::size_t count(Split s) const;
  std::vector<int> labels_of(std::span<const std::size_t> indices) const;
};

/// Parses a JSON Lines dataset. Blank lines are skipped; line numbers in
/// diagnostics are 1-based physical lines.
Dataset load_dataset(const std::filesystem::path& path);
Dataset parse_dataset(std::string_view jsonl, std::string name);
void write_dataset(const Dataset& d, const std::filesystem::path& path);

/// Throws InvalidLabel / DuplicateId / ParseError.
void validate_dataset(const Dataset& d);
/// Additionally requires every split to be nonempty.
void validate_trainable(const Dataset& d);

/// Row-major matrix of embeddings. Every non-zero row has unit L2 norm;
/// zero rows are flagged as warnings.
struct FeaturizerConfig;

class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t count, std::size_t dim);

  /// Builds from raw row-major values: rows are L2-normalized and rounded to
  /// float32 precision so that the matrix survives a file round trip exactly.
  static EmbeddingMatrix from_rows(std::size_t dim, std::span<const double> values);

  std::size_t count() const noexcept { return count_; }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const double> row(std::size_t i) const;
  std::span<const double> data() const noexcept { return values_; }
  bool row_warning(std::size_t i) const { return warnings_.at(i) != 0; }
  std::size_t warning_count() const noexcept;

  /// Returns the rows selected by indices, in order.
  EmbeddingMatrix select(std::span<const std::size_t> indices) const;
  /// Appends the rows of other (dims must agree).
  void append(const EmbeddingMatrix& other);

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;

 private:
  friend EmbeddingMatrix decode_embeddings(std::span<const std::uint8_t> bytes);
  friend EmbeddingMatrix featurize_texts(std::span<const std::string> texts, const FeaturizerConfig& cfg);
  void set_row(std::size_t i, std::span<const double> raw);

  std::size_t count_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> values_;
  std::vector<std::uint8_t> warnings_;
};

struct NgramRange {
  int min = 1;
  int max = 1;
};

struct FeaturizerConfig {
  std::size_t dim = 512;
  std::optional<NgramRange> word_ngrams = NgramRange{1, 2};
  std::optional<NgramRange> char_ngrams = NgramRange{3, 5};
  std::uint64_t hash_seed = 0;

  void validate() const;
};

/// 64-bit FNV-1a. The seed is XORed into the offset basis, so seed 0 gives
/// the reference hash.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0) noexcept;

/// Signed feature hashing of a single text; the result is not normalized.
Vec hash_features(std::string_view text, const FeaturizerConfig& cfg);
EmbeddingMatrix featurize(const Dataset& d, const FeaturizerConfig& cfg);
EmbeddingMatrix featurize_texts(std::span<const std::string> texts, const FeaturizerConfig& cfg);

// RVHE v1: "RVHE", u32 version, u32 count, u32 dim, count*dim float32 (LE).
inline constexpr std::uint32_t kEmbeddingFormatVersion = 1;
inline constexpr std::size_t kEmbeddingHeaderBytes = 16;

std::vector<std::uint8_t> encode_embeddings(const EmbeddingMatrix& m);
EmbeddingMatrix decode_embeddings(std::span<const std::uint8_t> bytes);
void write_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path);
EmbeddingMatrix read_embeddings(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace rvhate
