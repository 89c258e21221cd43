#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "rvhate/ingestion.hpp"

namespace rvhate {

enum class EntityCategory { ORG, NORP, GPE };

std::string_view to_string(EntityCategory c) noexcept;
std::optional<EntityCategory> parse_category(std::string_view s) noexcept;

inline constexpr std::string_view kTargetMarker = "[TARGET]";

/// Lowercase surface terms (single words or space-separated phrases) mapped
/// to an entity category. Immutable once built.
class Gazetteer {
 public:
  Gazetteer() = default;

  /// Adds a term; it is lowercased and whitespace-collapsed. Throws
  /// InvalidArgument for empty terms or the marker itself.
  void add(std::string_view term, EntityCategory category);

  std::optional<EntityCategory> lookup(std::string_view normalized_term) const;
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t max_phrase_tokens() const noexcept { return max_tokens_; }
  const std::map<std::string, EntityCategory, std::less<>>& entries() const noexcept { return entries_; }

 private:
  std::map<std::string, EntityCategory, std::less<>> entries_;
  std::size_t max_tokens_ = 0;
};

/// Reads "term<TAB>category" lines; '#' starts a comment line.
Gazetteer parse_gazetteer(std::string_view content);
Gazetteer load_gazetteer(const std::filesystem::path& path);

struct TaggedExample {
  LabeledExample base;
  std::string tagged_text;
  std::size_t hit_count = 0;  // markers present in tagged_text
};

/// Inserts "[TARGET] " before every gazetteer match. Matching is
/// case-insensitive over whitespace-delimited tokens with edge punctuation
/// stripped, longest phrase first, left to right, non-overlapping. Spans
/// already preceded by a marker are left alone.
TaggedExample tag_targets(const LabeledExample& x, const Gazetteer& g);

/// Appends a tagged copy (id suffix "#tagged") of every hate-labeled train
/// example with at least one hit. Originals are kept in order.
Dataset augment_train_set(const Dataset& d, const Gazetteer& g);

inline constexpr std::string_view kTaggedIdSuffix = "#tagged";

}  // namespace rvhate
