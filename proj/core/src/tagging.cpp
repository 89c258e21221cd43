#include "rvhate/tagging.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <sstream>
#include <vector>

#include "rvhate/error.hpp"

namespace rvhate {

std::string_view to_string(EntityCategory c) noexcept {
  switch (c) {
    case EntityCategory::ORG: return "ORG";
    case EntityCategory::NORP: return "NORP";
    case EntityCategory::GPE: return "GPE";
  }
  return "ORG";
}

std::optional<EntityCategory> parse_category(std::string_view s) noexcept {
  if (s == "ORG") return EntityCategory::ORG;
  if (s == "NORP") return EntityCategory::NORP;
  if (s == "GPE") return EntityCategory::GPE;
  return std::nullopt;
}

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

bool is_edge_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 0x80 && !std::isalnum(u) && !is_space(c);
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = ascii_lower(c);
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    const std::size_t start = i;
    while (i < s.size() && !is_space(s[i])) ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

std::string strip_edge_punct(std::string_view tok) {
  std::size_t b = 0, e = tok.size();
  while (b < e && is_edge_punct(tok[b])) ++b;
  while (e > b && is_edge_punct(tok[e - 1])) --e;
  return lower(tok.substr(b, e - b));
}

struct Token {
  std::size_t offset;
  std::string_view raw;
  std::string norm;
};

}  // namespace

void Gazetteer::add(std::string_view term, EntityCategory category) {
  const auto words = split_ws(term);
  if (words.empty()) throw Error(ErrorCode::InvalidArgument, "gazetteer term is empty");
  std::string key;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) key.push_back(' ');
    key += lower(words[i]);
  }
  if (key == lower(kTargetMarker)) throw Error(ErrorCode::InvalidArgument, "the target marker cannot be a term");
  entries_[key] = category;
  max_tokens_ = std::max(max_tokens_, words.size());
}

std::optional<EntityCategory> Gazetteer::lookup(std::string_view normalized_term) const {
  const auto it = entries_.find(normalized_term);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

Gazetteer parse_gazetteer(std::string_view content) {
  Gazetteer g;
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw Error(ErrorCode::ParseError, "gazetteer line " + std::to_string(lineno) + ": expected term<TAB>category");
    }
    const std::string term = trim(std::string_view(line).substr(0, tab));
    const std::string cat = trim(std::string_view(line).substr(tab + 1));
    const auto category = parse_category(cat);
    if (!category) {
      throw Error(ErrorCode::ParseError,
                  "gazetteer line " + std::to_string(lineno) + ": unknown category '" + cat + "'");
    }
    if (term.empty()) {
      throw Error(ErrorCode::ParseError, "gazetteer line " + std::to_string(lineno) + ": empty term");
    }
    g.add(term, *category);
  }
  return g;
}

Gazetteer load_gazetteer(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open gazetteer " + path.string());
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_gazetteer(content);
}

TaggedExample tag_targets(const LabeledExample& x, const Gazetteer& g) {
  std::vector<Token> tokens;
  {
    std::size_t i = 0;
    const std::string_view s = x.text;
    while (i < s.size()) {
      while (i < s.size() && is_space(s[i])) ++i;
      const std::size_t start = i;
      while (i < s.size() && !is_space(s[i])) ++i;
      if (i > start) {
        const auto raw = s.substr(start, i - start);
        tokens.push_back({start, raw, strip_edge_punct(raw)});
      }
    }
  }

  std::vector<std::size_t> insert_at;
  std::size_t existing = 0;
  const std::size_t max_len = g.max_phrase_tokens();
  std::string phrase;
  std::size_t i = 0;
  bool after_marker = false;
  while (i < tokens.size()) {
    if (tokens[i].raw == kTargetMarker) {
      ++existing;
      after_marker = true;
      ++i;
      continue;
    }
    std::size_t matched = 0;
    for (std::size_t len = std::min(max_len, tokens.size() - i); len >= 1; --len) {
      phrase.clear();
      bool ok = true;
      for (std::size_t j = 0; j < len; ++j) {
        if (tokens[i + j].raw == kTargetMarker || tokens[i + j].norm.empty()) {
          ok = false;
          break;
        }
        if (j) phrase.push_back(' ');
        phrase += tokens[i + j].norm;
      }
      if (ok && g.lookup(phrase)) {
        matched = len;
        break;
      }
    }
    if (matched > 0) {
      if (!after_marker) insert_at.push_back(tokens[i].offset);
      i += matched;
    } else {
      ++i;
    }
    after_marker = false;
  }

  TaggedExample out;
  out.base = x;
  out.hit_count = existing + insert_at.size();
  if (insert_at.empty()) {
    out.tagged_text = x.text;
    return out;
  }
  const std::string marker = std::string(kTargetMarker) + " ";
  std::size_t prev = 0;
  for (std::size_t pos : insert_at) {
    out.tagged_text.append(x.text, prev, pos - prev);
    out.tagged_text += marker;
    prev = pos;
  }
  out.tagged_text.append(x.text, prev, std::string::npos);
  return out;
}

Dataset augment_train_set(const Dataset& d, const Gazetteer& g) {
  Dataset out = d;
  if (g.empty()) return out;
  for (const auto& ex : d.examples) {
    if (ex.split != Split::Train || ex.label != 1) continue;
    auto tagged = tag_targets(ex, g);
    if (tagged.hit_count == 0) continue;
    LabeledExample copy = ex;
    copy.id += kTaggedIdSuffix;
    copy.text = std::move(tagged.tagged_text);
    out.examples.push_back(std::move(copy));
  }
  validate_dataset(out);
  return out;
}

}  // namespace rvhate
