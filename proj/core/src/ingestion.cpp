#include "rvhate/ingestion.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "rvhate/error.hpp"

namespace rvhate {

std::string_view to_string(Split s) noexcept {
  switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "train";
}

std::optional<Split> parse_split(std::string_view s) noexcept {
  if (s == "train") return Split::Train;
  if (s == "valid") return Split::Valid;
  if (s == "test") return Split::Test;
  return std::nullopt;
}

std::vector<std::size_t> Dataset::indices_of(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].split == s) out.push_back(i);
  }
  return out;
}

std::size_t Dataset::count(Split s) const {
  std::size_t n = 0;
  for (const auto& e : examples) n += (e.split == s);
  return n;
}

std::vector<int> Dataset::labels_of(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(examples.at(i).label);
  return out;
}

namespace {

std::string at_line(std::size_t line) { return "line " + std::to_string(line) + ": "; }

LabeledExample parse_example(const std::string& line, std::size_t lineno) {
  nlohmann::json obj;
  try {
    obj = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ParseError, at_line(lineno) + e.what());
  }
  if (!obj.is_object()) throw Error(ErrorCode::ParseError, at_line(lineno) + "expected a JSON object");
  for (const char* key : {"id", "text", "label", "split"}) {
    if (!obj.contains(key)) {
      throw Error(ErrorCode::ParseError, at_line(lineno) + "missing key '" + key + "'");
    }
  }
  LabeledExample ex;
  if (!obj["id"].is_string() || obj["id"].get<std::string>().empty()) {
    throw Error(ErrorCode::ParseError, at_line(lineno) + "'id' must be a nonempty string");
  }
  ex.id = obj["id"].get<std::string>();
  if (!obj["text"].is_string()) throw Error(ErrorCode::ParseError, at_line(lineno) + "'text' must be a string");
  ex.text = obj["text"].get<std::string>();

  const auto& label = obj["label"];
  if (!label.is_number_integer() || (label.get<std::int64_t>() != 0 && label.get<std::int64_t>() != 1)) {
    throw Error(ErrorCode::InvalidLabel, at_line(lineno) + "label must be 0 or 1, got " + label.dump());
  }
  ex.label = static_cast<int>(label.get<std::int64_t>());

  const auto& split = obj["split"];
  const auto parsed = split.is_string() ? parse_split(split.get<std::string>()) : std::nullopt;
  if (!parsed) {
    throw Error(ErrorCode::ParseError, at_line(lineno) + "split must be train|valid|test, got " + split.dump());
  }
  ex.split = *parsed;
  return ex;
}

}  // namespace

Dataset parse_dataset(std::string_view jsonl, std::string name) {
  Dataset d;
  d.name = std::move(name);
  std::unordered_set<std::string> seen;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto ex = parse_example(line, lineno);
    if (!seen.insert(ex.id).second) {
      throw Error(ErrorCode::DuplicateId, at_line(lineno) + "duplicate id '" + ex.id + "'");
    }
    d.examples.push_back(std::move(ex));
  }
  return d;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open dataset file " + path.string());
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_dataset(content, path.stem().string());
}

void write_dataset(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write dataset file " + path.string());
  for (const auto& ex : d.examples) {
    nlohmann::ordered_json obj;
    obj["id"] = ex.id;
    obj["text"] = ex.text;
    obj["label"] = ex.label;
    obj["split"] = std::string(to_string(ex.split));
    out << obj.dump() << '\n';
  }
}

void validate_dataset(const Dataset& d) {
  std::unordered_set<std::string_view> seen;
  for (std::size_t i = 0; i < d.examples.size(); ++i) {
    const auto& ex = d.examples[i];
    if (ex.id.empty()) throw Error(ErrorCode::ParseError, "example " + std::to_string(i) + " has an empty id");
    if (ex.label != 0 && ex.label != 1) {
      throw Error(ErrorCode::InvalidLabel, "example '" + ex.id + "' has label " + std::to_string(ex.label));
    }
    if (!seen.insert(ex.id).second) throw Error(ErrorCode::DuplicateId, "duplicate id '" + ex.id + "'");
  }
}

void validate_trainable(const Dataset& d) {
  validate_dataset(d);
  for (Split s : {Split::Train, Split::Valid, Split::Test}) {
    if (d.count(s) == 0) {
      throw Error(ErrorCode::EmptyInput, "dataset '" + d.name + "' has an empty " +
                                             std::string(to_string(s)) + " split");
    }
  }
}

// ---------------------------------------------------------------------------

EmbeddingMatrix::EmbeddingMatrix(std::size_t count, std::size_t dim)
    : count_(count), dim_(dim), values_(count * dim, 0.0), warnings_(count, 1) {
  if (dim == 0) throw Error(ErrorCode::InvalidArgument, "embedding dim must be positive");
}

void EmbeddingMatrix::set_row(std::size_t i, std::span<const double> raw) {
  const double n = l2_norm(raw);
  double* dst = values_.data() + i * dim_;
  if (n == 0.0 || !std::isfinite(n)) {
    std::fill(dst, dst + dim_, 0.0);
    warnings_[i] = 1;
    return;
  }
  for (std::size_t j = 0; j < dim_; ++j) {
    dst[j] = static_cast<double>(static_cast<float>(raw[j] / n));
  }
  warnings_[i] = 0;
}

EmbeddingMatrix EmbeddingMatrix::from_rows(std::size_t dim, std::span<const double> values) {
  if (dim == 0 || values.size() % dim != 0) {
    throw Error(ErrorCode::ShapeMismatch, "value count is not a multiple of dim");
  }
  EmbeddingMatrix m(values.size() / dim, dim);
  for (std::size_t i = 0; i < m.count_; ++i) m.set_row(i, values.subspan(i * dim, dim));
  return m;
}

std::span<const double> EmbeddingMatrix::row(std::size_t i) const {
  if (i >= count_) throw Error(ErrorCode::InvalidArgument, "row index out of range");
  return std::span<const double>(values_).subspan(i * dim_, dim_);
}

std::size_t EmbeddingMatrix::warning_count() const noexcept {
  std::size_t n = 0;
  for (auto w : warnings_) n += w;
  return n;
}

EmbeddingMatrix EmbeddingMatrix::select(std::span<const std::size_t> indices) const {
  EmbeddingMatrix out(indices.size(), dim_);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto src = row(indices[r]);
    std::copy(src.begin(), src.end(), out.values_.begin() + static_cast<std::ptrdiff_t>(r * dim_));
    out.warnings_[r] = warnings_[indices[r]];
  }
  return out;
}

void EmbeddingMatrix::append(const EmbeddingMatrix& other) {
  if (count_ == 0 && dim_ == 0) {
    *this = other;
    return;
  }
  if (other.dim_ != dim_) throw Error(ErrorCode::DimensionMismatch, "appending rows of a different dim");
  values_.insert(values_.end(), other.values_.begin(), other.values_.end());
  warnings_.insert(warnings_.end(), other.warnings_.begin(), other.warnings_.end());
  count_ += other.count_;
}

// ---------------------------------------------------------------------------

void FeaturizerConfig::validate() const {
  if (dim < 2) throw Error(ErrorCode::InvalidArgument, "featurizer dim must be >= 2");
  for (const auto& r : {word_ngrams, char_ngrams}) {
    if (r && (r->min < 1 || r->max < r->min)) {
      throw Error(ErrorCode::InvalidArgument, "n-gram range must satisfy 1 <= min <= max");
    }
  }
  if (!word_ngrams && !char_ngrams) {
    throw Error(ErrorCode::InvalidArgument, "at least one of word or char n-grams must be enabled");
  }
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) noexcept {
  std::uint64_t h = 14695981039346656037ULL ^ seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

std::vector<std::string> lowercase_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c);
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

// Splits UTF-8 into code point substrings; malformed bytes stand alone.
std::vector<std::string_view> code_points(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    if ((c & 0xE0) == 0xC0) len = 2;
    else if ((c & 0xF0) == 0xE0) len = 3;
    else if ((c & 0xF8) == 0xF0) len = 4;
    if (i + len > s.size()) len = 1;
    out.push_back(s.substr(i, len));
    i += len;
  }
  return out;
}

void add_feature(Vec& v, std::string_view key, std::uint64_t seed) {
  const std::uint64_t h = fnv1a64(key, seed);
  const double sign = (h >> 63) ? -1.0 : 1.0;
  v[h % v.size()] += sign;
}

}  // namespace

Vec hash_features(std::string_view text, const FeaturizerConfig& cfg) {
  Vec v(cfg.dim, 0.0);
  const auto tokens = lowercase_tokens(text);
  std::string key;
  if (cfg.word_ngrams) {
    for (int n = cfg.word_ngrams->min; n <= cfg.word_ngrams->max; ++n) {
      const auto un = static_cast<std::size_t>(n);
      for (std::size_t i = 0; i + un <= tokens.size(); ++i) {
        key = "w:";
        for (std::size_t j = 0; j < un; ++j) {
          if (j) key.push_back(' ');
          key += tokens[i + j];
        }
        add_feature(v, key, cfg.hash_seed);
      }
    }
  }
  if (cfg.char_ngrams) {
    for (const auto& tok : tokens) {
      const std::string padded = "<" + tok + ">";
      const auto cps = code_points(padded);
      for (int n = cfg.char_ngrams->min; n <= cfg.char_ngrams->max; ++n) {
        const auto un = static_cast<std::size_t>(n);
        for (std::size_t i = 0; i + un <= cps.size(); ++i) {
          key = "c:";
          for (std::size_t j = 0; j < un; ++j) key += cps[i + j];
          add_feature(v, key, cfg.hash_seed);
        }
      }
    }
  }
  return v;
}

EmbeddingMatrix featurize_texts(std::span<const std::string> texts, const FeaturizerConfig& cfg) {
  cfg.validate();
  EmbeddingMatrix m(texts.size(), cfg.dim);
  for (std::size_t i = 0; i < texts.size(); ++i) m.set_row(i, hash_features(texts[i], cfg));
  return m;
}

EmbeddingMatrix featurize(const Dataset& d, const FeaturizerConfig& cfg) {
  std::vector<std::string> texts;
  texts.reserve(d.size());
  for (const auto& ex : d.examples) texts.push_back(ex.text);
  return featurize_texts(texts, cfg);
}

// ---------------------------------------------------------------------------

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[off + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_embeddings(const EmbeddingMatrix& m) {
  std::vector<std::uint8_t> out;
  out.reserve(kEmbeddingHeaderBytes + 4 * m.data().size());
  for (char c : {'R', 'V', 'H', 'E'}) out.push_back(static_cast<std::uint8_t>(c));
  put_u32(out, kEmbeddingFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(m.count()));
  put_u32(out, static_cast<std::uint32_t>(m.dim()));
  for (double x : m.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
  return out;
}

EmbeddingMatrix decode_embeddings(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || bytes[0] != 'R' || bytes[1] != 'V' || bytes[2] != 'H' || bytes[3] != 'E') {
    throw Error(ErrorCode::BadMagic, "embedding file does not start with RVHE");
  }
  if (bytes.size() < kEmbeddingHeaderBytes) throw Error(ErrorCode::TruncatedFile, "embedding header is incomplete");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kEmbeddingFormatVersion) {
    throw Error(ErrorCode::VersionMismatch, "unsupported embedding format version " + std::to_string(version));
  }
  const std::uint64_t count = get_u32(bytes, 8);
  const std::uint64_t dim = get_u32(bytes, 12);
  if (dim == 0) throw Error(ErrorCode::ParseError, "embedding dim is 0");
  const std::uint64_t expected = kEmbeddingHeaderBytes + 4 * count * dim;
  if (bytes.size() < expected) {
    throw Error(ErrorCode::TruncatedFile, "expected " + std::to_string(expected) + " bytes, found " +
                                              std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) {
    throw Error(ErrorCode::ParseError, "trailing bytes after " + std::to_string(count) + " rows");
  }
  EmbeddingMatrix m(count, dim);
  for (std::size_t i = 0; i < count * dim; ++i) {
    const float f = std::bit_cast<float>(get_u32(bytes, kEmbeddingHeaderBytes + 4 * i));
    if (!std::isfinite(f)) throw Error(ErrorCode::NonFiniteValue, "embedding value is not finite");
    m.values_[i] = f;
  }
  for (std::size_t r = 0; r < count; ++r) {
    const double n = l2_norm(m.row(r));
    if (n == 0.0) continue;  // stays flagged
    if (std::abs(n - 1.0) > 1e-6) {
      // Not normalized by the producer: renormalize and keep the warning flag.
      Vec raw(m.row(r).begin(), m.row(r).end());
      m.set_row(r, raw);
      m.warnings_[r] = 1;
    } else {
      m.warnings_[r] = 0;
    }
  }
  return m;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

void write_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path) {
  write_file_bytes(path, encode_embeddings(m));
}

EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
  return decode_embeddings(read_file_bytes(path));
}

}  // namespace rvhate
