#include "rvhate/head.hpp"

#include <bit>
#include <cmath>

#include "rvhate/error.hpp"
#include "rvhate/ingestion.hpp"

namespace rvhate {

std::string_view to_string(ModuleId id) noexcept {
  switch (id) {
    case ModuleId::M0: return "M0";
    case ModuleId::M1: return "M1";
    case ModuleId::M2: return "M2";
    case ModuleId::M3: return "M3";
    case ModuleId::Combined: return "combined";
  }
  return "M0";
}

std::optional<ModuleId> parse_module_id(std::string_view s) noexcept {
  if (s == "M0") return ModuleId::M0;
  if (s == "M1") return ModuleId::M1;
  if (s == "M2") return ModuleId::M2;
  if (s == "M3") return ModuleId::M3;
  if (s == "combined") return ModuleId::Combined;
  return std::nullopt;
}

ModuleHead::ModuleHead(ModuleId id, std::size_t dim_, std::size_t hidden_)
    : module_id(id), dim(dim_), hidden(hidden_), params(parameter_count(dim_, hidden_), 0.0) {
  if (dim_ == 0 || hidden_ == 0) throw Error(ErrorCode::InvalidArgument, "head dims must be positive");
}

ModuleHead ModuleHead::initialized(ModuleId id, std::size_t dim, std::size_t hidden, std::mt19937_64& rng) {
  ModuleHead h(id, dim, hidden);
  const double a1 = std::sqrt(6.0 / static_cast<double>(dim + hidden));
  const double a2 = std::sqrt(6.0 / static_cast<double>(hidden + 2));
  std::uniform_real_distribution<double> u1(-a1, a1);
  std::uniform_real_distribution<double> u2(-a2, a2);
  for (double& w : h.proj_w()) w = u1(rng);
  for (double& w : h.cls_w()) w = u2(rng);
  return h;
}

void ModuleHead::round_to_float32() {
  for (double& p : params) p = static_cast<double>(static_cast<float>(p));
}

HeadOutput forward(const ModuleHead& head, std::span<const double> x) {
  if (x.size() != head.dim) {
    throw Error(ErrorCode::DimensionMismatch,
                "head expects dim " + std::to_string(head.dim) + ", got " + std::to_string(x.size()));
  }
  const std::size_t h = head.hidden;
  const auto wp = head.proj_w();
  const auto bp = head.proj_b();
  HeadOutput out;
  out.activation.assign(bp.begin(), bp.end());
  for (std::size_t i = 0; i < head.dim; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* row = wp.data() + i * h;
    for (std::size_t j = 0; j < h; ++j) out.activation[j] += xi * row[j];
  }
  for (double& a : out.activation) a = std::tanh(a);

  out.projected = out.activation;
  out.degenerate = !normalize_in_place(out.projected);

  const auto wc = head.cls_w();
  const auto bc = head.cls_b();
  out.logits = {bc[0], bc[1]};
  for (std::size_t j = 0; j < h; ++j) {
    out.logits[0] += out.activation[j] * wc[2 * j];
    out.logits[1] += out.activation[j] * wc[2 * j + 1];
  }
  return out;
}

Logits head_logits(const ModuleHead& head, std::span<const double> x) { return forward(head, x).logits; }

void backward(const ModuleHead& head, std::span<const double> x, const HeadOutput& out,
              const Logits& dlogits, std::span<const double> dactivation, std::span<double> grad) {
  const std::size_t h = head.hidden;
  const std::size_t off_bp = head.dim * h;
  const std::size_t off_wc = off_bp + h;
  const std::size_t off_bc = off_wc + 2 * h;
  const auto wc = head.cls_w();

  Vec dpre(h);
  for (std::size_t j = 0; j < h; ++j) {
    double da = wc[2 * j] * dlogits[0] + wc[2 * j + 1] * dlogits[1];
    if (!dactivation.empty()) da += dactivation[j];
    const double a = out.activation[j];
    dpre[j] = da * (1.0 - a * a);
    grad[off_wc + 2 * j] += a * dlogits[0];
    grad[off_wc + 2 * j + 1] += a * dlogits[1];
    grad[off_bp + j] += dpre[j];
  }
  grad[off_bc] += dlogits[0];
  grad[off_bc + 1] += dlogits[1];
  for (std::size_t i = 0; i < head.dim; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    double* row = grad.data() + i * h;
    for (std::size_t j = 0; j < h; ++j) row[j] += xi * dpre[j];
  }
}

double hate_probability(const Logits& z) {
  // softmax over two classes = logistic of the logit gap
  return 1.0 / (1.0 + std::exp(z[0] - z[1]));
}

int predict_label(const Logits& z) { return z[1] > z[0] ? 1 : 0; }

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[off + i]) << (8 * i);
  return v;
}

constexpr std::size_t kHeadHeaderBytes = 17;

}  // namespace

std::vector<std::uint8_t> encode_head(const ModuleHead& head) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeadHeaderBytes + 4 * head.params.size());
  for (char c : {'R', 'V', 'H', 'D'}) out.push_back(static_cast<std::uint8_t>(c));
  put_u32(out, kHeadFormatVersion);
  out.push_back(static_cast<std::uint8_t>(head.module_id));
  put_u32(out, static_cast<std::uint32_t>(head.dim));
  put_u32(out, static_cast<std::uint32_t>(head.hidden));
  for (double p : head.params) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(p)));
  return out;
}

ModuleHead decode_head(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || bytes[0] != 'R' || bytes[1] != 'V' || bytes[2] != 'H' || bytes[3] != 'D') {
    throw Error(ErrorCode::BadMagic, "head checkpoint does not start with RVHD");
  }
  if (bytes.size() < kHeadHeaderBytes) throw Error(ErrorCode::TruncatedFile, "head header is incomplete");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kHeadFormatVersion) {
    throw Error(ErrorCode::VersionMismatch, "unsupported head format version " + std::to_string(version));
  }
  const std::uint8_t id = bytes[8];
  if (id > static_cast<std::uint8_t>(ModuleId::Combined)) {
    throw Error(ErrorCode::ParseError, "unknown module id " + std::to_string(id));
  }
  const std::size_t dim = get_u32(bytes, 9);
  const std::size_t hidden = get_u32(bytes, 13);
  ModuleHead head(static_cast<ModuleId>(id), dim, hidden);
  const std::size_t expected = kHeadHeaderBytes + 4 * head.params.size();
  if (bytes.size() < expected) throw Error(ErrorCode::TruncatedFile, "head checkpoint is truncated");
  if (bytes.size() > expected) throw Error(ErrorCode::ParseError, "trailing bytes in head checkpoint");
  for (std::size_t i = 0; i < head.params.size(); ++i) {
    const float f = std::bit_cast<float>(get_u32(bytes, kHeadHeaderBytes + 4 * i));
    if (!std::isfinite(f)) throw Error(ErrorCode::NonFiniteValue, "head parameter is not finite");
    head.params[i] = f;
  }
  return head;
}

void write_head(const ModuleHead& head, const std::filesystem::path& path) {
  write_file_bytes(path, encode_head(head));
}

ModuleHead read_head(const std::filesystem::path& path) { return decode_head(read_file_bytes(path)); }

}  // namespace rvhate
