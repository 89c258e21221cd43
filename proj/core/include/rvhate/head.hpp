#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "rvhate/math.hpp"

namespace rvhate {

enum class ModuleId : std::uint8_t { M0 = 0, M1 = 1, M2 = 2, M3 = 3, Combined = 4 };

std::string_view to_string(ModuleId id) noexcept;
std::optional<ModuleId> parse_module_id(std::string_view s) noexcept;

using Logits = std::array<double, 2>;

/// Trainable projection + 2-class classifier over a fixed embedding.
///
/// Parameters are stored flat in declaration order:
///   projection weights (dim x hidden, row-major), projection bias (hidden),
///   classifier weights (hidden x 2, row-major), classifier bias (2).
///
/// a = tanh(x^T Wp + bp), projected = a / |a|, logits = a^T Wc + bc.
struct ModuleHead {
  ModuleId module_id = ModuleId::M0;
  std::size_t dim = 0;
  std::size_t hidden = 0;
  double temperature = 0.3;
  double lambda = 0.5;
  std::vector<double> params;

  ModuleHead() = default;
  ModuleHead(ModuleId id, std::size_t dim, std::size_t hidden);

  /// Xavier-uniform weights, zero biases.
  static ModuleHead initialized(ModuleId id, std::size_t dim, std::size_t hidden, std::mt19937_64& rng);

  static std::size_t parameter_count(std::size_t dim, std::size_t hidden) noexcept {
    return dim * hidden + hidden + hidden * 2 + 2;
  }

  std::span<double> proj_w() { return std::span(params).subspan(0, dim * hidden); }
  std::span<double> proj_b() { return std::span(params).subspan(dim * hidden, hidden); }
  std::span<double> cls_w() { return std::span(params).subspan(dim * hidden + hidden, hidden * 2); }
  std::span<double> cls_b() { return std::span(params).subspan(dim * hidden + 3 * hidden, 2); }
  std::span<const double> proj_w() const { return std::span(params).subspan(0, dim * hidden); }
  std::span<const double> proj_b() const { return std::span(params).subspan(dim * hidden, hidden); }
  std::span<const double> cls_w() const { return std::span(params).subspan(dim * hidden + hidden, hidden * 2); }
  std::span<const double> cls_b() const { return std::span(params).subspan(dim * hidden + 3 * hidden, 2); }

  /// Rounds every parameter to float32 (the checkpoint precision).
  void round_to_float32();

  friend bool operator==(const ModuleHead&, const ModuleHead&) = default;
};

struct HeadOutput {
  Vec activation;  // tanh pre-normalization
  Vec projected;   // unit norm, or zero when degenerate
  Logits logits{};
  bool degenerate = false;
};

HeadOutput forward(const ModuleHead& head, std::span<const double> x);
Logits head_logits(const ModuleHead& head, std::span<const double> x);

/// Accumulates into grad (same layout as head.params) the gradient of a
/// scalar loss given dL/dlogits and dL/dactivation for one input.
void backward(const ModuleHead& head, std::span<const double> x, const HeadOutput& out,
              const Logits& dlogits, std::span<const double> dactivation, std::span<double> grad);

/// Probability of the hate class.
double hate_probability(const Logits& z);
/// argmax; ties resolve to class 0.
int predict_label(const Logits& z);

// RVHD v1: "RVHD", u32 version, u8 module_id, u32 dim, u32 hidden, float32 params.
inline constexpr std::uint32_t kHeadFormatVersion = 1;

std::vector<std::uint8_t> encode_head(const ModuleHead& head);
ModuleHead decode_head(std::span<const std::uint8_t> bytes);
void write_head(const ModuleHead& head, const std::filesystem::path& path);
ModuleHead read_head(const std::filesystem::path& path);

}  // namespace rvhate
