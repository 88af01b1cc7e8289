#pragma once

// Declarative network description, shape arithmetic and parameter auditing.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pvfault/tensor.hpp"

namespace pvfault {

enum class LayerKind {
  input,
  conv,
  maxpool,
  flatten,
  fully_connected,
  relu,
  batchnorm,
  dropout,
  output,
};

std::string_view to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view text);

struct LayerSpec {
  LayerKind kind = LayerKind::input;
  // input
  std::size_t channels = 0, height = 0, width = 0;
  // conv
  std::size_t filters = 0, kernel_h = 0, kernel_w = 0, stride = 1, padding = 0;
  // fully_connected / output
  std::size_t neurons = 0;
  // dropout
  double rate = 0.0;
  /// Display label used in audits ("Convolution-01", "FC-02", ...).
  std::string label;

  static LayerSpec input(std::size_t channels, std::size_t height, std::size_t width);
  static LayerSpec conv(std::size_t filters, std::size_t kernel, std::size_t stride = 1,
                        std::size_t padding = 0);
  static LayerSpec maxpool();
  static LayerSpec flatten();
  static LayerSpec fully_connected(std::size_t neurons);
  static LayerSpec relu();
  static LayerSpec batchnorm();
  static LayerSpec dropout(double rate);
  static LayerSpec output(std::size_t neurons);

  bool operator==(const LayerSpec&) const = default;
};

struct ArchitectureConfig {
  std::string name;
  /// First layer is always the input layer.
  std::vector<LayerSpec> layers;

  Shape input_shape() const;
  std::size_t num_classes() const;

  bool operator==(const ArchitectureConfig&) const = default;
};

/// Smallest input side that survives both conv+pool stages.
inline constexpr std::size_t kMinInputSide = 16;

/// PV-faultNet: Conv 5@3x3 -> pool -> Conv 10@3x3 -> pool -> FC 100 -> ReLU
/// -> FC 50 -> ReLU -> Output 2, on a 3-channel square input.
ArchitectureConfig build_pvfaultnet(std::size_t input_side);

/// Inserts a batchnorm layer after each conv block (after its pooling layer).
ArchitectureConfig with_batchnorm(const ArchitectureConfig& config);
/// Inserts dropout before each hidden fully connected layer.
ArchitectureConfig with_dropout(const ArchitectureConfig& config, double rate = 0.25);

/// Output shape of every layer, index-aligned with config.layers. Throws
/// ShapeError naming the offending layer index when shapes do not compose.
std::vector<Shape> shape_propagate(const ArchitectureConfig& config);

/// Checks layer invariants and shape composition; throws ConfigError/ShapeError.
void validate(const ArchitectureConfig& config);

struct ParameterAuditRow {
  std::size_t index = 0;
  std::string label;
  LayerKind kind = LayerKind::input;
  Shape output;
  std::uint64_t parameters = 0;
};

struct ParameterAudit {
  std::vector<ParameterAuditRow> rows;
  std::uint64_t total = 0;
};

/// conv: (p*q*f + 1)*k; fully connected/output: (N_i + 1)*N_o;
/// batchnorm: 2*channels; everything else 0.
ParameterAudit count_parameters(const ArchitectureConfig& config);

/// One published per-layer figure checked against the computed value.
struct PublishedCheck {
  std::string label;
  std::string quantity;  // "parameters" or "output side"
  std::int64_t published = 0;
  std::int64_t computed = 0;
  bool matches() const { return published == computed; }
  std::int64_t delta() const { return computed - published; }
};

struct PublishedAudit {
  std::vector<PublishedCheck> checks;
  std::uint64_t total = 0;
  /// Total in millions rounded to two decimals, compared with 2.92.
  double total_millions = 0.0;
  bool total_matches = false;
  bool all_match() const;
  std::vector<PublishedCheck> mismatches() const;
};

/// Published per-layer parameter counts of the reference architecture.
struct PublishedLayerCount {
  std::string_view label;
  std::uint64_t parameters;
};
inline constexpr PublishedLayerCount kPublishedLayerCounts[] = {
    {"Convolution-01", 140}, {"Convolution-02", 460}, {"FC-01", 2916100},
    {"FC-02", 5050},         {"Output", 102},
};
/// Published spatial sides of the conv/pool stages for a 300-pixel input.
inline constexpr std::size_t kPublishedSides300[] = {298, 149, 147, 73};
inline constexpr double kPublishedTotalMillions = 2.92;

/// Compares a PV-faultNet build (any variant) against the published
/// per-layer counts; spatial sides are also checked for 300-pixel inputs.
/// Mismatches are reported, never thrown.
PublishedAudit audit_against_published(const ArchitectureConfig& config);

struct ReferenceModel {
  std::string_view name;
  double parameters_millions;
};
/// Parameter counts of comparison architectures, in millions.
inline constexpr ReferenceModel kReferenceModels[] = {
    {"ResNet50", 23.58}, {"VGG16", 138.35},     {"GoogleNet", 6.8},
    {"PV-CrackNet", 7.01}, {"PV-faultNet", 2.92},
};

/// Human-readable per-layer audit table.
std::string format_audit(const ArchitectureConfig& config, const ParameterAudit& audit);
std::string format_published_audit(const PublishedAudit& audit);
/// Comparison block listing kReferenceModels plus the computed total.
std::string format_reference_comparison(std::uint64_t computed_total);

/// Text form:
///   name = pvfaultnet-224
///   layer input channels=3 height=224 width=224
///   layer conv filters=5 kernel=3x3 stride=1 padding=0 label=Convolution-01
///   ...
/// '#' starts a comment; blank lines are ignored.
std::string format_architecture(const ArchitectureConfig& config);
ArchitectureConfig parse_architecture(std::string_view text);

/// FNV-1a 64 of the canonical text form.
std::uint64_t architecture_hash(const ArchitectureConfig& config);

}  // namespace pvfault
