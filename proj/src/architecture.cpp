#include "pvfault/architecture.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "pvfault/kernels.hpp"

namespace pvfault {

namespace {

constexpr std::pair<LayerKind, std::string_view> kKindNames[] = {
    {LayerKind::input, "input"},
    {LayerKind::conv, "conv"},
    {LayerKind::maxpool, "maxpool"},
    {LayerKind::flatten, "flatten"},
    {LayerKind::fully_connected, "fc"},
    {LayerKind::relu, "relu"},
    {LayerKind::batchnorm, "batchnorm"},
    {LayerKind::dropout, "dropout"},
    {LayerKind::output, "output"},
};

std::string with_commas(std::uint64_t n) {
  std::string digits = std::to_string(n);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return out;
}

std::string layer_error(std::size_t index, const LayerSpec& layer, const std::string& what) {
  return "layer " + std::to_string(index) + " (" + std::string(to_string(layer.kind)) +
         (layer.label.empty() ? "" : " " + layer.label) + "): " + what;
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "?";
}

LayerKind parse_layer_kind(std::string_view text) {
  for (const auto& [k, name] : kKindNames) {
    if (name == text) return k;
  }
  if (text == "fully_connected") return LayerKind::fully_connected;
  throw ConfigError("unknown layer kind '" + std::string(text) + "'");
}

LayerSpec LayerSpec::input(std::size_t channels, std::size_t height, std::size_t width) {
  LayerSpec s;
  s.kind = LayerKind::input;
  s.channels = channels;
  s.height = height;
  s.width = width;
  s.label = "Input";
  return s;
}

LayerSpec LayerSpec::conv(std::size_t filters, std::size_t kernel, std::size_t stride,
                          std::size_t padding) {
  LayerSpec s;
  s.kind = LayerKind::conv;
  s.filters = filters;
  s.kernel_h = s.kernel_w = kernel;
  s.stride = stride;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::maxpool() {
  LayerSpec s;
  s.kind = LayerKind::maxpool;
  s.stride = 2;
  s.label = "Max-pool";
  return s;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec s;
  s.kind = LayerKind::flatten;
  s.label = "Flatten";
  return s;
}

LayerSpec LayerSpec::fully_connected(std::size_t neurons) {
  LayerSpec s;
  s.kind = LayerKind::fully_connected;
  s.neurons = neurons;
  return s;
}

LayerSpec LayerSpec::relu() {
  LayerSpec s;
  s.kind = LayerKind::relu;
  s.label = "ReLU";
  return s;
}

LayerSpec LayerSpec::batchnorm() {
  LayerSpec s;
  s.kind = LayerKind::batchnorm;
  s.label = "BatchNorm";
  return s;
}

LayerSpec LayerSpec::dropout(double rate) {
  LayerSpec s;
  s.kind = LayerKind::dropout;
  s.rate = rate;
  s.label = "Dropout";
  return s;
}

LayerSpec LayerSpec::output(std::size_t neurons) {
  LayerSpec s;
  s.kind = LayerKind::output;
  s.neurons = neurons;
  s.label = "Output";
  return s;
}

Shape ArchitectureConfig::input_shape() const {
  if (layers.empty() || layers.front().kind != LayerKind::input) {
    throw ConfigError("architecture '" + name + "' has no input layer");
  }
  const LayerSpec& in = layers.front();
  return {in.channels, in.height, in.width};
}

std::size_t ArchitectureConfig::num_classes() const {
  if (layers.empty() || layers.back().kind != LayerKind::output) {
    throw ConfigError("architecture '" + name + "' does not end in an output layer");
  }
  return layers.back().neurons;
}

ArchitectureConfig build_pvfaultnet(std::size_t input_side) {
  if (input_side < kMinInputSide) {
    throw ConfigError("input side " + std::to_string(input_side) +
                      " is too small for two conv+pool stages (minimum " +
                      std::to_string(kMinInputSide) + ")");
  }
  ArchitectureConfig config;
  config.name = "pvfaultnet-" + std::to_string(input_side);

  LayerSpec conv1 = LayerSpec::conv(5, 3);
  conv1.label = "Convolution-01";
  LayerSpec conv2 = LayerSpec::conv(10, 3);
  conv2.label = "Convolution-02";
  LayerSpec fc1 = LayerSpec::fully_connected(100);
  fc1.label = "FC-01";
  LayerSpec fc2 = LayerSpec::fully_connected(50);
  fc2.label = "FC-02";

  config.layers = {
      LayerSpec::input(3, input_side, input_side),
      conv1,
      LayerSpec::maxpool(),
      conv2,
      LayerSpec::maxpool(),
      LayerSpec::flatten(),
      fc1,
      LayerSpec::relu(),
      fc2,
      LayerSpec::relu(),
      LayerSpec::output(2),
  };
  validate(config);
  return config;
}

ArchitectureConfig with_batchnorm(const ArchitectureConfig& config) {
  ArchitectureConfig out;
  out.name = config.name + "+bn";
  bool in_conv_block = false;
  for (const LayerSpec& layer : config.layers) {
    out.layers.push_back(layer);
    if (layer.kind == LayerKind::conv) in_conv_block = true;
    if (layer.kind == LayerKind::maxpool && in_conv_block) {
      out.layers.push_back(LayerSpec::batchnorm());
      in_conv_block = false;
    }
  }
  validate(out);
  return out;
}

ArchitectureConfig with_dropout(const ArchitectureConfig& config, double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate " + std::to_string(rate) + " outside [0, 1)");
  }
  ArchitectureConfig out;
  char suffix[32];
  std::snprintf(suffix, sizeof suffix, "+dropout%g", rate * 100.0);
  out.name = config.name + suffix;
  for (const LayerSpec& layer : config.layers) {
    if (layer.kind == LayerKind::fully_connected) out.layers.push_back(LayerSpec::dropout(rate));
    out.layers.push_back(layer);
  }
  validate(out);
  return out;
}

std::vector<Shape> shape_propagate(const ArchitectureConfig& config) {
  if (config.layers.empty()) throw ConfigError("architecture has no layers");
  std::vector<Shape> shapes;
  shapes.reserve(config.layers.size());
  Shape current;
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    const LayerSpec& layer = config.layers[i];
    if ((i == 0) != (layer.kind == LayerKind::input)) {
      throw ShapeError(layer_error(i, layer, "the input layer must be first and unique"));
    }
    try {
      switch (layer.kind) {
        case LayerKind::input:
          if (layer.channels == 0 || layer.height == 0 || layer.width == 0) {
            throw ShapeError("input extents must be positive");
          }
          current = {layer.channels, layer.height, layer.width};
          break;
        case LayerKind::conv:
          if (current.size() != 3) {
            throw ShapeError("conv needs a C x H x W input, got " + shape_string(current));
          }
          current = {layer.filters,
                     window_output_extent(current[1], layer.kernel_h, layer.stride, layer.padding),
                     window_output_extent(current[2], layer.kernel_w, layer.stride, layer.padding)};
          break;
        case LayerKind::maxpool:
          if (current.size() != 3) {
            throw ShapeError("maxpool needs a C x H x W input, got " + shape_string(current));
          }
          current = {current[0], window_output_extent(current[1], 2, 2, 0),
                     window_output_extent(current[2], 2, 2, 0)};
          break;
        case LayerKind::flatten:
          current = {shape_size(current)};
          break;
        case LayerKind::fully_connected:
        case LayerKind::output:
          if (current.size() != 1) {
            throw ShapeError("fully connected layer needs a flat input, got " +
                             shape_string(current));
          }
          current = {layer.neurons};
          break;
        case LayerKind::relu:
        case LayerKind::batchnorm:
        case LayerKind::dropout:
          break;
      }
    } catch (const ShapeError& e) {
      const std::string what = e.what();
      if (what.rfind("layer ", 0) == 0) throw;
      throw ShapeError(layer_error(i, layer, what));
    }
    for (std::size_t e : current) {
      if (e == 0) throw ShapeError(layer_error(i, layer, "non-positive extent in " +
                                                             shape_string(current)));
    }
    shapes.push_back(current);
  }
  return shapes;
}

void validate(const ArchitectureConfig& config) {
  std::size_t outputs = 0;
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    const LayerSpec& layer = config.layers[i];
    switch (layer.kind) {
      case LayerKind::conv:
        if (layer.filters == 0) throw ConfigError(layer_error(i, layer, "zero filters"));
        if (layer.kernel_h % 2 == 0 || layer.kernel_w % 2 == 0) {
          throw ConfigError(layer_error(i, layer, "kernel extents must be odd"));
        }
        if (layer.stride == 0) throw ConfigError(layer_error(i, layer, "stride must be positive"));
        break;
      case LayerKind::fully_connected:
        if (layer.neurons == 0) throw ConfigError(layer_error(i, layer, "zero neurons"));
        break;
      case LayerKind::output:
        if (layer.neurons == 0) throw ConfigError(layer_error(i, layer, "zero neurons"));
        if (i + 1 != config.layers.size()) {
          throw ConfigError(layer_error(i, layer, "the output layer must be last"));
        }
        ++outputs;
        break;
      case LayerKind::dropout:
        if (!(layer.rate >= 0.0 && layer.rate < 1.0)) {
          throw ConfigError(layer_error(i, layer, "dropout rate outside [0, 1)"));
        }
        break;
      default:
        break;
    }
  }
  if (outputs != 1) throw ConfigError("architecture must have exactly one output layer");
  shape_propagate(config);
}

ParameterAudit count_parameters(const ArchitectureConfig& config) {
  const std::vector<Shape> shapes = shape_propagate(config);
  ParameterAudit audit;
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    const LayerSpec& layer = config.layers[i];
    const Shape in = i == 0 ? shapes[0] : shapes[i - 1];
    std::uint64_t count = 0;
    switch (layer.kind) {
      case LayerKind::conv:
        count = (static_cast<std::uint64_t>(layer.kernel_h) * layer.kernel_w * in[0] + 1) *
                layer.filters;
        break;
      case LayerKind::fully_connected:
      case LayerKind::output:
        count = (static_cast<std::uint64_t>(in[0]) + 1) * layer.neurons;
        break;
      case LayerKind::batchnorm:
        count = 2 * static_cast<std::uint64_t>(in[0]);
        break;
      default:
        break;
    }
    audit.rows.push_back({i, layer.label, layer.kind, shapes[i], count});
    audit.total += count;
  }
  return audit;
}

bool PublishedAudit::all_match() const {
  if (!total_matches) return false;
  for (const PublishedCheck& c : checks) {
    if (!c.matches()) return false;
  }
  return true;
}

std::vector<PublishedCheck> PublishedAudit::mismatches() const {
  std::vector<PublishedCheck> out;
  for (const PublishedCheck& c : checks) {
    if (!c.matches()) out.push_back(c);
  }
  return out;
}

PublishedAudit audit_against_published(const ArchitectureConfig& config) {
  const ParameterAudit counts = count_parameters(config);
  PublishedAudit report;
  report.total = counts.total;
  report.total_millions = std::round(static_cast<double>(counts.total) / 1e4) / 100.0;
  report.total_matches = std::abs(report.total_millions - kPublishedTotalMillions) < 1e-9;

  std::size_t next = 0;
  for (const ParameterAuditRow& row : counts.rows) {
    const bool learnable = row.kind == LayerKind::conv ||
                           row.kind == LayerKind::fully_connected ||
                           row.kind == LayerKind::output;
    if (!learnable || next >= std::size(kPublishedLayerCounts)) continue;
    const PublishedLayerCount& pub = kPublishedLayerCounts[next++];
    report.checks.push_back({std::string(pub.label), "parameters",
                             static_cast<std::int64_t>(pub.parameters),
                             static_cast<std::int64_t>(row.parameters)});
  }

  const Shape in = config.input_shape();
  if (in[1] == 300 && in[2] == 300) {
    std::size_t side = 0;
    for (const ParameterAuditRow& row : counts.rows) {
      if (row.kind != LayerKind::conv && row.kind != LayerKind::maxpool) continue;
      if (side >= std::size(kPublishedSides300)) break;
      const std::string label = row.label.empty() ? std::string(to_string(row.kind)) : row.label;
      report.checks.push_back({label, "output side",
                               static_cast<std::int64_t>(kPublishedSides300[side++]),
                               static_cast<std::int64_t>(row.output[1])});
    }
  }
  return report;
}

std::string format_audit(const ArchitectureConfig& config, const ParameterAudit& audit) {
  std::ostringstream out;
  char line[160];
  out << "Architecture: " << config.name << "\n";
  std::snprintf(line, sizeof line, "%-16s %-18s %22s\n", "Layer", "Output Dimensions",
                "Learnable parameters");
  out << line;
  for (const ParameterAuditRow& row : audit.rows) {
    std::string dims;
    if (row.output.size() == 3) {
      dims = std::to_string(row.output[0]) + "," + std::to_string(row.output[1]) + "x" +
             std::to_string(row.output[2]);
    } else if (row.kind == LayerKind::fully_connected || row.kind == LayerKind::output) {
      dims = std::to_string(row.output[0]) + " neurons";
    } else if (row.kind == LayerKind::flatten) {
      dims = std::to_string(row.output[0]);
    } else {
      dims = "---";
    }
    const bool learnable = row.kind == LayerKind::conv ||
                           row.kind == LayerKind::fully_connected ||
                           row.kind == LayerKind::output || row.kind == LayerKind::batchnorm;
    const std::string label = row.label.empty() ? std::string(to_string(row.kind)) : row.label;
    std::snprintf(line, sizeof line, "%-16s %-18s %22s\n", label.c_str(), dims.c_str(),
                  learnable ? with_commas(row.parameters).c_str() : "---");
    out << line;
  }
  std::snprintf(line, sizeof line, "%-35s %22s (%.2f million)\n", "Total learnable parameters",
                with_commas(audit.total).c_str(), static_cast<double>(audit.total) / 1e6);
  out << line;
  return out.str();
}

std::string format_published_audit(const PublishedAudit& audit) {
  std::ostringstream out;
  char line[200];
  for (const PublishedCheck& c : audit.checks) {
    if (c.matches()) {
      std::snprintf(line, sizeof line, "  ok        %-16s %-12s %s\n", c.label.c_str(),
                    c.quantity.c_str(), with_commas(static_cast<std::uint64_t>(c.computed)).c_str());
    } else {
      std::snprintf(line, sizeof line,
                    "  MISMATCH  %-16s %-12s computed %s, published %s (delta %+lld)\n",
                    c.label.c_str(), c.quantity.c_str(),
                    with_commas(static_cast<std::uint64_t>(c.computed)).c_str(),
                    with_commas(static_cast<std::uint64_t>(c.published)).c_str(),
                    static_cast<long long>(c.delta()));
    }
    out << line;
  }
  std::snprintf(line, sizeof line, "  %-9s %-29s %.2f million (published %.2f)\n",
                audit.total_matches ? "ok" : "MISMATCH", "total", audit.total_millions,
                kPublishedTotalMillions);
  out << line;
  return out.str();
}

std::string format_reference_comparison(std::uint64_t computed_total) {
  std::ostringstream out;
  char line[120];
  std::snprintf(line, sizeof line, "%-14s %s\n", "Architecture", "Parameters (million)");
  out << line;
  for (const ReferenceModel& m : kReferenceModels) {
    std::snprintf(line, sizeof line, "%-14s %.2f\n", std::string(m.name).c_str(),
                  m.parameters_millions);
    out << line;
  }
  std::snprintf(line, sizeof line, "%-14s %.2f (this build, %s)\n", "computed",
                static_cast<double>(computed_total) / 1e6, with_commas(computed_total).c_str());
  out << line;
  return out.str();
}

// ---------------------------------------------------------------------------
// Text form

std::string format_architecture(const ArchitectureConfig& config) {
  std::ostringstream out;
  out << "name = " << config.name << "\n";
  for (const LayerSpec& l : config.layers) {
    out << "layer " << to_string(l.kind);
    switch (l.kind) {
      case LayerKind::input:
        out << " channels=" << l.channels << " height=" << l.height << " width=" << l.width;
        break;
      case LayerKind::conv:
        out << " filters=" << l.filters << " kernel=" << l.kernel_h << "x" << l.kernel_w
            << " stride=" << l.stride << " padding=" << l.padding;
        break;
      case LayerKind::fully_connected:
      case LayerKind::output:
        out << " neurons=" << l.neurons;
        break;
      case LayerKind::dropout: {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", l.rate);
        out << " rate=" << buf;
        break;
      }
      default:
        break;
    }
    if (!l.label.empty()) out << " label=" << l.label;
    out << "\n";
  }
  return out.str();
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::size_t parse_count(std::string_view value, std::size_t line_no) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("line " + std::to_string(line_no) + ": expected an integer, got '" +
                      std::string(value) + "'");
  }
  return out;
}

}  // namespace

ArchitectureConfig parse_architecture(std::string_view text) {
  ArchitectureConfig config;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const std::size_t hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;

    if (line.rfind("layer ", 0) != 0) {
      const std::size_t eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
      }
      const std::string_view key = trim(line.substr(0, eq));
      const std::string_view value = trim(line.substr(eq + 1));
      if (key == "name") {
        config.name = std::string(value);
      } else {
        throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" +
                          std::string(key) + "'");
      }
      continue;
    }

    std::istringstream fields{std::string(line.substr(6))};
    std::string kind_text;
    fields >> kind_text;
    LayerSpec layer;
    layer.kind = parse_layer_kind(kind_text);
    // Defaults match the factory functions.
    switch (layer.kind) {
      case LayerKind::input: layer = LayerSpec::input(0, 0, 0); break;
      case LayerKind::maxpool: layer = LayerSpec::maxpool(); break;
      case LayerKind::flatten: layer = LayerSpec::flatten(); break;
      case LayerKind::relu: layer = LayerSpec::relu(); break;
      case LayerKind::batchnorm: layer = LayerSpec::batchnorm(); break;
      case LayerKind::dropout: layer = LayerSpec::dropout(0.0); break;
      case LayerKind::output: layer = LayerSpec::output(0); break;
      default: break;
    }
    std::string field;
    while (fields >> field) {
      const std::size_t eq = field.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("line " + std::to_string(line_no) + ": expected key=value, got '" +
                          field + "'");
      }
      const std::string key = field.substr(0, eq);
      const std::string value = field.substr(eq + 1);
      if (key == "channels") layer.channels = parse_count(value, line_no);
      else if (key == "height") layer.height = parse_count(value, line_no);
      else if (key == "width") layer.width = parse_count(value, line_no);
      else if (key == "filters") layer.filters = parse_count(value, line_no);
      else if (key == "stride") layer.stride = parse_count(value, line_no);
      else if (key == "padding") layer.padding = parse_count(value, line_no);
      else if (key == "neurons") layer.neurons = parse_count(value, line_no);
      else if (key == "label") layer.label = value;
      else if (key == "kernel") {
        const std::size_t x = value.find('x');
        if (x == std::string::npos) {
          layer.kernel_h = layer.kernel_w = parse_count(value, line_no);
        } else {
          layer.kernel_h = parse_count(std::string_view(value).substr(0, x), line_no);
          layer.kernel_w = parse_count(std::string_view(value).substr(x + 1), line_no);
        }
      } else if (key == "rate") {
        try {
          std::size_t used = 0;
          layer.rate = std::stod(value, &used);
          if (used != value.size()) throw std::invalid_argument(value);
        } catch (const std::exception&) {
          throw ConfigError("line " + std::to_string(line_no) + ": bad rate '" + value + "'");
        }
      } else {
        throw ConfigError("line " + std::to_string(line_no) + ": unknown layer field '" + key +
                          "'");
      }
    }
    config.layers.push_back(std::move(layer));
  }
  validate(config);
  return config;
}

std::uint64_t architecture_hash(const ArchitectureConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : format_architecture(config)) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace pvfault
