#include "pvfault/metrics.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "pvfault/error.hpp"

namespace pvfault {

void ConfusionMatrix::update(std::size_t actual, std::size_t predicted) {
  if (actual > 1 || predicted > 1) {
    throw ConfigError("confusion matrix labels must be 0 or 1, got " + std::to_string(actual) +
                      "/" + std::to_string(predicted));
  }
  ++counts[actual][predicted];
}

std::uint64_t ConfusionMatrix::total() const {
  return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1];
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  for (std::size_t a = 0; a < 2; ++a) {
    for (std::size_t p = 0; p < 2; ++p) counts[a][p] += other.counts[a][p];
  }
  return *this;
}

ConfusionMatrix operator+(ConfusionMatrix a, const ConfusionMatrix& b) { return a += b; }

namespace {

Rate ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return {0.0, false};
  return {static_cast<double>(num) / static_cast<double>(den), true};
}

}  // namespace

Rate precision(const ConfusionMatrix& cm) { return ratio(cm.tp(), cm.tp() + cm.fp()); }
Rate recall(const ConfusionMatrix& cm) { return ratio(cm.tp(), cm.tp() + cm.fn()); }
Rate accuracy(const ConfusionMatrix& cm) { return ratio(cm.tp() + cm.tn(), cm.total()); }

double harmonic_mean(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

Rate f1(const ConfusionMatrix& cm) {
  const Rate p = precision(cm), r = recall(cm);
  if (!p.defined || !r.defined || p.value + r.value == 0.0) return {0.0, false};
  return {harmonic_mean(p.value, r.value), true};
}

double round2(double value) {
  // The small nudge keeps values such as 0.855 (stored as 0.85499999...)
  // rounding up as written.
  return std::floor(value * 100.0 + 0.5 + 1e-9) / 100.0;
}

Rate EpochReport::train_accuracy() const { return ratio(train_correct, train_total); }

namespace {

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", round2(v));
  return buf;
}

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string flags_of(const EpochReport& r) {
  std::string flags;
  auto add = [&](bool undefined, const char* name) {
    if (!undefined) return;
    if (!flags.empty()) flags += ',';
    flags += name;
  };
  add(r.valid.total() == 0, "empty");
  add(!r.precision().defined, "precision_undefined");
  add(!r.recall().defined, "recall_undefined");
  add(!r.f1().defined, "f1_undefined");
  add(!r.train_accuracy().defined, "no_train");
  return flags.empty() ? "none" : flags;
}

}  // namespace

std::string serialize_report(const EpochReport& r) {
  std::ostringstream out;
  out << "epoch=" << r.epoch << " train_loss=" << exact(r.train_loss)
      << " train_acc=" << fixed2(r.train_accuracy().value)
      << " valid_acc=" << fixed2(r.valid_accuracy().value)
      << " precision=" << fixed2(r.precision().value) << " recall=" << fixed2(r.recall().value)
      << " f1=" << fixed2(r.f1().value) << " tp=" << r.valid.tp() << " fn=" << r.valid.fn()
      << " fp=" << r.valid.fp() << " tn=" << r.valid.tn() << " train_correct=" << r.train_correct
      << " train_total=" << r.train_total << " seconds=" << exact(r.seconds)
      << " flags=" << flags_of(r);
  return out.str();
}

EpochReport parse_report(std::string_view line) {
  std::map<std::string, std::string, std::less<>> fields;
  std::istringstream in{std::string(line)};
  for (std::string token; in >> token;) {
    const std::size_t eq = token.find('=');
    if (eq == std::string::npos) throw IoError("malformed report field '" + token + "'");
    fields[token.substr(0, eq)] = token.substr(eq + 1);
  }
  auto get = [&](std::string_view key) -> const std::string& {
    auto it = fields.find(key);
    if (it == fields.end()) throw IoError("report line lacks '" + std::string(key) + "'");
    return it->second;
  };
  auto count = [&](std::string_view key) {
    const std::string& v = get(key);
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
      throw IoError("report field '" + std::string(key) + "' is not a count: " + v);
    }
    return out;
  };
  auto real = [&](std::string_view key) {
    const std::string& v = get(key);
    try {
      return std::stod(v);
    } catch (const std::exception&) {
      throw IoError("report field '" + std::string(key) + "' is not a number: " + v);
    }
  };

  EpochReport r;
  r.epoch = count("epoch");
  r.train_loss = real("train_loss");
  r.valid.counts[0][0] = count("tp");
  r.valid.counts[0][1] = count("fn");
  r.valid.counts[1][0] = count("fp");
  r.valid.counts[1][1] = count("tn");
  r.train_correct = count("train_correct");
  r.train_total = count("train_total");
  r.seconds = real("seconds");
  return r;
}

std::string summary_table(const EpochReport& r) {
  std::ostringstream out;
  char line[96];
  auto row = [&](const char* name, Rate rate) {
    if (rate.defined) {
      std::snprintf(line, sizeof line, "| %-18s | %8.2f%% |\n", name, round2(rate.value * 100.0));
    } else {
      std::snprintf(line, sizeof line, "| %-18s | %9s |\n", name, "n/a");
    }
    out << line;
  };
  std::snprintf(line, sizeof line, "Epoch %zu: Performance Metrics\n", r.epoch);
  out << line;
  out << "+--------------------+-----------+\n";
  std::snprintf(line, sizeof line, "| %-18s | %9s |\n", "Metric", "Value");
  out << line;
  out << "+--------------------+-----------+\n";
  row("Training Accuracy", r.train_accuracy());
  row("Valid Accuracy", r.valid_accuracy());
  row("Precision", r.precision());
  row("Recall", r.recall());
  row("F1-Score", r.f1());
  out << "+--------------------+-----------+\n";
  std::snprintf(line, sizeof line, "Confusion matrix (rows actual, cols predicted):\n");
  out << line;
  std::snprintf(line, sizeof line, "  defective: %6llu %6llu\n",
                static_cast<unsigned long long>(r.valid.tp()),
                static_cast<unsigned long long>(r.valid.fn()));
  out << line;
  std::snprintf(line, sizeof line, "  normal:    %6llu %6llu\n",
                static_cast<unsigned long long>(r.valid.fp()),
                static_cast<unsigned long long>(r.valid.tn()));
  out << line;
  return out.str();
}

std::string csv_row(const EpochReport& r) {
  std::ostringstream out;
  out << r.epoch << ',' << exact(r.train_loss) << ',' << exact(r.train_accuracy().value) << ','
      << exact(r.valid_accuracy().value) << ',' << exact(r.precision().value) << ','
      << exact(r.recall().value) << ',' << exact(r.f1().value) << ',' << r.valid.tp() << ','
      << r.valid.fn() << ',' << r.valid.fp() << ',' << r.valid.tn() << ',' << exact(r.seconds);
  return out.str();
}

}  // namespace pvfault
