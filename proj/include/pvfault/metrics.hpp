#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace pvfault {

/// Index of the positive class. Labels follow sorted class names, so
/// "defective" is 0 and "normal" is 1.
inline constexpr std::size_t kPositiveClass = 0;

/// 2x2 counts indexed [actual][predicted].
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, 2>, 2> counts{};

  /// Increments exactly one cell; labels must be 0 or 1.
  void update(std::size_t actual, std::size_t predicted);
  std::uint64_t total() const;

  std::uint64_t tp() const { return counts[0][0]; }
  std::uint64_t fn() const { return counts[0][1]; }
  std::uint64_t fp() const { return counts[1][0]; }
  std::uint64_t tn() const { return counts[1][1]; }

  /// Cellwise sum of per-shard matrices.
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix operator+(ConfusionMatrix a, const ConfusionMatrix& b);

/// A rate with a zero-denominator flag. Undefined rates report value 0.
struct Rate {
  double value = 0.0;
  bool defined = false;
};

Rate precision(const ConfusionMatrix& cm);
Rate recall(const ConfusionMatrix& cm);
/// Harmonic mean of precision and recall; undefined if either is or both are 0.
Rate f1(const ConfusionMatrix& cm);
Rate accuracy(const ConfusionMatrix& cm);
/// Harmonic mean of two rates (0 when both are 0).
double harmonic_mean(double p, double r);

/// Round half up to two decimals.
double round2(double value);

struct EpochReport {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::uint64_t train_correct = 0;
  std::uint64_t train_total = 0;
  /// Validation (or evaluated split) confusion matrix.
  ConfusionMatrix valid;
  double seconds = 0.0;

  Rate train_accuracy() const;
  Rate valid_accuracy() const { return accuracy(valid); }
  Rate precision() const { return pvfault::precision(valid); }
  Rate recall() const { return pvfault::recall(valid); }
  Rate f1() const { return pvfault::f1(valid); }

  bool operator==(const EpochReport&) const = default;
};

/// One line of space-separated key=value fields, e.g.
///   epoch=50 train_loss=0.0123 train_acc=1.00 valid_acc=0.92
///   precision=0.91 recall=0.89 f1=0.90 tp=32 fn=4 fp=3 tn=9
///   train_correct=490 train_total=490 seconds=12.5 flags=none
/// Rates are shown rounded half up to two decimals; counts and the loss are
/// exact so parse_report() recovers the report.
std::string serialize_report(const EpochReport& report);
EpochReport parse_report(std::string_view line);

/// Metric/value table with percentages to two decimals.
std::string summary_table(const EpochReport& report);

inline constexpr std::string_view kCsvHeader =
    "epoch,train_loss,train_accuracy,valid_accuracy,precision,recall,f1,tp,fn,fp,tn,seconds";
std::string csv_row(const EpochReport& report);

}  // namespace pvfault
