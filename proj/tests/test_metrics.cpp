#include <cmath>

#include "doctest.h"
#include "pvfault/error.hpp"
#include "pvfault/metrics.hpp"

using namespace pvfault;

namespace {

ConfusionMatrix make_cm(std::uint64_t tp, std::uint64_t fn, std::uint64_t fp, std::uint64_t tn) {
  ConfusionMatrix cm;
  cm.counts = {{{tp, fn}, {fp, tn}}};
  return cm;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("update increments exactly one cell") {
  ConfusionMatrix cm;
  cm.update(0, 0);
  cm.update(0, 1);
  cm.update(1, 0);
  cm.update(1, 1);
  cm.update(1, 1);
  CHECK(cm.tp() == 1);
  CHECK(cm.fn() == 1);
  CHECK(cm.fp() == 1);
  CHECK(cm.tn() == 2);
  CHECK(cm.total() == 5);
  CHECK_THROWS(cm.update(2, 0));
}

TEST_CASE("rates from a 32/4/3/9 matrix") {
  const ConfusionMatrix cm = make_cm(32, 4, 3, 9);
  CHECK(round2(precision(cm).value) == doctest::Approx(0.91));
  CHECK(round2(recall(cm).value) == doctest::Approx(0.89));
  CHECK(round2(f1(cm).value) == doctest::Approx(0.90));
  CHECK(accuracy(cm).value == doctest::Approx(41.0 / 48.0));
}

TEST_CASE("degenerate all-defective predictor") {
  const ConfusionMatrix cm = make_cm(36, 0, 12, 0);
  CHECK(recall(cm).value == 1.0);
  CHECK(precision(cm).value == doctest::Approx(0.75));
  CHECK(accuracy(cm).value == doctest::Approx(0.75));
  CHECK(f1(cm).value == doctest::Approx(2 * 0.75 / 1.75));
}

TEST_CASE("zero denominators are flagged, not NaN") {
  const ConfusionMatrix none = make_cm(0, 0, 0, 10);
  CHECK_FALSE(recall(none).defined);
  CHECK(recall(none).value == 0.0);
  CHECK_FALSE(precision(none).defined);
  CHECK_FALSE(f1(none).defined);
  CHECK_FALSE(accuracy(ConfusionMatrix{}).defined);
  const ConfusionMatrix missed = make_cm(0, 5, 5, 0);
  CHECK(precision(missed).defined);
  CHECK(precision(missed).value == 0.0);
  CHECK_FALSE(f1(missed).defined);
  EpochReport r;
  CHECK(serialize_report(r).find("empty") != std::string::npos);
}

TEST_CASE("F1 fixtures from precision/recall pairs") {
  const std::pair<double, double> pr[] = {{75, 100}, {93, 78}, {89, 89}, {91, 89}};
  const double expected[] = {86, 85, 89, 90};
  for (std::size_t i = 0; i < 4; ++i) {
    const double f = 100.0 * harmonic_mean(pr[i].first / 100.0, pr[i].second / 100.0);
    CHECK(std::abs(f - expected[i]) <= 0.5);
  }
}

TEST_CASE("round2 rounds half up") {
  CHECK(round2(0.845) == doctest::Approx(0.85));
  CHECK(round2(0.8449) == doctest::Approx(0.84));
  CHECK(round2(1.0) == 1.0);
}

TEST_CASE("sharded matrices merge by cellwise sum") {
  const ConfusionMatrix a = make_cm(1, 2, 3, 4), b = make_cm(10, 20, 30, 40);
  CHECK(a + b == make_cm(11, 22, 33, 44));
}

TEST_CASE("epoch report round-trips through its text form") {
  EpochReport r;
  r.epoch = 50;
  r.train_loss = 0.012345678901234567;
  r.train_correct = 490;
  r.train_total = 490;
  r.valid = make_cm(32, 4, 3, 9);
  r.seconds = 12.5;
  const std::string line = serialize_report(r);
  CHECK(line.find("precision=0.91") != std::string::npos);
  CHECK(line.find("recall=0.89") != std::string::npos);
  CHECK(line.find("f1=0.90") != std::string::npos);
  CHECK(parse_report(line) == r);
  CHECK_THROWS(parse_report("epoch=x"));
  const std::string table = summary_table(r);
  CHECK(table.find("91.43%") != std::string::npos);
}

}  // TEST_SUITE
