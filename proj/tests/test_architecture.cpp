#include "doctest.h"
#include "pvfault/architecture.hpp"
#include "pvfault/error.hpp"

using namespace pvfault;

namespace {

std::uint64_t params_of(const ParameterAudit& audit, const std::string& label) {
  for (const auto& row : audit.rows)
    if (row.label == label) return row.parameters;
  FAIL("no layer " << label);
  return 0;
}

// Independent arithmetic: conv (p*q*f + 1)*k, dense (N_i + 1)*N_o.
std::uint64_t conv_params(std::uint64_t p, std::uint64_t q, std::uint64_t f, std::uint64_t k) {
  return (p * q * f + 1) * k;
}
std::uint64_t dense_params(std::uint64_t ni, std::uint64_t no) { return (ni + 1) * no; }

}  // namespace

TEST_SUITE("architecture") {

TEST_CASE("224 input reproduces the published per-layer counts") {
  const ParameterAudit audit = count_parameters(build_pvfaultnet(224));
  CHECK(params_of(audit, "Convolution-01") == conv_params(3, 3, 3, 5));
  CHECK(params_of(audit, "Convolution-02") == conv_params(3, 3, 5, 10));
  CHECK(params_of(audit, "FC-01") == dense_params(10 * 54 * 54, 100));
  CHECK(params_of(audit, "FC-02") == dense_params(100, 50));
  CHECK(params_of(audit, "Output") == dense_params(50, 2));
  CHECK(params_of(audit, "FC-01") == 2916100);
  CHECK(audit.total == 2921852);
  const PublishedAudit published = audit_against_published(build_pvfaultnet(224));
  CHECK(published.all_match());
}

TEST_CASE("300 input propagates 298/149/147/73 and flags FC-01") {
  const ArchitectureConfig arch = build_pvfaultnet(300);
  const std::vector<Shape> shapes = shape_propagate(arch);
  CHECK(shapes[1] == Shape{5, 298, 298});
  CHECK(shapes[2] == Shape{5, 149, 149});
  CHECK(shapes[3] == Shape{10, 147, 147});
  CHECK(shapes[4] == Shape{10, 73, 73});
  const PublishedAudit published = audit_against_published(arch);
  const auto bad = published.mismatches();
  REQUIRE(bad.size() == 1);
  CHECK(bad[0].label == "FC-01");
  CHECK(bad[0].computed == 5329100);
  CHECK(bad[0].delta() == 5329100 - 2916100);
  CHECK_FALSE(published.total_matches);
  CHECK(format_published_audit(published).find("MISMATCH") != std::string::npos);
}

TEST_CASE("reference comparison lists the comparison models") {
  const std::string text = format_reference_comparison(2921852);
  for (const char* s : {"23.58", "138.35", "6.80", "7.01", "2.92", "ResNet50", "VGG16"})
    CHECK(text.find(s) != std::string::npos);
}

TEST_CASE("variants add batchnorm after each pool and dropout before hidden dense layers") {
  const ArchitectureConfig bn = with_batchnorm(build_pvfaultnet(224));
  const ParameterAudit audit = count_parameters(bn);
  CHECK(audit.total == 2921852 + 2 * 5 + 2 * 10);
  std::vector<LayerKind> kinds;
  for (const auto& l : bn.layers) kinds.push_back(l.kind);
  CHECK(kinds[3] == LayerKind::batchnorm);
  CHECK(kinds[2] == LayerKind::maxpool);
  const ArchitectureConfig both = with_dropout(bn, 0.25);
  CHECK(count_parameters(both).total == audit.total);
  std::size_t drops = 0;
  for (std::size_t i = 0; i < both.layers.size(); ++i) {
    if (both.layers[i].kind == LayerKind::dropout) {
      ++drops;
      CHECK(both.layers[i + 1].kind == LayerKind::fully_connected);
    }
  }
  CHECK(drops == 2);
  CHECK_THROWS_AS(with_dropout(build_pvfaultnet(224), 1.0), ConfigError);
}

TEST_CASE("incompatible layers are diagnosed by index") {
  CHECK_THROWS_AS(build_pvfaultnet(8), Error);
  ArchitectureConfig arch = build_pvfaultnet(16);
  // Drop the flatten layer: the dense layer then sees a rank-3 input.
  arch.layers.erase(arch.layers.begin() + 5);
  try {
    shape_propagate(arch);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("layer 5") != std::string::npos);
  }
}

TEST_CASE("text form round-trips and hashes distinguish inputs") {
  for (const ArchitectureConfig& a :
       {build_pvfaultnet(224), with_dropout(with_batchnorm(build_pvfaultnet(300)))}) {
    const ArchitectureConfig b = parse_architecture(format_architecture(a));
    CHECK(b == a);
    CHECK(architecture_hash(b) == architecture_hash(a));
  }
  CHECK(architecture_hash(build_pvfaultnet(224)) != architecture_hash(build_pvfaultnet(300)));
  CHECK_THROWS_AS(parse_architecture("layer warp x=1\n"), ConfigError);
}

}  // TEST_SUITE
