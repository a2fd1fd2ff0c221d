#include <gtest/gtest.h>

#include "asyncred/verify.hpp"

using namespace asyncred;

namespace {

VectorMap scale_by(double c) {
  return [c](std::span<const double> x) {
    Vector y(x.begin(), x.end());
    for (double& v : y) v *= c;
    return y;
  };
}

}  // namespace

TEST(SampledAudits, ScalarMapsByHand) {
  // T = c I: <dT, dx> - beta ||dT||^2 = (c - beta c^2) ||dx||^2
  EXPECT_NEAR(sampled_cocoercivity_margin(scale_by(0.5), 2.0, 10, 50, 1), 0.0, 1e-12);
  EXPECT_NEAR(sampled_cocoercivity_margin(scale_by(0.5), 1.0, 10, 50, 1), 0.25, 1e-12);
  EXPECT_NEAR(sampled_cocoercivity_margin(scale_by(-1.0), 1.0, 10, 50, 1), -2.0, 1e-12);
  EXPECT_NEAR(sampled_lipschitz_ratio(scale_by(-3.0), 10, 50, 1), 3.0, 1e-12);
}

TEST(Instances, CsShapes) {
  const Instance in = cs_instance({});
  EXPECT_EQ(in.red->dimension(), 256u);
  EXPECT_EQ(in.red->blocks(), 4u);
  EXPECT_EQ(in.red->fidelity().op().rows(), 4u * 256u);
  EXPECT_NEAR(in.tau, 0.1 * in.lipschitz, 1e-12 * in.lipschitz);
  EXPECT_THROW(cs_instance({.denoiser = "bm3d"}), std::invalid_argument);
}

TEST(Instances, CtShapes) {
  const Instance in = ct_instance({});
  EXPECT_EQ(in.red->fidelity().op().rows(), 12u * 23u);
  EXPECT_EQ(in.x0, Vector(256, 0.0));
}

TEST(Suites, UnknownNameThrows) {
  EXPECT_THROW(run_verify_suite("nope", {}), std::invalid_argument);
}

TEST(Suites, FormatCheckLine) {
  const Check c{"lemmas", "cocoercive", true, 0.5, 0.0, "margin"};
  const std::string line = format_check(c);
  EXPECT_EQ(line.rfind("PASS lemmas/cocoercive", 0), 0u);
  EXPECT_NE(line.find("observed=0.5"), std::string::npos);
  EXPECT_NE(format_check({"a", "b", false, 0, 0, ""}).find("FAIL"), std::string::npos);
}

class SuiteRun : public ::testing::TestWithParam<std::string> {};

TEST_P(SuiteRun, AllChecksPass) {
  VerifyOptions o;
  o.trials = 100;
  o.max_workers = 4;
  const auto checks = run_verify_suite(GetParam(), o);
  ASSERT_FALSE(checks.empty());
  for (const auto& c : checks) {
    EXPECT_EQ(c.suite, GetParam());
    EXPECT_TRUE(c.passed) << format_check(c);
  }
}

INSTANTIATE_TEST_SUITE_P(Each, SuiteRun,
                         ::testing::Values("operators", "denoisers", "lemmas", "async", "bounds"));

TEST(Suites, ListedNames) {
  const auto& names = verify_suites();
  for (const char* s : {"operators", "denoisers", "lemmas", "async", "bounds", "all"})
    EXPECT_NE(std::find(names.begin(), names.end(), s), names.end()) << s;
}
