#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "asyncred/experiments.hpp"
#include "json.hpp"

using namespace asyncred;
using nlohmann::json;

namespace {

// Modified Shepp-Logan table: value, semi-axes, center, rotation (degrees).
struct Ellipse {
  double v, a, b, x, y, deg;
};
constexpr Ellipse kTable[] = {
    {1.0, .69, .92, 0, 0, 0},          {-.8, .6624, .874, 0, -.0184, 0},
    {-.2, .11, .31, .22, 0, -18},      {-.2, .16, .41, -.22, 0, 18},
    {.1, .21, .25, 0, .35, 0},         {.1, .046, .046, 0, .1, 0},
    {.1, .046, .046, 0, -.1, 0},       {.1, .046, .023, -.08, -.605, 0},
    {.1, .023, .023, 0, -.606, 0},     {.1, .023, .046, .06, -.605, 0},
};

double phantom_at(double x, double y) {
  double s = 0;
  for (const auto& e : kTable) {
    const double t = e.deg * std::numbers::pi / 180;
    const double u = (x - e.x) * std::cos(t) + (y - e.y) * std::sin(t);
    const double w = -(x - e.x) * std::sin(t) + (y - e.y) * std::cos(t);
    if (u * u / (e.a * e.a) + w * w / (e.b * e.b) <= 1) s += e.v;
  }
  return std::clamp(s, 0.0, 1.0);
}

// Mean intensity over the square by q x q supersampling per pixel.
double supersampled_sum(std::size_t n, std::size_t q) {
  double total = 0;
  const double cells = static_cast<double>(n * q);
  for (std::size_t i = 0; i < n * q; ++i)
    for (std::size_t j = 0; j < n * q; ++j)
      total += phantom_at(-1 + 2 * (j + 0.5) / cells, 1 - 2 * (i + 0.5) / cells);
  return total / double(q * q);
}

ExperimentSpec desk_cs() {
  ExperimentSpec s;
  s.image_size = 64;
  s.block_height = 32;
  s.block_width = 32;
  s.compression_ratio = 0.7;
  s.denoiser = "convolution";
  s.tau_relative = 0.05;
  s.max_outer_iterations = 150;
  s.record_wall_clock = false;
  return s;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("asyncred_test_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace

TEST(Phantom, CornersDarkCenterGray) {
  const Image img = shepp_logan(64);
  ASSERT_EQ(img.samples.size(), 64u * 64u);
  EXPECT_EQ(img.samples[0], 0.0);
  EXPECT_EQ(img.samples[63], 0.0);
  EXPECT_EQ(img.samples[64 * 63], 0.0);
  EXPECT_EQ(img.samples[64 * 64 - 1], 0.0);
  EXPECT_NEAR(img.samples[32 * 64 + 32], 0.2, 1e-12);
  for (double v : img.samples) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Phantom, MassMatchesSupersampledOracle) {
  const Image img = shepp_logan(128);
  double sum = 0;
  for (double v : img.samples) sum += v;
  const double want = supersampled_sum(128, 4);
  EXPECT_NEAR(sum, want, 0.01 * want);
}

TEST(Phantom, TooSmallRejected) { EXPECT_THROW(shepp_logan(8), std::invalid_argument); }

TEST(Pgm, RoundTripWithinQuantization) {
  const Image img = shepp_logan(32);
  const Image back = decode_pgm(encode_pgm(img));
  EXPECT_EQ(back.geometry.height, 32u);
  EXPECT_EQ(back.geometry.width, 32u);
  for (std::size_t k = 0; k < img.samples.size(); ++k)
    EXPECT_LE(std::abs(back.samples[k] - img.samples[k]), 0.5 / 65535 + 1e-15);
}

TEST(Pgm, HeaderAndBlackImage) {
  const Image black({2, 3}, Vector(6, 0.0));
  const std::string bytes = encode_pgm(black);
  const std::string header = "P5\n3 2\n65535\n";
  EXPECT_EQ(bytes.substr(0, header.size()), header);
  EXPECT_EQ(bytes.size(), header.size() + 12);
  EXPECT_EQ(decode_pgm(bytes).samples, Vector(6, 0.0));
}

TEST(Pgm, EightBitAndComments) {
  const std::string bytes = std::string("P5\n# note\n2 1\n255\n") + char(0) + char(255);
  const Image img = decode_pgm(bytes);
  EXPECT_EQ(img.samples, (Vector{0.0, 1.0}));
}

TEST(Pgm, RejectsOtherFormatsAndTruncation) {
  EXPECT_THROW(decode_pgm("P3\n1 1\n255\n0 0 0\n"), PgmError);
  EXPECT_THROW(decode_pgm("P2\n1 1\n255\n0\n"), PgmError);
  EXPECT_THROW(decode_pgm("P5\n2 2\n65535\n\x01\x02"), PgmError);
  EXPECT_THROW(decode_pgm("P5\n2 2\n0\n"), PgmError);
  try {
    decode_pgm("P3\n");
  } catch (const PgmError& e) {
    EXPECT_LE(e.offset(), 2u);
  }
}

TEST(Pgm, FileRoundTrip) {
  const auto dir = scratch_dir("pgm");
  const Image img = shepp_logan(16);
  save_pgm(img, dir / "p.pgm");
  EXPECT_EQ(encode_pgm(load_pgm(dir / "p.pgm")), encode_pgm(img));
}

TEST(Spec, DefaultsRoundTrip) {
  const ExperimentSpec s;
  const ExperimentSpec back = parse_spec(spec_to_json(s));
  EXPECT_EQ(spec_to_json(back), spec_to_json(s));
  const json j = json::parse(spec_to_json(s));
  EXPECT_EQ(j["gamma"], "auto");
  EXPECT_TRUE(j["tau_relative"].is_null());
}

TEST(Spec, ExplicitValuesParsed) {
  const ExperimentSpec s = parse_spec(R"({"task": "ct", "image_size": 32, "block_height": 16,
      "block_width": 16, "angles": 20, "detectors": 45, "gamma": 0.001, "input_snr_db": null,
      "solver": "async-bg", "workers": 3, "delay_mode": "enforce", "lambda": 4})");
  EXPECT_EQ(s.task, "ct");
  ASSERT_TRUE(s.gamma.has_value());
  EXPECT_EQ(*s.gamma, 0.001);
  EXPECT_FALSE(s.input_snr_db.has_value());
  EXPECT_EQ(s.lambda, 4u);
  EXPECT_EQ(s.block_width, 16u);
}

TEST(Spec, UnknownKeyAndWrongTypeRejected) {
  EXPECT_THROW(parse_spec(R"({"tua": 1.0})"), SpecError);
  EXPECT_THROW(parse_spec(R"({"workers": "four"})"), SpecError);
  EXPECT_THROW(parse_spec(R"({"gamma": "fast"})"), SpecError);
  EXPECT_THROW(parse_spec("[1, 2]"), SpecError);
  EXPECT_THROW(parse_spec("{not json"), SpecError);
}

TEST(Spec, ValidationCollectsEveryProblem) {
  ExperimentSpec s;
  s.block_height = 30;  // does not divide 64
  s.solver = "newton";
  s.tau = -1;
  try {
    s.validate();
    FAIL();
  } catch (const SpecError& e) {
    EXPECT_GE(e.problems().size(), 3u);
  }
}

TEST(Spec, EnforceNeedsAsyncSolver) {
  ExperimentSpec s;
  s.delay_mode = "enforce";
  s.solver = "bc";
  EXPECT_THROW(s.validate(), SpecError);
  s.solver = "async-bg";
  EXPECT_NO_THROW(s.validate());
}

TEST(Spec, SchemaListsEveryField) {
  const json schema = json::parse(spec_schema_json());
  EXPECT_EQ(schema["additionalProperties"], false);
  const json defaults = json::parse(spec_to_json(ExperimentSpec{}));
  EXPECT_EQ(schema["properties"].size(), defaults.size());
  for (const auto& [key, value] : defaults.items()) {
    ASSERT_TRUE(schema["properties"].contains(key)) << key;
    EXPECT_EQ(schema["properties"][key]["default"], value) << key;
  }
}

TEST(Problem, CsShapesAndStep) {
  const Problem p = build_problem(desk_cs());
  EXPECT_EQ(p.red->blocks(), 4u);
  EXPECT_EQ(p.op->rows(), 4u * 716u);  // floor(0.7 * 1024)
  EXPECT_NEAR(p.tau, 0.05 * p.lipschitz, 1e-12 * p.lipschitz);
  EXPECT_NEAR(p.gamma, 1.0 / (p.lipschitz + 2 * p.tau), 1e-15);
  EXPECT_EQ(p.grid.to_row_major(p.x_true), p.truth.samples);
}

TEST(Problem, CtShapes) {
  ExperimentSpec s = desk_cs();
  s.task = "ct";
  s.angles = 10;
  s.detectors = 95;
  s.measurement_blocks = 5;
  const Problem p = build_problem(s);
  EXPECT_EQ(p.op->rows(), 950u);
  EXPECT_EQ(p.fidelity->component_count(), 5u);
}

TEST(Problem, SeedControlsOperator) {
  ExperimentSpec s = desk_cs();
  const Problem a = build_problem(s);
  const Problem b = build_problem(s);
  s.seed = 2;
  const Problem c = build_problem(s);
  EXPECT_EQ(a.fidelity->measurements(), b.fidelity->measurements());
  EXPECT_NE(a.fidelity->measurements(), c.fidelity->measurements());
}

TEST(ScaledStart, MinimizesAlongAdjointDirection) {
  const DenseOperator a = DenseOperator::gaussian(12, 5, 4);
  Rng rng(1);
  const Vector y = gaussian_vector(rng, 12);
  const Vector x = scaled_adjoint_start(a, y);
  const auto resid = [&](double c) {
    Vector z = x;
    for (double& v : z) v *= c;
    return distance(a.apply(z), y);
  };
  EXPECT_LE(resid(1.0), resid(1.01));
  EXPECT_LE(resid(1.0), resid(0.99));
}

TEST(Run, DeskCsImprovesSnr) {
  const ExperimentOutcome out = run_experiment(desk_cs());
  const auto& rep = out.report;
  EXPECT_GT(rep.final_snr_db, rep.initial_snr_db + 1.0);
  EXPECT_LT(rep.final_norm_res, 1.0);
  EXPECT_FALSE(rep.r0_estimated);
  EXPECT_EQ(rep.outer_iterations, 150u);
  EXPECT_EQ(rep.updates, 600u);
  EXPECT_LE(rep.min_res_sq, rep.bound_bg);
  EXPECT_EQ(out.trace.records.size(), 151u);
}

TEST(Run, ReplayUsesSchedule) {
  ExperimentSpec s = desk_cs();
  s.max_outer_iterations = 10;
  const auto sched = random_schedule(4, 40, 3, 9);
  const ExperimentOutcome out = run_experiment(s, sched);
  EXPECT_EQ(out.report.lambda, 3.0);
  EXPECT_EQ(out.trace.records.size(), 11u);
}

TEST(Run, ArtifactsWritten) {
  ExperimentSpec s = desk_cs();
  s.max_outer_iterations = 5;
  const Problem p = build_problem(s);
  const ExperimentOutcome out = run_problem(p);
  const auto dir = scratch_dir("artifacts");
  write_artifacts(dir, s, p, out);
  for (const char* f : {"spec.json", "trace.csv", "report.json", "final.pgm"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  std::ifstream in(dir / "trace.csv");
  std::string text((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(parse_trace_csv(text).records.size(), 6u);
  std::ifstream rj(dir / "report.json");
  const json report = json::parse(rj);
  EXPECT_TRUE(report.contains("bound_bg"));
  EXPECT_EQ(load_pgm(dir / "final.pgm").geometry.width, 64u);
}
