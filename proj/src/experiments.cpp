#include "asyncred/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include "json.hpp"

namespace asyncred {

using json = nlohmann::ordered_json;

Image::Image(Geometry g, Vector s) : geometry(g), samples(std::move(s)) {
  require(samples.size() == geometry.size(), "Image: sample count does not match geometry");
  require(all_finite(samples), "Image: samples must be finite");
}

// ---------------------------------------------------------------------------
// Phantom

namespace {

struct Ellipse {
  double intensity, a, b, x0, y0, phi_deg;
};

// Modified (higher-contrast) Shepp-Logan table on [-1, 1]^2, y pointing up.
constexpr Ellipse kSheppLogan[] = {
    {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},          {-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
    {-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0},  {-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0},
    {0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0},     {0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0},
    {0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0},     {0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0},
    {0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0},   {0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0},
};

}  // namespace

Image shepp_logan(std::size_t n_pix) {
  require(n_pix >= 16, "shepp_logan: size must be at least 16");
  Vector s(n_pix * n_pix, 0.0);
  const double n = static_cast<double>(n_pix);
  for (std::size_t r = 0; r < n_pix; ++r) {
    const double y = 1.0 - 2.0 * (static_cast<double>(r) + 0.5) / n;
    for (std::size_t c = 0; c < n_pix; ++c) {
      const double x = 2.0 * (static_cast<double>(c) + 0.5) / n - 1.0;
      double v = 0.0;
      for (const auto& e : kSheppLogan) {
        const double phi = e.phi_deg * std::numbers::pi / 180.0;
        const double dx = x - e.x0, dy = y - e.y0;
        const double u = dx * std::cos(phi) + dy * std::sin(phi);
        const double w = -dx * std::sin(phi) + dy * std::cos(phi);
        if ((u * u) / (e.a * e.a) + (w * w) / (e.b * e.b) <= 1.0) v += e.intensity;
      }
      s[r * n_pix + c] = std::clamp(v, 0.0, 1.0);
    }
  }
  return Image({n_pix, n_pix}, std::move(s));
}

// ---------------------------------------------------------------------------
// PGM

std::string encode_pgm(const Image& img) {
  std::string out = "P5\n" + std::to_string(img.geometry.width) + " " + std::to_string(img.geometry.height) +
                    "\n65535\n";
  out.reserve(out.size() + 2 * img.samples.size());
  for (double v : img.samples) {
    const auto q = static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
    out.push_back(static_cast<char>(q >> 8));
    out.push_back(static_cast<char>(q & 0xff));
  }
  return out;
}

void save_pgm(const Image& img, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const std::string bytes = encode_pgm(img);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

namespace {

class PgmReader {
 public:
  explicit PgmReader(const std::string& b) : b_(b) {}

  void skip_space() {
    for (;;) {
      while (pos_ < b_.size() && std::isspace(static_cast<unsigned char>(b_[pos_]))) ++pos_;
      if (pos_ < b_.size() && b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
        continue;
      }
      return;
    }
  }

  std::size_t number(const char* what) {
    skip_space();
    const std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < b_.size() && std::isdigit(static_cast<unsigned char>(b_[pos_]))) {
      v = v * 10 + static_cast<std::size_t>(b_[pos_] - '0');
      if (v > (std::size_t{1} << 40)) throw PgmError(std::string("PGM: ") + what + " is too large", start);
      ++pos_;
    }
    if (pos_ == start) throw PgmError(std::string("PGM: expected ") + what, start);
    return v;
  }

  std::size_t pos_ = 0;
  const std::string& b_;
};

}  // namespace

Image decode_pgm(const std::string& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P') throw PgmError("PGM: missing magic number", 0);
  if (bytes[1] != '5') throw PgmError(std::string("PGM: unsupported format P") + bytes[1] + ", only binary P5 is read", 1);
  PgmReader rd(bytes);
  rd.pos_ = 2;
  const std::size_t width = rd.number("width");
  const std::size_t height = rd.number("height");
  const std::size_t maxval_at = rd.pos_;
  const std::size_t maxval = rd.number("maxval");
  if (width == 0 || height == 0) throw PgmError("PGM: zero image dimension", maxval_at);
  if (maxval == 0 || maxval > 65535) throw PgmError("PGM: maxval must be in 1..65535", maxval_at);
  if (rd.pos_ >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[rd.pos_])))
    throw PgmError("PGM: expected a single whitespace byte before the raster", rd.pos_);
  ++rd.pos_;
  const std::size_t bps = maxval < 256 ? 1 : 2;
  const std::size_t need = width * height * bps;
  if (bytes.size() - rd.pos_ < need)
    throw PgmError("PGM: raster truncated, need " + std::to_string(need) + " bytes", bytes.size());
  Vector s(width * height);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + rd.pos_);
  for (std::size_t k = 0; k < s.size(); ++k) {
    const unsigned v = bps == 1 ? p[k] : (static_cast<unsigned>(p[2 * k]) << 8) | p[2 * k + 1];
    if (v > maxval) throw PgmError("PGM: sample exceeds maxval", rd.pos_ + k * bps);
    s[k] = static_cast<double>(v) / static_cast<double>(maxval);
  }
  return Image({height, width}, std::move(s));
}

Image load_pgm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_pgm(ss.str());
}

// ---------------------------------------------------------------------------
// Spec

namespace {

std::string join(const std::vector<std::string>& parts) {
  std::string s;
  for (const auto& p : parts) s += (s.empty() ? "" : "; ") + p;
  return s;
}

bool one_of(const std::string& v, std::initializer_list<const char*> options) {
  return std::any_of(options.begin(), options.end(), [&](const char* o) { return v == o; });
}

bool is_async(const std::string& solver) { return solver == "async-bg" || solver == "async-sg"; }
bool is_stochastic(const std::string& solver) { return solver == "sg" || solver == "async-sg"; }

}  // namespace

SpecError::SpecError(std::vector<std::string> problems)
    : std::invalid_argument("invalid spec: " + join(problems)), problems_(std::move(problems)) {}

void ExperimentSpec::validate() const {
  std::vector<std::string> bad;
  auto check = [&](bool ok, const std::string& msg) {
    if (!ok) bad.push_back(msg);
  };
  check(one_of(task, {"cs", "ct"}), "task: expected cs or ct");
  check(one_of(image_source, {"phantom", "file"}), "image_source: expected phantom or file");
  if (image_source == "file") check(!image_path.empty(), "image_path: required when image_source is file");
  if (image_source == "phantom") {
    check(image_size >= 16, "image_size: must be >= 16");
    check(block_height >= 1 && block_width >= 1 && image_size % std::max<std::size_t>(block_height, 1) == 0 &&
              image_size % std::max<std::size_t>(block_width, 1) == 0,
          "block_height/block_width: must divide image_size");
  } else {
    check(block_height >= 1 && block_width >= 1, "block_height/block_width: must be positive");
  }
  if (task == "cs") {
    check(compression_ratio > 0 && std::isfinite(compression_ratio) &&
              std::floor(compression_ratio * static_cast<double>(block_height * block_width)) >= 1,
          "compression_ratio: must give at least one row per block");
  } else {
    check(angles >= 1, "angles: must be >= 1");
    check(detectors >= 1, "detectors: must be >= 1");
    check(measurement_blocks <= angles, "measurement_blocks: at most one block per angle");
  }
  if (input_snr_db) check(std::isfinite(*input_snr_db), "input_snr_db: must be finite or null");
  check(one_of(denoiser, {"convolution", "haar", "identity"}), "denoiser: expected convolution, haar or identity");
  check(sigma > 0 && std::isfinite(sigma), "sigma: must be positive");
  check(kernel_width_px > 0 && std::isfinite(kernel_width_px), "kernel_width_px: must be positive");
  check(haar_levels >= 1 && haar_levels <= 16, "haar_levels: must be in 1..16");
  check(one_of(denoise_scope, {"image", "block"}), "denoise_scope: expected image or block");
  if (denoiser == "haar" && haar_levels <= 16) {
    const std::size_t f = std::size_t{1} << haar_levels;
    const bool per_block = denoise_scope == "block";
    const std::size_t h = per_block ? block_height : image_size, w = per_block ? block_width : image_size;
    if (image_source == "phantom" || per_block)
      check(h % f == 0 && w % f == 0, "haar_levels: 2^levels must divide the denoised image size");
  }
  check(tau > 0 && std::isfinite(tau), "tau: must be positive");
  if (tau_relative) check(*tau_relative > 0 && std::isfinite(*tau_relative), "tau_relative: must be positive");
  if (gamma) check(*gamma > 0 && std::isfinite(*gamma), "gamma: must be positive or \"auto\"");
  check(one_of(solver, {"gm", "bc", "sync", "sg", "async-bg", "async-sg"}),
        "solver: expected gm, bc, sync, sg, async-bg or async-sg");
  check(workers >= 1 && workers <= 1024, "workers: must be in 1..1024");
  check(minibatch >= 1, "minibatch: must be >= 1");
  check(measurement_blocks >= 1, "measurement_blocks: must be >= 1");
  if (is_stochastic(solver) && minibatch > 1)
    check(measurement_blocks > 1, "minibatch: w > 1 needs measurement_blocks > 1");
  check(one_of(delay_mode, {"measure", "enforce"}), "delay_mode: expected measure or enforce");
  if (delay_mode == "enforce") check(is_async(solver), "delay_mode: enforce only applies to async solvers");
  check(max_outer_iterations.has_value() || max_wall_ms.has_value(),
        "max_outer_iterations/max_wall_ms: set at least one");
  if (max_wall_ms) check(*max_wall_ms > 0 && std::isfinite(*max_wall_ms), "max_wall_ms: must be positive");
  check(trace_stride >= 1, "trace_stride: must be >= 1");
  check(nu_draws >= 1, "nu_draws: must be >= 1");
  if (!bad.empty()) throw SpecError(bad);
}

namespace {

struct FieldDoc {
  const char* key;
  const char* type;
  const char* doc;
};

constexpr FieldDoc kFields[] = {
    {"task", "string", "cs (block-diagonal Gaussian) or ct (parallel-beam Radon)"},
    {"image_source", "string", "phantom or file"},
    {"image_path", "string", "16-bit or 8-bit binary PGM when image_source is file"},
    {"image_size", "integer", "phantom side length in pixels"},
    {"block_height", "integer", "block height in pixels; must divide the image height"},
    {"block_width", "integer", "block width in pixels; must divide the image width"},
    {"compression_ratio", "number", "cs: rows per block = floor(ratio * block pixels)"},
    {"angles", "integer", "ct: projection angles, uniformly spaced on [0, pi)"},
    {"detectors", "integer", "ct: detectors per angle"},
    {"input_snr_db", "number|null", "measurement SNR in dB; null for noiseless"},
    {"denoiser", "string", "convolution, haar or identity"},
    {"sigma", "number", "noise level on the 0..255 scale; haar threshold = 0.6 * sigma / 255"},
    {"kernel_width_px", "number", "convolution: Gaussian standard deviation in pixels"},
    {"haar_levels", "integer", "haar: decomposition levels"},
    {"denoise_scope", "string", "image (denoise the whole image) or block (each block alone)"},
    {"tau", "number", "regularization strength"},
    {"tau_relative", "number|null", "when set, tau = tau_relative * L"},
    {"gamma", "number|\"auto\"", "step size; auto = 1 / ((1 + 2 lambda) (L + 2 tau))"},
    {"solver", "string", "gm, bc, sync, sg, async-bg or async-sg"},
    {"workers", "integer", "threads for sync and async solvers (capped by ASYNC_RED_THREADS)"},
    {"minibatch", "integer", "stochastic solvers: measurement blocks drawn per update"},
    {"measurement_blocks", "integer", "row blocks of the measurements (ct: groups of angles)"},
    {"delay_mode", "string", "measure or enforce"},
    {"lambda", "integer", "delay bound: enforced in enforce mode, used for auto gamma and bounds"},
    {"max_outer_iterations", "integer|null", "outer iterations (b block updates each)"},
    {"max_wall_ms", "number|null", "wall-clock budget in milliseconds"},
    {"seed", "integer", "master seed for the operator, noise and solver streams"},
    {"trace_stride", "integer", "record every this many outer iterations"},
    {"record_wall_clock", "boolean", "false writes wall_ms = 0 for byte-stable traces"},
    {"nu_draws", "integer", "minibatches used to estimate the gradient noise level"},
};

json spec_json(const ExperimentSpec& s) {
  json j;
  j["task"] = s.task;
  j["image_source"] = s.image_source;
  j["image_path"] = s.image_path;
  j["image_size"] = s.image_size;
  j["block_height"] = s.block_height;
  j["block_width"] = s.block_width;
  j["compression_ratio"] = s.compression_ratio;
  j["angles"] = s.angles;
  j["detectors"] = s.detectors;
  j["input_snr_db"] = s.input_snr_db ? json(*s.input_snr_db) : json(nullptr);
  j["denoiser"] = s.denoiser;
  j["sigma"] = s.sigma;
  j["kernel_width_px"] = s.kernel_width_px;
  j["haar_levels"] = s.haar_levels;
  j["denoise_scope"] = s.denoise_scope;
  j["tau"] = s.tau;
  j["tau_relative"] = s.tau_relative ? json(*s.tau_relative) : json(nullptr);
  j["gamma"] = s.gamma ? json(*s.gamma) : json("auto");
  j["solver"] = s.solver;
  j["workers"] = s.workers;
  j["minibatch"] = s.minibatch;
  j["measurement_blocks"] = s.measurement_blocks;
  j["delay_mode"] = s.delay_mode;
  j["lambda"] = s.lambda;
  j["max_outer_iterations"] = s.max_outer_iterations ? json(*s.max_outer_iterations) : json(nullptr);
  j["max_wall_ms"] = s.max_wall_ms ? json(*s.max_wall_ms) : json(nullptr);
  j["seed"] = s.seed;
  j["trace_stride"] = s.trace_stride;
  j["record_wall_clock"] = s.record_wall_clock;
  j["nu_draws"] = s.nu_draws;
  return j;
}

}  // namespace

std::string spec_to_json(const ExperimentSpec& spec) { return spec_json(spec).dump(2) + "\n"; }

std::string spec_schema_json() {
  const json defaults = spec_json(ExperimentSpec{});
  json props;
  for (const auto& f : kFields) {
    json p;
    p["type"] = f.type;
    p["default"] = defaults.at(f.key);
    p["description"] = f.doc;
    props[f.key] = p;
  }
  json j;
  j["title"] = "asyncred experiment spec";
  j["type"] = "object";
  j["additionalProperties"] = false;
  j["properties"] = props;
  return j.dump(2) + "\n";
}

ExperimentSpec parse_spec(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw SpecError({std::string("malformed JSON: ") + e.what()});
  }
  if (!j.is_object()) throw SpecError({"spec must be a JSON object"});

  ExperimentSpec s;
  std::vector<std::string> bad;
  std::set<std::string> known;
  for (const auto& f : kFields) known.insert(f.key);
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) bad.push_back(k + ": unknown key");

  auto get_string = [&](const char* key, std::string& out) {
    if (!j.contains(key)) return;
    if (j[key].is_string()) out = j[key].get<std::string>();
    else bad.push_back(std::string(key) + ": expected a string");
  };
  auto get_count = [&](const char* key, auto& out) {
    if (!j.contains(key)) return;
    if (j[key].is_number_unsigned()) out = j[key].get<std::uint64_t>();
    else bad.push_back(std::string(key) + ": expected a non-negative integer");
  };
  auto get_number = [&](const char* key, double& out) {
    if (!j.contains(key)) return;
    if (j[key].is_number()) out = j[key].get<double>();
    else bad.push_back(std::string(key) + ": expected a number");
  };
  auto get_optional_number = [&](const char* key, std::optional<double>& out) {
    if (!j.contains(key)) return;
    if (j[key].is_null()) out.reset();
    else if (j[key].is_number()) out = j[key].get<double>();
    else bad.push_back(std::string(key) + ": expected a number or null");
  };

  get_string("task", s.task);
  get_string("image_source", s.image_source);
  get_string("image_path", s.image_path);
  get_count("image_size", s.image_size);
  get_count("block_height", s.block_height);
  get_count("block_width", s.block_width);
  get_number("compression_ratio", s.compression_ratio);
  get_count("angles", s.angles);
  get_count("detectors", s.detectors);
  get_optional_number("input_snr_db", s.input_snr_db);
  get_string("denoiser", s.denoiser);
  get_number("sigma", s.sigma);
  get_number("kernel_width_px", s.kernel_width_px);
  get_count("haar_levels", s.haar_levels);
  get_string("denoise_scope", s.denoise_scope);
  get_number("tau", s.tau);
  get_optional_number("tau_relative", s.tau_relative);
  if (j.contains("gamma")) {
    if (j["gamma"].is_string() && j["gamma"] == "auto") s.gamma.reset();
    else if (j["gamma"].is_number()) s.gamma = j["gamma"].get<double>();
    else bad.push_back("gamma: expected a number or \"auto\"");
  }
  get_string("solver", s.solver);
  get_count("workers", s.workers);
  get_count("minibatch", s.minibatch);
  get_count("measurement_blocks", s.measurement_blocks);
  get_string("delay_mode", s.delay_mode);
  get_count("lambda", s.lambda);
  if (j.contains("max_outer_iterations")) {
    if (j["max_outer_iterations"].is_null()) s.max_outer_iterations.reset();
    else if (j["max_outer_iterations"].is_number_unsigned())
      s.max_outer_iterations = j["max_outer_iterations"].get<std::uint64_t>();
    else bad.push_back("max_outer_iterations: expected a non-negative integer or null");
  }
  get_optional_number("max_wall_ms", s.max_wall_ms);
  get_count("seed", s.seed);
  get_count("trace_stride", s.trace_stride);
  if (j.contains("record_wall_clock")) {
    if (j["record_wall_clock"].is_boolean()) s.record_wall_clock = j["record_wall_clock"].get<bool>();
    else bad.push_back("record_wall_clock: expected a boolean");
  }
  get_count("nu_draws", s.nu_draws);
  if (!bad.empty()) throw SpecError(bad);
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Problem construction

Vector scaled_adjoint_start(const LinearOperator& a, std::span<const double> y) {
  Vector z = a.apply_adjoint(y);
  const Vector az = a.apply(z);
  const double den = norm_sq(az);
  if (den == 0.0) return Vector(z.size(), 0.0);
  const double c = dot(az, y) / den;
  for (auto& v : z) v *= c;
  return z;
}

namespace {

MeasurementPartition ct_measurement_blocks(std::size_t angles, std::size_t detectors, std::size_t groups) {
  const Partition by_angle = make_uniform_partition(angles, groups);
  std::vector<std::size_t> offsets;
  for (std::size_t o : by_angle.offsets()) offsets.push_back(o * detectors);
  return MeasurementPartition(Partition(std::move(offsets)));
}

}  // namespace

Problem build_problem(const ExperimentSpec& spec) {
  spec.validate();
  Image truth = spec.image_source == "phantom" ? shepp_logan(spec.image_size) : load_pgm(spec.image_path);
  const Geometry g = truth.geometry;
  if (spec.image_source == "file") {
    std::vector<std::string> bad;
    if (g.height % spec.block_height != 0 || g.width % spec.block_width != 0)
      bad.push_back("block_height/block_width: must divide the image size " + std::to_string(g.height) + "x" +
                    std::to_string(g.width));
    if (spec.task == "ct" && g.height != g.width) bad.push_back("image_path: ct needs a square image");
    if (spec.denoiser == "haar" && spec.denoise_scope == "image") {
      const std::size_t f = std::size_t{1} << spec.haar_levels;
      if (g.height % f != 0 || g.width % f != 0) bad.push_back("haar_levels: 2^levels must divide the image size");
    }
    if (!bad.empty()) throw SpecError(bad);
  }
  GridPartition grid(g, spec.block_height, spec.block_width);
  Vector x_true = grid.to_block_major(truth.samples);

  std::shared_ptr<const LinearOperator> op;
  MeasurementPartition mp = MeasurementPartition::single(1);
  if (spec.task == "cs") {
    auto a = std::make_shared<BlockDiagonalGaussian>(
        BlockDiagonalGaussian::with_ratio(grid.partition(), spec.compression_ratio, stream_seed(spec.seed, 101)));
    if (spec.measurement_blocks == a->column_partition().blocks()) {
      mp = MeasurementPartition(a->row_partition());
    } else {
      if (spec.measurement_blocks > a->rows())
        throw SpecError({"measurement_blocks: more blocks than measurements"});
      mp = MeasurementPartition::uniform(a->rows(), spec.measurement_blocks);
    }
    op = a;
  } else {
    auto a = std::make_shared<ParallelBeamRadon>(
        build_radon(g.height, spec.angles, spec.detectors).with_columns_permuted(grid.flat_of_pixel()));
    mp = ct_measurement_blocks(spec.angles, spec.detectors, spec.measurement_blocks);
    op = a;
  }
  const Vector y = synthesize_measurements(*op, x_true, spec.input_snr_db.value_or(kNoiseless),
                                           stream_seed(spec.seed, 202));
  auto fidelity = std::make_shared<LeastSquaresFidelity>(op, y, mp);

  std::shared_ptr<const Denoiser> den;
  if (spec.denoiser == "convolution") {
    den = std::make_shared<ConvolutionDenoiser>(ConvolutionDenoiser::gaussian(spec.kernel_width_px));
  } else if (spec.denoiser == "haar") {
    den = std::make_shared<TransformShrinkDenoiser>(TransformShrinkDenoiser::from_sigma(spec.sigma, spec.haar_levels));
  } else {
    den = std::make_shared<IdentityDenoiser>();
  }

  const bool stochastic = is_stochastic(spec.solver);
  const double lip = stochastic ? fidelity->component_lipschitz_max() : fidelity->lipschitz();
  const double tau = spec.tau_relative ? *spec.tau_relative * fidelity->lipschitz() : spec.tau;
  if (!(tau > 0.0)) throw SpecError({"tau_relative: gives tau = 0 for a zero operator"});
  const double gamma = spec.gamma.value_or(step_size_bound(lip, tau, static_cast<double>(spec.lambda)));
  const DenoiseScope scope = spec.denoise_scope == "block" ? DenoiseScope::kPerBlock : DenoiseScope::kFullImage;
  auto red = std::make_shared<RedOperator>(fidelity, den, tau, grid, scope);
  Vector x0 = scaled_adjoint_start(*op, y);

  return Problem{spec,     std::move(truth), std::move(grid), op,  fidelity, den, red,
                 std::move(x_true), std::move(x0), lip, tau, gamma};
}

// ---------------------------------------------------------------------------
// Running

namespace {

json number_or_string(double v) {
  if (std::isfinite(v)) return v;
  return format_number(v);
}

}  // namespace

std::string ExperimentReport::to_json() const {
  json j;
  j["solver"] = solver;
  j["L"] = number_or_string(lipschitz);
  j["gamma"] = number_or_string(gamma);
  j["tau"] = number_or_string(tau);
  j["lambda"] = number_or_string(lambda);
  j["nu_hat"] = number_or_string(nu_hat);
  j["t"] = number_or_string(t);
  j["bound_bg"] = number_or_string(bound_bg);
  j["bound_sg"] = number_or_string(bound_sg);
  j["min_res_sq"] = number_or_string(min_res_sq);
  j["final_norm_res"] = number_or_string(final_norm_res);
  j["initial_snr_db"] = number_or_string(initial_snr_db);
  j["final_snr_db"] = number_or_string(final_snr_db);
  j["R0"] = number_or_string(r0);
  j["R0_estimated"] = r0_estimated;
  j["outer_iterations"] = outer_iterations;
  j["updates"] = updates;
  j["wall_ms"] = number_or_string(wall_ms);
  if (delay) {
    json d;
    d["updates"] = delay->updates;
    d["max_delay"] = delay->max_delay;
    d["mean_delay"] = number_or_string(delay->mean_delay);
    d["max_delay_per_worker"] = number_or_string(delay->max_delay_per_worker);
    d["stalls"] = delay->stalls;
    d["histogram"] = delay->histogram;
    d["torn_reads"] = torn_reads;
    j["delay_audit"] = d;
  }
  j["warnings"] = warnings;
  return j.dump(2) + "\n";
}

ExperimentOutcome run_problem(const Problem& prob, const std::optional<StalenessSchedule>& schedule) {
  const ExperimentSpec& spec = prob.spec;
  const RedOperator& r = *prob.red;
  const RedConfig cfg(prob.tau, prob.gamma, spec.sigma);
  SolverBudget budget{spec.max_outer_iterations, spec.max_wall_ms};
  TraceOptions topts;
  topts.stride = spec.trace_stride;
  topts.ground_truth = prob.x_true;
  topts.record_wall_clock = spec.record_wall_clock;
  const std::size_t b = r.blocks();

  ExperimentOutcome out;
  ExperimentReport& rep = out.report;
  rep.solver = schedule ? "replay" : spec.solver;
  Stopwatch clock;
  bool block_solver = true;
  if (schedule) {
    auto res = run_simulated(r, cfg, prob.x0, *schedule, std::nullopt, topts);
    out.x = std::move(res.x);
    out.trace = std::move(res.trace);
    rep.updates = schedule->events.size();
    rep.outer_iterations = rep.updates / b;
  } else if (spec.solver == "gm" || spec.solver == "sync" || spec.solver == "sg") {
    block_solver = false;
    SolveResult res = spec.solver == "gm"     ? gm_red(r, cfg, prob.x0, budget, topts)
                      : spec.solver == "sync" ? sync_red(r, cfg, prob.x0, budget, spec.workers, topts)
                                              : sg_red(r, cfg, prob.x0, budget, spec.minibatch, spec.seed, topts);
    out.x = std::move(res.x);
    out.trace = std::move(res.trace);
    rep.updates = res.updates;
    rep.outer_iterations = res.outer_iterations;
    rep.warnings = std::move(res.warnings);
  } else if (spec.solver == "bc") {
    SolveResult res = bc_red(r, cfg, prob.x0, budget, spec.seed, topts);
    out.x = std::move(res.x);
    out.trace = std::move(res.trace);
    rep.updates = res.updates;
    rep.outer_iterations = res.outer_iterations;
    rep.warnings = std::move(res.warnings);
  } else {
    const DelayPolicy policy = spec.delay_mode == "enforce" ? DelayPolicy::enforce(spec.lambda) : DelayPolicy::measure();
    AsyncOptions aopts;
    aopts.trace = topts;
    AsyncResult res = spec.solver == "async-bg"
                          ? run_async_bg(r, cfg, prob.x0, spec.workers, budget, policy, spec.seed, aopts)
                          : run_async_sg(r, cfg, prob.x0, spec.workers, spec.minibatch, budget, policy, spec.seed, aopts);
    out.x = std::move(res.x);
    out.trace = std::move(res.trace);
    rep.updates = res.final_counter;
    rep.outer_iterations = res.outer_iterations;
    rep.warnings = std::move(res.warnings);
    rep.delay = delay_audit(res.reports);
    rep.torn_reads = res.torn_reads;
    out.workers = std::move(res.reports);
  }
  rep.wall_ms = clock.elapsed_ms();

  const bool stochastic = !schedule && is_stochastic(spec.solver);
  rep.lipschitz = prob.lipschitz;
  rep.gamma = prob.gamma;
  rep.tau = prob.tau;
  rep.lambda = static_cast<double>(spec.lambda);
  if (rep.delay && spec.delay_mode == "measure" && static_cast<double>(rep.delay->max_delay) > rep.lambda) {
    rep.warnings.push_back("observed delay " + std::to_string(rep.delay->max_delay) +
                           " exceeds the configured lambda; bounds use the observed value");
    rep.lambda = static_cast<double>(rep.delay->max_delay);
  }
  if (schedule) rep.lambda = static_cast<double>(schedule->max_delay());
  if (stochastic) {
    const std::vector<Vector> samples{prob.x0, out.x};
    rep.nu_hat = nu_estimate(r, samples, spec.nu_draws, stream_seed(spec.seed, 303));
  }

  // Distance to the solution set, exact for linear priors on small problems.
  rep.r0 = distance(prob.x0, out.x);
  rep.r0_estimated = true;
  if (prob.denoiser->is_linear() && r.dimension() <= 4096) {
    try {
      const Vector xs = fixed_point_direct_solve(r);
      rep.r0 = distance(prob.x0, xs);
      rep.r0_estimated = false;
    } catch (const NoConvergenceError&) {
    }
  }

  BoundInputs bi;
  bi.t = static_cast<double>(rep.updates) + 1.0;
  bi.b = block_solver ? static_cast<double>(b) : 1.0;
  bi.gamma = prob.gamma;
  bi.lipschitz = prob.lipschitz;
  bi.tau = prob.tau;
  bi.lambda = rep.lambda;
  bi.r0 = rep.r0;
  bi.nu = rep.nu_hat;
  bi.w = static_cast<double>(spec.minibatch);
  rep.t = bi.t;
  rep.bound_bg = theoretical_bound_bg(bi);
  rep.bound_sg = theoretical_bound_sg(bi);

  if (!out.trace.empty()) {
    rep.min_res_sq = out.trace.back().min_res_sq;
    rep.final_norm_res = out.trace.back().norm_res;
  }
  rep.initial_snr_db = snr_db(prob.x0, prob.x_true);
  rep.final_snr_db = snr_db(out.x, prob.x_true);
  return out;
}

ExperimentOutcome run_experiment(const ExperimentSpec& spec, const std::optional<StalenessSchedule>& schedule) {
  return run_problem(build_problem(spec), schedule);
}

void write_artifacts(const std::filesystem::path& dir, const ExperimentSpec& spec, const Problem& problem,
                     const ExperimentOutcome& outcome) {
  std::filesystem::create_directories(dir);
  auto write_text = [&](const char* name, const std::string& text) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    f << text;
  };
  write_text("spec.json", spec_to_json(spec));
  write_text("trace.csv", trace_to_csv(outcome.trace));
  write_text("report.json", outcome.report.to_json());
  save_pgm(Image(problem.truth.geometry, problem.grid.to_row_major(outcome.x)), dir / "final.pgm");
}

}  // namespace asyncred
