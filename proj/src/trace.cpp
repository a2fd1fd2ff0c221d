#include "asyncred/trace.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>

namespace asyncred {

double snr_db(std::span<const double> x_hat, std::span<const double> x_true) {
  require(x_hat.size() == x_true.size(), "snr_db: length mismatch");
  const double signal = norm(x_true);
  require(signal > 0.0, "snr_db: ground truth is all zero");
  const double err = distance(x_true, x_hat);
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(signal / err);
}

void SolverBudget::validate() const {
  require(max_outer_iterations.has_value() || max_wall_ms.has_value(),
          "SolverBudget: set max_outer_iterations or max_wall_ms");
  if (max_wall_ms) require(*max_wall_ms > 0.0, "SolverBudget: max_wall_ms must be positive");
}

TraceRecorder::TraceRecorder(const RedOperator& r, const TraceOptions& opts) : r_(&r), opts_(opts) {
  require(opts_.stride >= 1, "TraceOptions: stride must be >= 1");
  if (opts_.ground_truth) require(opts_.ground_truth->size() == r.dimension(), "TraceOptions: ground truth length");
}

bool TraceRecorder::wants(std::uint64_t iter) const {
  return opts_.enabled && (iter == 0 || iter % opts_.stride == 0);
}

void TraceRecorder::record(std::uint64_t iter, std::span<const double> x, double wall_ms) {
  record_residual(iter, x, r_->residual_norm_sq(x), wall_ms);
}

void TraceRecorder::record_residual(std::uint64_t iter, std::span<const double> x, double res_sq, double wall_ms) {
  if (!opts_.enabled) return;
  if (!trace_.records.empty() && trace_.back().iter >= iter) return;
  TraceRecord rec;
  rec.iter = iter;
  rec.wall_ms = opts_.record_wall_clock ? wall_ms : 0.0;
  rec.res_sq = res_sq;
  if (trace_.records.empty()) {
    base_ = res_sq;
    min_ = res_sq;
    rec.norm_res = 1.0;
  } else {
    rec.norm_res = base_ > 0.0 ? res_sq / base_ : (res_sq == 0.0 ? 1.0 : std::numeric_limits<double>::infinity());
  }
  min_ = std::min(min_, res_sq);
  rec.min_res_sq = min_;
  rec.snr_db = opts_.ground_truth ? snr_db(x, *opts_.ground_truth) : std::numeric_limits<double>::quiet_NaN();
  trace_.records.push_back(rec);
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_trace_csv(const Trace& trace, std::ostream& out) {
  out << kTraceCsvHeader << '\n';
  for (const auto& r : trace.records) {
    out << r.iter << ',' << format_number(r.wall_ms) << ',' << format_number(r.res_sq) << ','
        << format_number(r.norm_res) << ',' << format_number(r.snr_db) << ',' << format_number(r.min_res_sq)
        << '\n';
  }
}

std::string trace_to_csv(const Trace& trace) {
  std::ostringstream out;
  write_trace_csv(trace, out);
  return out.str();
}

namespace {

double parse_field(const std::string& s, std::size_t line) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == s.size() && !s.empty(), "trace csv line " + std::to_string(line) + ": bad number '" + s + "'");
  return v;
}

}  // namespace

Trace parse_trace_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "trace csv: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == kTraceCsvHeader, "trace csv: unexpected header '" + line + "'");
  Trace trace;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) fields.push_back(f);
    require(fields.size() == 6, "trace csv line " + std::to_string(lineno) + ": expected 6 fields");
    TraceRecord r;
    r.iter = static_cast<std::uint64_t>(parse_field(fields[0], lineno));
    r.wall_ms = parse_field(fields[1], lineno);
    r.res_sq = parse_field(fields[2], lineno);
    r.norm_res = parse_field(fields[3], lineno);
    r.snr_db = parse_field(fields[4], lineno);
    r.min_res_sq = parse_field(fields[5], lineno);
    trace.records.push_back(r);
  }
  return trace;
}

}  // namespace asyncred
