#pragma once

// Trace serialization: per-seed CSV files with a fixed column set, an
// aggregate file of per-iteration means across seeds, and a reader used by
// the aggregation pass and the tests. Floating-point values are written with
// 17 significant digits so traces round-trip exactly.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "riebo/common.hpp"
#include "riebo/solvers.hpp"

namespace riebo {

inline const char* trace_csv_header() {
  return "iter,cpu_seconds,objective,grad_norm,inner_residual";
}

inline std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string trace_row(const TraceRecord& r) {
  std::string out = std::to_string(r.iter);
  out += ',';
  out += format_g17(r.elapsed_s);
  out += ',';
  out += format_g17(r.objective);
  out += ',';
  out += format_g17(r.grad_norm);
  out += ',';
  out += format_g17(r.inner_residual);
  return out;
}

inline void write_trace_csv(const std::string& path, const std::vector<TraceRecord>& records) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open trace file for writing: " + path);
  f << trace_csv_header() << '\n';
  for (const auto& r : records) f << trace_row(r) << '\n';
  if (!f) throw std::runtime_error("failed writing trace file: " + path);
}

inline std::vector<TraceRecord> read_trace_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open trace file for reading: " + path);
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("empty trace file: " + path);
  if (line != trace_csv_header())
    throw std::runtime_error("unexpected trace header in " + path + ": " + line);
  std::vector<TraceRecord> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    TraceRecord r;
    std::istringstream ss(line);
    char comma = 0;
    ss >> r.iter >> comma >> r.elapsed_s >> comma >> r.objective >> comma >> r.grad_norm >>
        comma >> r.inner_residual;
    if (!ss) throw std::runtime_error("malformed trace row in " + path + ": " + line);
    out.push_back(r);
  }
  return out;
}

// Per-iteration arithmetic mean across seeds, over the common prefix of the
// per-seed traces. Iteration indices must agree across seeds row by row.
inline std::vector<TraceRecord> aggregate_traces(
    const std::vector<std::vector<TraceRecord>>& per_seed) {
  if (per_seed.empty()) throw ConfigError("aggregate_traces: no traces");
  std::size_t rows = per_seed.front().size();
  for (const auto& t : per_seed) rows = std::min(rows, t.size());
  std::vector<TraceRecord> out;
  out.reserve(rows);
  const double inv = 1.0 / static_cast<double>(per_seed.size());
  for (std::size_t k = 0; k < rows; ++k) {
    TraceRecord mean;
    mean.iter = per_seed.front()[k].iter;
    for (const auto& t : per_seed) {
      if (t[k].iter != mean.iter)
        throw ConfigError("aggregate_traces: iteration indices disagree across seeds");
      mean.elapsed_s += t[k].elapsed_s;
      mean.objective += t[k].objective;
      mean.grad_norm += t[k].grad_norm;
      mean.inner_residual += t[k].inner_residual;
    }
    mean.elapsed_s *= inv;
    mean.objective *= inv;
    mean.grad_norm *= inv;
    mean.inner_residual *= inv;
    out.push_back(mean);
  }
  return out;
}

}  // namespace riebo
