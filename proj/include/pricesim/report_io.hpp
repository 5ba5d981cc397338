#pragma once

#include <array>
#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pricesim/errors.hpp"
#include "pricesim/harness.hpp"

namespace pricesim {

inline constexpr std::array<std::string_view, 14> kTraceColumns = {
    "rep",   "t",      "product", "true_cluster", "nbhd_size", "recovery",    "price",
    "delta", "outcome", "p_star", "r_star",       "r_policy",  "inst_regret", "cum_regret"};

namespace detail {

/// Shortest representation that parses back to the same double.
inline void append_double(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

template <class Int>
void append_int(std::string& out, Int v) {
  char buf[24];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

template <class T>
T parse_field(std::string_view field, std::size_t line, std::string_view column) {
  T v{};
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size())
    throw InvalidInput("line " + std::to_string(line) + ": bad value '" + std::string(field) + "' in column " +
                       std::string(column));
  return v;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

} // namespace detail

inline std::string trace_csv_header() {
  std::string h;
  for (std::size_t k = 0; k < kTraceColumns.size(); ++k) {
    if (k) h += ',';
    h += kTraceColumns[k];
  }
  return h;
}

inline void write_trace_csv(std::ostream& out, const RegretTrace& trace, bool header = true) {
  std::string buf;
  if (header) buf += trace_csv_header() + '\n';
  for (const TraceRow& r : trace.rows) {
    detail::append_int(buf, trace.rep);
    buf += ',';
    detail::append_int(buf, r.t);
    buf += ',';
    detail::append_int(buf, r.product);
    buf += ',';
    detail::append_int(buf, r.true_cluster);
    buf += ',';
    detail::append_int(buf, r.nbhd_size);
    buf += r.recovery ? ",1," : ",0,";
    detail::append_double(buf, r.price);
    buf += ',';
    detail::append_double(buf, r.delta);
    buf += ',';
    detail::append_int(buf, r.outcome);
    for (double v : {r.p_star, r.r_star, r.r_policy, r.inst_regret, r.cum_regret}) {
      buf += ',';
      detail::append_double(buf, v);
    }
    buf += '\n';
    if (buf.size() > (1u << 16)) {
      out << buf;
      buf.clear();
    }
  }
  out << buf;
  if (!out) throw std::runtime_error("failed writing trace CSV");
}

inline void save_trace_csv(const RegretTrace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("output", "cannot open '" + path + "' for writing");
  write_trace_csv(out, trace);
}

/// Strict reader: exact header, exactly 14 fields per row, every field fully
/// numeric, t increasing by one from 1 within each rep. Rows of different reps
/// become separate traces in order of first appearance.
inline std::vector<RegretTrace> read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != trace_csv_header())
    throw InvalidInput("trace CSV header does not match the expected columns");
  std::vector<RegretTrace> traces;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const auto f = detail::split_commas(line);
    if (f.size() != kTraceColumns.size())
      throw InvalidInput("line " + std::to_string(lineno) + ": expected " + std::to_string(kTraceColumns.size()) +
                         " fields, got " + std::to_string(f.size()));
    const auto col = [&](std::size_t k) { return kTraceColumns[k]; };
    const int rep = detail::parse_field<int>(f[0], lineno, col(0));
    TraceRow r;
    r.t = detail::parse_field<long>(f[1], lineno, col(1));
    r.product = detail::parse_field<int>(f[2], lineno, col(2));
    r.true_cluster = detail::parse_field<int>(f[3], lineno, col(3));
    r.nbhd_size = detail::parse_field<int>(f[4], lineno, col(4));
    const int rec = detail::parse_field<int>(f[5], lineno, col(5));
    if (rec != 0 && rec != 1) throw InvalidInput("line " + std::to_string(lineno) + ": recovery must be 0 or 1");
    r.recovery = rec == 1;
    r.price = detail::parse_field<double>(f[6], lineno, col(6));
    r.delta = detail::parse_field<double>(f[7], lineno, col(7));
    r.outcome = detail::parse_field<int>(f[8], lineno, col(8));
    if (r.outcome != 0 && r.outcome != 1) throw InvalidInput("line " + std::to_string(lineno) + ": outcome must be 0 or 1");
    r.p_star = detail::parse_field<double>(f[9], lineno, col(9));
    r.r_star = detail::parse_field<double>(f[10], lineno, col(10));
    r.r_policy = detail::parse_field<double>(f[11], lineno, col(11));
    r.inst_regret = detail::parse_field<double>(f[12], lineno, col(12));
    r.cum_regret = detail::parse_field<double>(f[13], lineno, col(13));

    RegretTrace* tr = nullptr;
    for (auto& x : traces)
      if (x.rep == rep) tr = &x;
    if (!tr) {
      traces.emplace_back();
      tr = &traces.back();
      tr->rep = rep;
    }
    if (r.t != tr->horizon() + 1)
      throw InvalidInput("line " + std::to_string(lineno) + ": periods must run 1, 2, ... within a replication");
    tr->rows.push_back(r);
  }
  return traces;
}

inline std::vector<RegretTrace> load_trace_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("trace", "cannot open '" + path + "'");
  return read_trace_csv(in);
}

// ---------------------------------------------------------------------------
// Summary JSON.

inline nlohmann::json summary_to_json(const ExperimentSummary& s) {
  nlohmann::json j;
  j["policy"] = s.policy;
  j["T"] = s.T;
  j["checkpoints"] = s.checkpoints;
  j["mean_loss"] = s.mean_loss;
  j["std_loss"] = s.std_loss;
  j["mean_regret"] = s.mean_regret;
  j["std_regret"] = s.std_regret;
  j["recovery_rate"] = s.recovery_rate;
  j["clamp_count"] = s.clamp_count;
  j["seeds"] = s.seeds;
  j["warnings"] = s.warnings;
  return j;
}

inline ExperimentSummary summary_from_json(const nlohmann::json& j) {
  ExperimentSummary s;
  const auto field = [&](const char* key) -> const nlohmann::json& {
    if (!j.contains(key)) throw ConfigError(std::string("summary.") + key, "missing");
    return j.at(key);
  };
  try {
    s.policy = field("policy").get<std::string>();
    s.checkpoints = field("checkpoints").get<std::vector<long>>();
    s.mean_loss = field("mean_loss").get<std::vector<double>>();
    s.std_loss = field("std_loss").get<std::vector<double>>();
    s.mean_regret = field("mean_regret").get<std::vector<double>>();
    s.std_regret = field("std_regret").get<std::vector<double>>();
    s.recovery_rate = field("recovery_rate").get<std::vector<double>>();
    s.clamp_count = field("clamp_count").get<std::size_t>();
    s.seeds = field("seeds").get<std::vector<std::uint64_t>>();
    s.T = j.value("T", s.checkpoints.empty() ? 0L : s.checkpoints.back());
    if (j.contains("warnings")) s.warnings = j.at("warnings").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("summary", e.what());
  }
  const std::size_t k = s.checkpoints.size();
  for (const auto* v : {&s.mean_loss, &s.std_loss, &s.mean_regret, &s.std_regret, &s.recovery_rate})
    if (v->size() != k) throw ConfigError("summary", "every per-checkpoint array must match checkpoints in length");
  return s;
}

inline std::string summary_json_text(const ExperimentSummary& s) { return summary_to_json(s).dump(2) + "\n"; }

inline void save_summary(const ExperimentSummary& s, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("output", "cannot open '" + path + "' for writing");
  out << summary_json_text(s);
}

inline ExperimentSummary load_summary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("summary", "cannot open '" + path + "'");
  try {
    return summary_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("summary", e.what());
  }
}

// ---------------------------------------------------------------------------
// Comparison table.

/// Two CSV tables separated by a blank line: mean percentage revenue loss per
/// checkpoint (rows) and policy (columns), with '*' after every cell equal to
/// the row minimum; then the matching standard deviations.
inline std::string compare_summaries(const std::vector<ExperimentSummary>& summaries) {
  if (summaries.size() < 2) throw ConfigError("summaries", "need at least two summaries to compare");
  const auto& cps = summaries.front().checkpoints;
  for (const auto& s : summaries)
    if (s.checkpoints != cps)
      throw ConfigError("summaries", "checkpoints of '" + s.policy + "' differ from '" + summaries.front().policy + "'");

  std::string out = "t";
  for (const auto& s : summaries) out += "," + s.policy;
  out += '\n';
  for (std::size_t k = 0; k < cps.size(); ++k) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : summaries) best = std::min(best, s.mean_loss[k]);
    detail::append_int(out, cps[k]);
    for (const auto& s : summaries) {
      out += ',';
      detail::append_double(out, s.mean_loss[k]);
      if (s.mean_loss[k] == best) out += '*';
    }
    out += '\n';
  }
  out += "\nt";
  for (const auto& s : summaries) out += "," + s.policy + "_std";
  out += '\n';
  for (std::size_t k = 0; k < cps.size(); ++k) {
    detail::append_int(out, cps[k]);
    for (const auto& s : summaries) {
      out += ',';
      detail::append_double(out, s.std_loss[k]);
    }
    out += '\n';
  }
  return out;
}

/// Plain-text report of one summary.
inline std::string format_report(const ExperimentSummary& s) {
  std::ostringstream os;
  os << "policy " << s.policy << "  T=" << s.T << "  replications=" << s.seeds.size()
     << "  clamped probabilities=" << s.clamp_count << "\n";
  os << "       t   loss(%)    std(%)        regret       std   recovery\n";
  char line[128];
  for (std::size_t k = 0; k < s.checkpoints.size(); ++k) {
    std::snprintf(line, sizeof line, "%8ld %9.3f %9.3f %13.2f %9.2f %10.3f\n", s.checkpoints[k],
                  100.0 * s.mean_loss[k], 100.0 * s.std_loss[k], s.mean_regret[k], s.std_regret[k],
                  s.recovery_rate[k]);
    os << line;
  }
  for (const auto& w : s.warnings) os << "warning: " << w << "\n";
  return os.str();
}

} // namespace pricesim
