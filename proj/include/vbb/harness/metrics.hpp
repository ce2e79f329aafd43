#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vbb/agent/train.hpp"
#include "vbb/error.hpp"

namespace vbb::harness {

inline constexpr std::array<const char*, 16> kMetricsColumns{
    "run_id",        "seed",         "variant",          "beta",
    "train_env",     "eval_env",     "frames",           "train_success",
    "eval_success",  "access_rate",  "junction_access_fraction", "junction_enrichment",
    "mean_kl_nats",  "mean_kl_bits", "mean_kl_bits_floored",     "wall_clock_s"};

struct MetricsRecord {
  std::string run_id;
  std::uint64_t seed = 0;
  std::string variant;
  std::optional<double> beta;
  std::string train_env;
  std::string eval_env;
  std::uint64_t frames = 0;
  double train_success = 0.0;
  double eval_success = 0.0;
  double access_rate = 0.0;
  double junction_access_fraction = 0.0;
  double junction_enrichment = 0.0;
  std::optional<double> mean_kl_nats;
  std::optional<double> mean_kl_bits;
  std::optional<double> mean_kl_bits_floored;
  double wall_clock_s = 0.0;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline double parse_double(const std::string& s, const char* column) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError(column, "not a number: '" + s + "'");
  }
  return v;
}

inline std::uint64_t parse_u64(const std::string& s, const char* column) {
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError(column, "not a non-negative integer: '" + s + "'");
  }
  return v;
}

inline std::optional<double> parse_optional(const std::string& s, const char* column) {
  if (s.empty()) return std::nullopt;
  return parse_double(s, column);
}

inline std::string format_optional(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

}  // namespace detail

/// RFC 4180 parse of a whole document into rows of fields.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, in_row = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      in_row = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      in_row = true;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (in_row || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      in_row = false;
    } else {
      field += c;
      in_row = true;
    }
  }
  if (quoted) throw ConfigError("csv", "unterminated quoted field");
  if (in_row || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string metrics_header() {
  std::string out;
  for (std::size_t i = 0; i < kMetricsColumns.size(); ++i) out += (i ? "," : "") + std::string(kMetricsColumns[i]);
  return out;
}

inline std::string to_csv_row(const MetricsRecord& r) {
  using namespace detail;
  const std::vector<std::string> fields{csv_quote(r.run_id),
                                        std::to_string(r.seed),
                                        csv_quote(r.variant),
                                        format_optional(r.beta),
                                        csv_quote(r.train_env),
                                        csv_quote(r.eval_env),
                                        std::to_string(r.frames),
                                        format_double(r.train_success),
                                        format_double(r.eval_success),
                                        format_double(r.access_rate),
                                        format_double(r.junction_access_fraction),
                                        format_double(r.junction_enrichment),
                                        format_optional(r.mean_kl_nats),
                                        format_optional(r.mean_kl_bits),
                                        format_optional(r.mean_kl_bits_floored),
                                        format_double(r.wall_clock_s)};
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) out += (i ? "," : "") + fields[i];
  return out;
}

inline MetricsRecord record_from_fields(const std::vector<std::string>& f) {
  if (f.size() != kMetricsColumns.size()) {
    throw ConfigError("csv", "expected " + std::to_string(kMetricsColumns.size()) + " columns, got " +
                                 std::to_string(f.size()));
  }
  using namespace detail;
  MetricsRecord r;
  r.run_id = f[0];
  r.seed = parse_u64(f[1], "seed");
  r.variant = f[2];
  r.beta = parse_optional(f[3], "beta");
  r.train_env = f[4];
  r.eval_env = f[5];
  r.frames = parse_u64(f[6], "frames");
  r.train_success = parse_double(f[7], "train_success");
  r.eval_success = parse_double(f[8], "eval_success");
  r.access_rate = parse_double(f[9], "access_rate");
  r.junction_access_fraction = parse_double(f[10], "junction_access_fraction");
  r.junction_enrichment = parse_double(f[11], "junction_enrichment");
  r.mean_kl_nats = parse_optional(f[12], "mean_kl_nats");
  r.mean_kl_bits = parse_optional(f[13], "mean_kl_bits");
  r.mean_kl_bits_floored = parse_optional(f[14], "mean_kl_bits_floored");
  r.wall_clock_s = parse_double(f[15], "wall_clock_s");
  return r;
}

/// Records of a metrics document; the header row is required.
inline std::vector<MetricsRecord> parse_metrics(const std::string& text) {
  const auto rows = parse_csv(text);
  if (rows.empty()) return {};
  const std::vector<std::string> header(kMetricsColumns.begin(), kMetricsColumns.end());
  if (rows.front() != header) throw ConfigError("csv", "metrics header does not match the expected columns");
  std::vector<MetricsRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) out.push_back(record_from_fields(rows[i]));
  return out;
}

inline std::vector<MetricsRecord> read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("runs", "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_metrics(ss.str());
}

/// Every metrics.csv below `dir`, in path order.
inline std::vector<MetricsRecord> collect_metrics(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw ConfigError("runs", dir + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() == "metrics.csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<MetricsRecord> out;
  for (const auto& f : files) {
    auto rows = read_metrics(f.string());
    out.insert(out.end(), rows.begin(), rows.end());
  }
  return out;
}

/// Appends one row, writing the header first when the file is new or empty.
inline void append_metrics(const std::string& path, const MetricsRecord& r) {
  namespace fs = std::filesystem;
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to " + path);
  if (fresh) out << metrics_header() << "\r\n";
  out << to_csv_row(r) << "\r\n";
  out.flush();
}

inline std::string curve_header() {
  return "frames,updates,episodes,mean_return,success_rate,access_rate,mean_d_cap,mean_kl_nats,entropy,loss,"
         "wall_clock_s";
}

inline std::string to_csv_row(const agent::CurvePoint& p) {
  using detail::format_double;
  std::ostringstream os;
  os << p.frames << ',' << p.updates << ',' << p.episodes << ',' << format_double(p.mean_return) << ','
     << format_double(p.success_rate) << ',' << format_double(p.access_rate) << ',' << format_double(p.mean_d_cap)
     << ',' << format_double(p.mean_kl_nats) << ',' << format_double(p.entropy) << ',' << format_double(p.loss) << ','
     << format_double(p.wall_clock_s);
  return os.str();
}

}  // namespace vbb::harness
