#pragma once

#include "rsts/simulate.hpp"
#include "rsts/sts.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace rsts {

// Dataset CSV: header `id,time,value`, one observation per row. Rows for an
// id need not be contiguous; individuals keep first-appearance order.
// Throws ParseError naming the 1-based line of the first bad row.
HierDataset read_dataset_csv(std::istream& in);
HierDataset read_dataset_csv(const std::filesystem::path& path);
void write_dataset_csv(std::ostream& out, const HierDataset& data);

// %.6g, the precision of human-facing tables.
std::string format6(double v);
// %.17g, enough to round-trip a double.
std::string format_exact(double v);

std::vector<std::string> split(std::string_view text, char sep);
std::string trim(std::string_view text);

// Flat `key = value` text config; `#` starts a comment. Duplicate keys are
// errors. Typed getters throw ParseError naming the key.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in);
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_uint(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<std::size_t> get_sizes(const std::string& key) const;

  void set(const std::string& key, const std::string& value);
  // Throws ParseError for the first key not in `allowed`.
  void require_known(const std::vector<std::string>& allowed) const;
  // Canonical `key=value` lines in key order, the input of config_hash.
  std::string canonical() const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
  std::map<std::string, std::size_t> lines_;
};

std::uint64_t config_hash(std::string_view canonical_text);
std::string hex64(std::uint64_t v);

// One row per cell: N,n,mse,coverage,mean_ci_length,drop_rate.
void write_report_csv(std::ostream& out, const SimReport& report);

struct ReportRow {
  std::size_t N = 0;
  std::size_t n = 0;
  double mse = 0.0;
  double coverage = 0.0;
  double mean_ci_length = 0.0;
  double drop_rate = 0.0;
};
std::vector<ReportRow> read_report_csv(std::istream& in);

// Line chart of one metric against n with one series per N. Returns an
// empty string when the metric has no finite values.
std::string render_metric_svg(const std::vector<ReportRow>& rows, const std::string& metric,
                              const std::string& title);

}  // namespace rsts
