#include "rsts/io.hpp"

#include "rsts/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>

namespace rsts {

namespace {

bool parse_double(std::string_view text, double& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  const char* first = t.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), out);
  return ec == std::errc() && ptr == t.data() + t.size();
}

bool parse_uint(std::string_view text, std::uint64_t& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  return ec == std::errc() && ptr == t.data() + t.size();
}

std::string line_prefix(std::size_t line) { return "line " + std::to_string(line) + ": "; }

}  // namespace

std::string trim(std::string_view text) {
  const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!text.empty() && is_space(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && is_space(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  return std::string(text);
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.emplace_back(text.substr(start));
      return parts;
    }
    parts.emplace_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string format6(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string format_exact(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---- dataset CSV -----------------------------------------------------------

HierDataset read_dataset_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  HierDataset data;
  std::unordered_map<std::string, std::size_t> index;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string row = trim(line);
    if (row.empty()) continue;
    const auto fields = split(row, ',');
    if (!header_seen) {
      if (fields.size() != 3 || trim(fields[0]) != "id" || trim(fields[1]) != "time" ||
          trim(fields[2]) != "value") {
        throw ParseError(line_prefix(line_no) + "expected header 'id,time,value'", line_no);
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != 3) {
      throw ParseError(line_prefix(line_no) + "expected 3 fields, found " +
                           std::to_string(fields.size()),
                       line_no);
    }
    const std::string id = trim(fields[0]);
    if (id.empty()) throw ParseError(line_prefix(line_no) + "empty id", line_no);
    double t = 0.0;
    double y = 0.0;
    if (!parse_double(fields[1], t) || !std::isfinite(t)) {
      throw ParseError(line_prefix(line_no) + "time '" + trim(fields[1]) + "' is not a finite number",
                       line_no);
    }
    if (t < 0.0) throw ParseError(line_prefix(line_no) + "time must be nonnegative", line_no);
    if (!parse_double(fields[2], y) || !std::isfinite(y)) {
      throw ParseError(
          line_prefix(line_no) + "value '" + trim(fields[2]) + "' is not a finite number", line_no);
    }
    auto [it, inserted] = index.try_emplace(id, data.individuals.size());
    if (inserted) data.individuals.push_back(IndividualData{id, {}, {}});
    auto& ind = data.individuals[it->second];
    ind.x.push_back(t);
    ind.y.push_back(y);
  }
  if (!header_seen) throw ParseError("dataset is empty; expected header 'id,time,value'", 1);
  return data;
}

HierDataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset '" + path.string() + "'");
  return read_dataset_csv(in);
}

void write_dataset_csv(std::ostream& out, const HierDataset& data) {
  out << "id,time,value\n";
  for (const auto& ind : data.individuals) {
    for (std::size_t j = 0; j < ind.size(); ++j) {
      out << ind.id << ',' << format_exact(ind.x[j]) << ',' << format_exact(ind.y[j]) << '\n';
    }
  }
}

// ---- key/value config ------------------------------------------------------

KeyValueConfig KeyValueConfig::parse(std::istream& in) {
  KeyValueConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    const std::string row = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (row.empty()) continue;
    const std::size_t eq = row.find('=');
    if (eq == std::string::npos) {
      throw ParseError(line_prefix(line_no) + "expected 'key = value'", line_no);
    }
    const std::string key = trim(row.substr(0, eq));
    const std::string value = trim(row.substr(eq + 1));
    if (key.empty()) throw ParseError(line_prefix(line_no) + "empty key", line_no);
    if (cfg.entries_.count(key) != 0) {
      throw ParseError(line_prefix(line_no) + "duplicate key '" + key + "'", line_no);
    }
    cfg.entries_[key] = value;
    cfg.lines_[key] = line_no;
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config '" + path.string() + "'");
  return parse(in);
}

bool KeyValueConfig::has(const std::string& key) const { return entries_.count(key) != 0; }

std::string KeyValueConfig::get_string(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw ParseError("config key '" + key + "' is required");
  return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}

double KeyValueConfig::get_double(const std::string& key) const {
  double v = 0.0;
  if (!parse_double(get_string(key), v)) {
    throw ParseError("config key '" + key + "' must be a number", lines_.at(key));
  }
  return v;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

std::uint64_t KeyValueConfig::get_uint(const std::string& key) const {
  std::uint64_t v = 0;
  if (!parse_uint(get_string(key), v)) {
    throw ParseError("config key '" + key + "' must be a nonnegative integer", lines_.at(key));
  }
  return v;
}

std::uint64_t KeyValueConfig::get_uint(const std::string& key, std::uint64_t fallback) const {
  return has(key) ? get_uint(key) : fallback;
}

std::vector<double> KeyValueConfig::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const auto& part : split(get_string(key), ',')) {
    double v = 0.0;
    if (!parse_double(part, v)) {
      throw ParseError("config key '" + key + "' must be a comma-separated list of numbers",
                       lines_.count(key) ? lines_.at(key) : 0);
    }
    out.push_back(v);
  }
  return out;
}

std::vector<std::size_t> KeyValueConfig::get_sizes(const std::string& key) const {
  std::vector<std::size_t> out;
  for (const auto& part : split(get_string(key), ',')) {
    std::uint64_t v = 0;
    if (!parse_uint(part, v)) {
      throw ParseError("config key '" + key + "' must be a comma-separated list of integers",
                       lines_.count(key) ? lines_.at(key) : 0);
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  entries_[key] = value;
}

void KeyValueConfig::require_known(const std::vector<std::string>& allowed) const {
  const std::set<std::string> known(allowed.begin(), allowed.end());
  for (const auto& [key, value] : entries_) {
    if (known.count(key) == 0) {
      const auto line = lines_.count(key) ? lines_.at(key) : 0;
      throw ParseError("unknown config key '" + key + "'", line);
    }
  }
}

std::string KeyValueConfig::canonical() const {
  std::string text;
  for (const auto& [key, value] : entries_) text += key + "=" + value + "\n";
  return text;
}

std::uint64_t config_hash(std::string_view canonical_text) { return hash_string(canonical_text); }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---- reports ---------------------------------------------------------------

void write_report_csv(std::ostream& out, const SimReport& report) {
  out << "N,n,mse,coverage,mean_ci_length,drop_rate\n";
  for (const auto& c : report.cells) {
    out << c.N << ',' << c.n << ',' << format6(c.mse) << ',' << format6(c.coverage) << ','
        << format6(c.mean_ci_length) << ',' << format6(c.drop_rate) << '\n';
  }
}

std::vector<ReportRow> read_report_csv(std::istream& in) {
  std::vector<ReportRow> rows;
  std::string line;
  std::size_t line_no = 0;
  const auto number = [&](const std::string& field) {
    if (trim(field) == "nan") return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    if (!parse_double(field, v)) throw ParseError(line_prefix(line_no) + "bad number", line_no);
    return v;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || trim(line).empty()) continue;
    const auto f = split(trim(line), ',');
    if (f.size() != 6) throw ParseError(line_prefix(line_no) + "expected 6 fields", line_no);
    ReportRow r;
    r.N = static_cast<std::size_t>(number(f[0]));
    r.n = static_cast<std::size_t>(number(f[1]));
    r.mse = number(f[2]);
    r.coverage = number(f[3]);
    r.mean_ci_length = number(f[4]);
    r.drop_rate = number(f[5]);
    rows.push_back(r);
  }
  return rows;
}

std::string render_metric_svg(const std::vector<ReportRow>& rows, const std::string& metric,
                              const std::string& title) {
  const auto value_of = [&](const ReportRow& r) {
    if (metric == "mse") return r.mse;
    if (metric == "coverage") return r.coverage;
    if (metric == "mean_ci_length") return r.mean_ci_length;
    if (metric == "drop_rate") return r.drop_rate;
    throw std::invalid_argument("unknown metric '" + metric + "'");
  };
  std::map<std::size_t, std::vector<std::pair<double, double>>> series;
  double xmin = std::numeric_limits<double>::infinity();
  double xmax = -xmin;
  double ymin = xmin;
  double ymax = -xmin;
  for (const auto& r : rows) {
    const double v = value_of(r);
    if (!std::isfinite(v)) continue;
    series[r.N].emplace_back(static_cast<double>(r.n), v);
    xmin = std::min(xmin, static_cast<double>(r.n));
    xmax = std::max(xmax, static_cast<double>(r.n));
    ymin = std::min(ymin, v);
    ymax = std::max(ymax, v);
  }
  if (series.empty()) return {};
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  const double width = 640, height = 420, left = 70, right = 140, top = 40, bottom = 50;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  const auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * plot_w; };
  const auto sy = [&](double y) { return top + (ymax - y) / (ymax - ymin) * plot_h; };
  static const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title
      << "</text>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w
      << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
      << top + plot_h << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double yv = ymin + (ymax - ymin) * k / 4.0;
    svg << "<text x=\"" << left - 6 << "\" y=\"" << sy(yv) + 4 << "\" text-anchor=\"end\">"
        << format6(yv) << "</text>\n";
  }
  std::set<double> xticks;
  for (const auto& [N, pts] : series)
    for (const auto& pt : pts) xticks.insert(pt.first);
  for (double xv : xticks) {
    svg << "<text x=\"" << sx(xv) << "\" y=\"" << top + plot_h + 18
        << "\" text-anchor=\"middle\">" << format6(xv) << "</text>\n";
  }
  svg << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 10
      << "\" text-anchor=\"middle\">n</text>\n";
  svg << "<text x=\"16\" y=\"" << top + plot_h / 2 << "\" transform=\"rotate(-90 16 "
      << top + plot_h / 2 << ")\" text-anchor=\"middle\">" << metric << "</text>\n";
  std::size_t color = 0;
  for (auto& [N, pts] : series) {
    std::sort(pts.begin(), pts.end());
    const char* c = kColors[color++ % 8];
    svg << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : pts) svg << sx(x) << ',' << sy(y) << ' ';
    svg << "\"/>\n";
    for (const auto& [x, y] : pts) {
      svg << "<circle cx=\"" << sx(x) << "\" cy=\"" << sy(y) << "\" r=\"3\" fill=\"" << c
          << "\"/>\n";
    }
    const double ly = top + 16.0 * static_cast<double>(color);
    svg << "<line x1=\"" << left + plot_w + 15 << "\" y1=\"" << ly << "\" x2=\""
        << left + plot_w + 35 << "\" y2=\"" << ly << "\" stroke=\"" << c
        << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << left + plot_w + 40 << "\" y=\"" << ly + 4 << "\">N=" << N
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace rsts
