#include "flowlab/plan_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "flowlab/error.hpp"

namespace flowlab {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  std::size_t e = s.find_last_not_of(" \t\r");
  require(b != std::string::npos, "csv: empty field");
  const char* first = s.data() + b;
  const char* last = s.data() + e + 1;
  if (*first == '+') ++first;
  double v = 0.0;
  auto res = std::from_chars(first, last, v);
  require(res.ec == std::errc() && res.ptr == last, "csv: bad number '" + s + "'");
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r' && c != '\n') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

namespace {

std::pair<Eigen::Index, Eigen::Index> read_header(std::istream& in) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "csv: missing header");
  auto f = split_csv_line(line);
  require(f.size() == 2, "csv: header must be '<d>,<k>'");
  const double d = parse_double(f[0]);
  const double k = parse_double(f[1]);
  require(d >= 1 && k >= 1 && d == std::floor(d) && k == std::floor(k), "csv: header must be '<d>,<k>'");
  return {static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(k)};
}

Mat read_rows(std::istream& in, Eigen::Index k, Eigen::Index cols) {
  Mat rows(cols, k);
  std::string line;
  Eigen::Index r = 0;
  while (r < k && std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto f = split_csv_line(line);
    require(static_cast<Eigen::Index>(f.size()) == cols,
            "csv: row " + std::to_string(r + 1) + " has " + std::to_string(f.size()) + " fields, expected " +
                std::to_string(cols));
    for (Eigen::Index c = 0; c < cols; ++c) rows(c, r) = parse_double(f[static_cast<std::size_t>(c)]);
    ++r;
  }
  require(r == k, "csv: expected " + std::to_string(k) + " rows, found " + std::to_string(r));
  return rows;
}

void write_row(std::ostream& out, const Vec& a, const Vec* b, double w) {
  for (Eigen::Index i = 0; i < a.size(); ++i) out << format_double(a[i]) << ',';
  if (b)
    for (Eigen::Index i = 0; i < b->size(); ++i) out << format_double((*b)[i]) << ',';
  out << format_double(w) << '\n';
}

}  // namespace

void write_discrete_csv(std::ostream& out, const DiscreteMeasure& mu) {
  out << mu.dim() << ',' << mu.size() << '\n';
  for (Eigen::Index k = 0; k < mu.size(); ++k) write_row(out, mu.point(k), nullptr, mu.weight(k));
}

DiscreteMeasure read_discrete_csv(std::istream& in) {
  auto [d, k] = read_header(in);
  Mat rows = read_rows(in, k, d + 1);
  return DiscreteMeasure(rows.topRows(d), rows.row(d).transpose());
}

void write_plan_csv(std::ostream& out, const DiscretePlan& plan) {
  require(plan.dim_x() == plan.dim_y(), "write_plan_csv: plan spaces must share a dimension");
  out << plan.dim_x() << ',' << plan.size() << '\n';
  for (Eigen::Index k = 0; k < plan.size(); ++k) {
    const Vec y = plan.y().col(k);
    write_row(out, plan.x().col(k), &y, plan.weights()[k]);
  }
}

DiscretePlan read_plan_csv(std::istream& in) {
  auto [d, k] = read_header(in);
  Mat rows = read_rows(in, k, 2 * d + 1);
  return DiscretePlan(rows.topRows(d), rows.middleRows(d, d), rows.row(2 * d).transpose());
}

void write_points_csv(std::ostream& out, const Points& pts, const std::vector<std::string>& names) {
  const Eigen::Index d = pts.rows();
  require(names.empty() || static_cast<Eigen::Index>(names.size()) == d, "write_points_csv: name count mismatch");
  for (Eigen::Index i = 0; i < d; ++i) {
    if (i) out << ',';
    out << (names.empty() ? "x_" + std::to_string(i + 1) : names[static_cast<std::size_t>(i)]);
  }
  out << '\n';
  for (Eigen::Index j = 0; j < pts.cols(); ++j) {
    for (Eigen::Index i = 0; i < d; ++i) {
      if (i) out << ',';
      out << format_double(pts(i, j));
    }
    out << '\n';
  }
}

Points read_points_csv(std::istream& in) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "csv: missing header");
  const auto d = static_cast<Eigen::Index>(split_csv_line(line).size());
  std::vector<double> vals;
  Eigen::Index n = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto f = split_csv_line(line);
    require(static_cast<Eigen::Index>(f.size()) == d, "csv: ragged row " + std::to_string(n + 1));
    for (const auto& s : f) vals.push_back(parse_double(s));
    ++n;
  }
  Points out(d, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < d; ++i) out(i, j) = vals[static_cast<std::size_t>(j * d + i)];
  return out;
}

void save_text(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  require(f.good(), "cannot open '" + path + "' for writing");
  f << content;
  require(f.good(), "write failed for '" + path + "'");
}

std::string load_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "cannot open '" + path + "'");
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

}  // namespace flowlab
