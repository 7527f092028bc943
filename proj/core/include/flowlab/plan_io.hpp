#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "flowlab/measures.hpp"

namespace flowlab {

/// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double v);
double parse_double(const std::string& s);

// Discrete measures and plans: first line "<d>,<k>" (dimension, atom count),
// then one row per atom "x_1..x_d[,y_1..y_d],w".
void write_discrete_csv(std::ostream& out, const DiscreteMeasure& mu);
DiscreteMeasure read_discrete_csv(std::istream& in);
void write_plan_csv(std::ostream& out, const DiscretePlan& plan);
DiscretePlan read_plan_csv(std::istream& in);

/// Plain point tables with a header row ("x_1,...,x_d" unless names are given).
void write_points_csv(std::ostream& out, const Points& pts, const std::vector<std::string>& names = {});
Points read_points_csv(std::istream& in);

std::vector<std::string> split_csv_line(const std::string& line);

void save_text(const std::string& path, const std::string& content);
std::string load_text(const std::string& path);

}  // namespace flowlab
