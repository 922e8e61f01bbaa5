#pragma once

#include <Eigen/Dense>

#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace qmgp::cli {

enum ExitCode { Ok = 0, Usage = 1, Data = 2, Numerical = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Delimited text with a header row. Empty cells read as NaN.
struct Table {
  std::vector<std::string> header;
  Eigen::MatrixXd values;  // rows x columns

  int col(const std::string& name) const;  // throws DataError when absent
  Eigen::MatrixXd cols(const std::vector<std::string>& names) const;
};

Table read_table(const std::string& path);
void write_table(const std::string& path, const std::vector<std::string>& header,
                 const Eigen::MatrixXd& values);

// 17 significant digits, so the text reads back to the same double. NaN is empty.
std::string num(double v);

// Reads `key = value` lines with optional `[section]` headers into
// `--section.key value` argument pairs. Keys of the map sections (theta,
// prior) become `--section key=value`.
std::vector<std::string> config_args(const std::string& path);

std::vector<std::string> split_list(const std::string& s, char sep = ',');

// Entry point of the qmgp executable; returns the process exit code.
int run(int argc, char** argv);
int run(const std::vector<std::string>& args);

}  // namespace qmgp::cli
