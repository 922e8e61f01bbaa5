#include "qmgp/cli.hpp"

#include <boost/tokenizer.hpp>
#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace qmgp::cli {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> fields(const std::string& line, char delim) {
  using Sep = boost::escaped_list_separator<char>;
  boost::tokenizer<Sep> tok(line, Sep('\\', delim, '"'));
  std::vector<std::string> out;
  for (const auto& f : tok) out.push_back(trim(f));
  return out;
}

}  // namespace

int Table::col(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  throw DataError("column '" + name + "' not found");
}

Eigen::MatrixXd Table::cols(const std::vector<std::string>& names) const {
  Eigen::MatrixXd out(values.rows(), static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < names.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = values.col(col(names[i]));
  return out;
}

Table read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  const char delim = line.find('\t') != std::string::npos && line.find(',') == std::string::npos ? '\t' : ',';
  Table t;
  t.header = fields(line, delim);
  const auto nc = t.header.size();
  std::vector<double> data;
  long lineno = 1;
  long rows = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string> f;
    try {
      f = fields(line, delim);
    } catch (const boost::escaped_list_error& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (f.size() != nc)
      throw DataError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(nc) +
                      " fields, found " + std::to_string(f.size()));
    for (std::size_t c = 0; c < nc; ++c) {
      const std::string& s = f[c];
      if (s.empty() || s == "NA" || s == "nan" || s == "NaN") {
        data.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      double v = 0;
      const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw DataError(path + ":" + std::to_string(lineno) + ": column '" + t.header[c] +
                        "' is not a number: '" + s + "'");
      data.push_back(v);
    }
    ++rows;
  }
  t.values = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      data.data(), rows, static_cast<Eigen::Index>(nc));
  return t;
}

std::string num(double v) {
  if (std::isnan(v)) return "";
  return fmt::format("{:.17g}", v);
}

void write_table(const std::string& path, const std::vector<std::string>& header,
                 const Eigen::MatrixXd& values) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << '\n';
  std::string line;
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    line.clear();
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      if (c) line += ',';
      line += num(values(r, c));
    }
    out << line << '\n';
  }
  if (!out) throw DataError("error writing " + path);
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!trim(item).empty()) out.push_back(trim(item));
  return out;
}

std::vector<std::string> config_args(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  std::vector<std::string> args;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    line = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw UsageError(path + ":" + std::to_string(lineno) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(path + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (!section.empty() && key.find('.') == std::string::npos) key = section + "." + key;
    const auto dot = key.find('.');
    const std::string head = key.substr(0, dot);
    if (head == "theta" || head == "prior") {
      args.push_back("--" + head);
      args.push_back(key.substr(dot + 1) + "=" + value);
    } else {
      args.push_back("--" + key);
      args.push_back(value);
    }
  }
  return args;
}

}  // namespace qmgp::cli
