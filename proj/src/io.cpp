#include "atmle/io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace atmle {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_real(const std::string& s, const std::string& what, long line_no) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0' || errno == ERANGE || !std::isfinite(v)) {
    throw ConfigError("line " + std::to_string(line_no) + ": " + what +
                      " is not a finite number: '" + s + "'");
  }
  return v;
}

int parse_binary(const std::string& s, const std::string& what, long line_no) {
  if (s == "0") return 0;
  if (s == "1") return 1;
  throw ConfigError("line " + std::to_string(line_no) + ": " + what +
                    " must be 0 or 1, got '" + s + "'");
}

}  // namespace

Cohort cohort_from_csv(const std::string& text, double randomization_prob) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("empty cohort CSV");
  const std::vector<std::string> header = split_line(line);
  if (header.size() < 4 || header[0] != "S" || header[1] != "A" || header[2] != "Y") {
    throw ConfigError("cohort CSV header must start with S,A,Y,W1,...");
  }
  bool has_source = header.back() == "source";
  const int d = int(header.size()) - 3 - (has_source ? 1 : 0);
  if (d < 1) throw ConfigError("cohort CSV needs at least one covariate column");
  for (int j = 0; j < d; ++j) {
    const std::string expected = "W" + std::to_string(j + 1);
    if (header[size_t(3 + j)] != expected) {
      throw ConfigError("cohort CSV header column " + std::to_string(4 + j) +
                        " must be " + expected + ", got '" + header[size_t(3 + j)] + "'");
    }
  }

  std::vector<int> study, treatment, source;
  std::vector<double> outcome;
  std::vector<double> covariates;
  long line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> f = split_line(line);
    if (f.size() != header.size()) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " fields, got " +
                        std::to_string(f.size()));
    }
    study.push_back(parse_binary(f[0], "S", line_no));
    treatment.push_back(parse_binary(f[1], "A", line_no));
    outcome.push_back(parse_real(f[2], "Y", line_no));
    for (int j = 0; j < d; ++j) {
      covariates.push_back(parse_real(f[size_t(3 + j)], header[size_t(3 + j)], line_no));
    }
    if (has_source) {
      const std::string& s = f.back();
      errno = 0;
      char* end = nullptr;
      const long v = std::strtol(s.c_str(), &end, 10);
      if (end == s.c_str() || *end != '\0' || errno == ERANGE) {
        throw ConfigError("line " + std::to_string(line_no) +
                          ": source must be an integer, got '" + s + "'");
      }
      source.push_back(int(v));
    }
  }
  const long n = long(study.size());
  if (n == 0) throw ConfigError("cohort CSV has no data rows");

  Cohort c;
  c.study = Eigen::Map<Eigen::VectorXi>(study.data(), n);
  c.treatment = Eigen::Map<Eigen::VectorXi>(treatment.data(), n);
  c.outcome = Eigen::Map<Eigen::VectorXd>(outcome.data(), n);
  c.covariates =
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          covariates.data(), n, d);
  if (has_source) {
    c.source = Eigen::Map<Eigen::VectorXi>(source.data(), n);
  }
  c.randomization_prob = randomization_prob;
  return validate_cohort(std::move(c));
}

std::string cohort_to_csv(const Cohort& cohort) {
  std::ostringstream os;
  const bool with_source = cohort.has_source();
  os << "S,A,Y";
  for (int j = 0; j < cohort.dim(); ++j) os << ",W" << (j + 1);
  if (with_source) os << ",source";
  os << "\n";
  char buf[40];
  for (long i = 0; i < cohort.rows(); ++i) {
    os << cohort.study[i] << ',' << cohort.treatment[i];
    std::snprintf(buf, sizeof(buf), "%.17g", cohort.outcome[i]);
    os << ',' << buf;
    for (int j = 0; j < cohort.dim(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", cohort.covariates(i, j));
      os << ',' << buf;
    }
    if (with_source) os << ',' << cohort.source[i];
    os << '\n';
  }
  return os.str();
}

Cohort read_cohort_csv(const std::string& path, double randomization_prob) {
  return cohort_from_csv(read_text_file(path), randomization_prob);
}

void write_cohort_csv(const Cohort& cohort, const std::string& path) {
  write_text_file(path, cohort_to_csv(cohort));
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::runtime, "cannot write file: " + path);
  out << text;
  if (!out) throw Error(ErrorKind::runtime, "failed writing file: " + path);
}

}  // namespace atmle
