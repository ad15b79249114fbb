#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedtan/fl/simulator.hpp"

namespace fedtan::metrics {

inline constexpr const char* kCsvHeader =
    "iteration,scheme,train_loss,test_accuracy,cum_bytes,cum_rounds,wall_seconds";

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_csv(const fl::History& history, std::ostream& out) {
  out << kCsvHeader << '\n';
  for (const auto& r : history)
    out << r.iteration << ',' << r.scheme << ',' << format_double(r.train_loss) << ','
        << format_double(r.test_accuracy) << ',' << r.cum_bytes << ',' << r.cum_rounds << ','
        << format_double(r.wall_seconds) << '\n';
}

inline void export_csv(const fl::History& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CsvError("cannot open " + path.string() + " for writing");
  write_csv(history, out);
  out.flush();
  if (!out) throw CsvError("write failed: " + path.string());
}

namespace detail {
inline double to_double(const std::string& s, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') throw CsvError("line " + std::to_string(line) + ": bad number '" + s + "'");
  return v;
}

inline std::uint64_t to_u64(const std::string& s, std::size_t line) {
  char* end = nullptr;
  const auto v = std::strtoull(s.c_str(), &end, 10);
  if (s.empty() || *end != '\0') throw CsvError("line " + std::to_string(line) + ": bad integer '" + s + "'");
  return v;
}
}  // namespace detail

inline fl::History parse_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw CsvError("missing or unexpected header");
  fl::History out;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 7) throw CsvError("line " + std::to_string(n) + ": expected 7 fields");
    fl::HistoryRow r;
    r.iteration = static_cast<int>(detail::to_u64(cells[0], n));
    r.scheme = cells[1];
    r.train_loss = detail::to_double(cells[2], n);
    r.test_accuracy = detail::to_double(cells[3], n);
    r.cum_bytes = detail::to_u64(cells[4], n);
    r.cum_rounds = detail::to_u64(cells[5], n);
    r.wall_seconds = detail::to_double(cells[6], n);
    out.push_back(std::move(r));
  }
  return out;
}

inline fl::History import_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CsvError("cannot open " + path.string());
  return parse_csv(in);
}

}  // namespace fedtan::metrics
