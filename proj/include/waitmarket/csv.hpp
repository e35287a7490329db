#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>
#include <variant>
#include <vector>

#include "waitmarket/error.hpp"

namespace waitmarket::csv {

// 17 significant digits, '.' separator, independent of the global locale.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

using Cell = std::variant<double, long long, std::string>;

inline std::string format_cell(const Cell& c) {
  if (const double* d = std::get_if<double>(&c)) return format_double(*d);
  if (const long long* i = std::get_if<long long>(&c)) return std::to_string(*i);
  return std::get<std::string>(c);
}

class Table {
 public:
  explicit Table(std::vector<std::string> header) : header_(std::move(header)) {}

  void add(std::vector<Cell> row) {
    if (row.size() != header_.size()) fail(ErrorKind::argument, "csv row width differs from header");
    rows_.push_back(std::move(row));
  }

  std::size_t rows() const { return rows_.size(); }

  std::string str() const {
    std::string out;
    append_line(out, header_);
    std::vector<std::string> cells;
    for (const auto& row : rows_) {
      cells.clear();
      for (const auto& c : row) cells.push_back(format_cell(c));
      append_line(out, cells);
    }
    return out;
  }

 private:
  static void append_line(std::string& out, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  }

  std::vector<std::string> header_;
  std::vector<std::vector<Cell>> rows_;
};

// Writes to a sibling temporary file and renames it over the target.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::config, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) fail(ErrorKind::config, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::config, "cannot rename " + tmp.string() + ": " + ec.message());
}

inline void write(const std::filesystem::path& path, const Table& t) { write_atomic(path, t.str()); }

}  // namespace waitmarket::csv
