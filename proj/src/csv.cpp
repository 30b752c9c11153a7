#include "mlamp/csv.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "mlamp/errors.hpp"

namespace mlamp {

CsvTable::CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

void CsvTable::meta(std::string key, std::string value) {
  meta_.emplace_back(std::move(key), std::move(value));
}

void CsvTable::run_meta(std::string key, std::string value) {
  run_meta_.emplace_back(std::move(key), std::move(value));
}

void CsvTable::add_row(std::vector<std::string> cells) {
  if (cells.size() != columns_.size()) {
    throw std::logic_error("csv row has " + std::to_string(cells.size()) + " cells, expected " +
                           std::to_string(columns_.size()));
  }
  rows_.push_back(std::move(cells));
}

std::size_t CsvTable::column_index(const std::string& name) const {
  for (std::size_t k = 0; k < columns_.size(); ++k) {
    if (columns_[k] == name) return k;
  }
  throw std::out_of_range("no csv column " + name);
}

std::string CsvTable::render(bool timestamp) const {
  std::string out;
  if (timestamp) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    out += "# timestamp=";
    out += buf;
    out += '\n';
    for (const auto& [k, v] : run_meta_) out += "# " + k + "=" + v + "\n";
  }
  for (const auto& [k, v] : meta_) out += "# " + k + "=" + v + "\n";
  auto line = [&out](const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (k) out += ',';
      out += cells[k];
    }
    out += '\n';
  };
  line(columns_);
  for (const auto& r : rows_) line(r);
  return out;
}

std::string format_number(double v) {
  if (!std::isfinite(v)) return kMissing;
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_number(std::optional<double> v) {
  return v ? format_number(*v) : kMissing;
}

std::string format_bool(bool v) { return v ? "1" : "0"; }

void write_file_atomic(const std::string& path, const std::string& text) {
  const std::filesystem::path target(path);
  const auto status = std::filesystem::status(target);
  if (std::filesystem::exists(status) && !std::filesystem::is_regular_file(status)) {
    // devices and pipes are written in place, never replaced
    std::ofstream f(target, std::ios::binary);
    if (!f) throw ConfigError("cannot open " + path + " for writing");
    f << text;
    if (!f) throw ConfigError("failed writing " + path);
    return;
  }
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::filesystem::path tmp = target.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw ConfigError("cannot open " + tmp.string() + " for writing");
    f << text;
    if (!f) throw ConfigError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, target);
}

}  // namespace mlamp
