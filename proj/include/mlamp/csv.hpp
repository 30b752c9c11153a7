#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mlamp {

/// In-memory CSV table: "# key=value" metadata lines, a header row and data
/// rows. Rendered in one piece so a failed run leaves no partial file.
class CsvTable {
public:
  explicit CsvTable(std::vector<std::string> columns);

  void meta(std::string key, std::string value);
  /// Metadata describing the run environment (thread count and the like),
  /// printed next to the timestamp and suppressed with it.
  void run_meta(std::string key, std::string value);
  void add_row(std::vector<std::string> cells);

  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }
  std::size_t column_index(const std::string& name) const;

  /// The `timestamp` line and run metadata are emitted only when requested.
  std::string render(bool timestamp) const;

private:
  std::vector<std::string> columns_;
  std::vector<std::pair<std::string, std::string>> meta_;
  std::vector<std::pair<std::string, std::string>> run_meta_;
  std::vector<std::vector<std::string>> rows_;
};

inline const std::string kMissing = "NA";

/// Shortest round-trip representation; NA for non-finite values.
std::string format_number(double v);
std::string format_number(std::optional<double> v);
std::string format_bool(bool v);

/// Writes text to path via a temporary file and a rename. Existing
/// non-regular files (devices, pipes) are written in place.
void write_file_atomic(const std::string& path, const std::string& text);

}  // namespace mlamp
