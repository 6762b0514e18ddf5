#pragma once

#include <string>
#include <vector>

namespace qnls {

// Writes to a sibling temp file, then renames over the target.
void write_file_atomic(const std::string& path, const std::string& contents);
void ensure_directory(const std::string& path);
std::string read_file(const std::string& path);
std::string utc_timestamp();

// Minimal CSV table with shortest round-trip number formatting.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}
  CsvTable& row();
  CsvTable& cell(const std::string& v);
  CsvTable& cell(double v);
  CsvTable& cell(long long v);
  CsvTable& cell(int v) { return cell(static_cast<long long>(v)); }
  CsvTable& cell(unsigned long long v) { return cell(static_cast<long long>(v)); }
  CsvTable& cell(std::size_t v) { return cell(static_cast<long long>(v)); }
  std::string str() const;
  std::size_t rows() const { return rows_.size(); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

std::string format_double(double v);

}  // namespace qnls
