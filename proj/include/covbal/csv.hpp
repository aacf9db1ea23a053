#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace covbal {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(std::string_view name) const;  // -1 when absent
};

// RFC 4180: quoted fields may hold commas, newlines, and doubled quotes.
// Accepts CRLF and LF line endings; the header row is required.
CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

void write_csv(std::ostream& out, const CsvTable& table);

}  // namespace covbal
