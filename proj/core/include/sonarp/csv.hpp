#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace sonarp {

/// Shortest round-trippable decimal form ("%.9g" style, "nan" for NaN) so
/// repeated runs produce byte-identical files.
std::string format_number(double v);

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
    void row(const std::vector<std::string>& cells);
    void row(const std::vector<double>& cells);
    std::size_t columns() const noexcept { return columns_; }

private:
    std::ofstream out_;
    std::size_t columns_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column index by name; throws DataError when absent.
    std::size_t column(const std::string& name) const;
};

/// Comma-separated, no quoting. Ragged rows raise ParseError with the line.
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace sonarp
