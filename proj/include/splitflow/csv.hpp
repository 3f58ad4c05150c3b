#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

namespace splitflow {

/// Shortest-ish round-trip formatting (%.17g by default).
std::string format_double(double v, int precision = 17);

/// Numeric CSV with a header row. Lines beginning with '#' are comments.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    /// Index of a named column; throws IoError when absent.
    std::size_t column(const std::string& name) const;
};

/// Throws IoError when the file is missing or malformed.
CsvTable read_csv(const std::filesystem::path& path);

class CsvWriter {
public:
    /// Throws IoError when the file cannot be opened.
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header,
              const std::string& comment = {}, int precision = 17);

    void row(std::initializer_list<double> values);
    void row(const std::vector<double>& values);
    void close();

private:
    std::ofstream out_;
    std::filesystem::path path_;
    int precision_;
};

}  // namespace splitflow
