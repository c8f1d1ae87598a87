#pragma once

#include <initializer_list>
#include <string>
#include <vector>

namespace proxnn {

/// Writes `content` to `path` through a temporary file and a rename.
void write_file_atomic(const std::string& path, const std::string& content);
/// Renames a finished temporary file onto its destination.
void commit_file(const std::string& tmp, const std::string& path);
std::string read_file(const std::string& path);

/// Shortest round-trip formatting with 17 significant digits.
std::string format_real(double v);

/// Column-stable CSV table; numbers are printed with 17 significant digits.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header);

    void add_row(std::initializer_list<double> values);
    void add_row(const std::vector<std::string>& cells);
    std::size_t rows() const { return rows_.size(); }
    std::string str() const;
    void save(const std::string& path) const { write_file_atomic(path, str()); }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

}  // namespace proxnn
