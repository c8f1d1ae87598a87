#include "proxnn/csv.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "proxnn/errors.hpp"

namespace proxnn {

void commit_file(const std::string& tmp, const std::string& path)
{
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        throw Error("cannot move '" + tmp + "' to '" + path + "'");
    }
}

void write_file_atomic(const std::string& path, const std::string& content)
{
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open '" + tmp + "' for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error("write failed for '" + tmp + "'");
    }
    commit_file(tmp, path);
}

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string format_real(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

void CsvTable::add_row(std::initializer_list<double> values)
{
    std::vector<std::string> cells;
    for (double v : values) cells.push_back(format_real(v));
    add_row(cells);
}

void CsvTable::add_row(const std::vector<std::string>& cells)
{
    if (cells.size() != header_.size()) throw ShapeError("csv: row has " + std::to_string(cells.size()) +
                                                         " cells, header has " + std::to_string(header_.size()));
    rows_.push_back(cells);
}

std::string CsvTable::str() const
{
    std::string out;
    auto emit = [&out](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out += ',';
            out += cells[i];
        }
        out += '\n';
    };
    emit(header_);
    for (const auto& r : rows_) emit(r);
    return out;
}

}  // namespace proxnn
