#include "cgp/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "cgp/errors.hpp"

namespace cgp {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        // trim surrounding whitespace
        std::size_t b = cell.find_first_not_of(" \t\r");
        std::size_t e = cell.find_last_not_of(" \t\r");
        cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

}  // namespace

int CsvTable::column(const std::string& name) const {
    for (std::size_t c = 0; c < header.size(); ++c)
        if (header[c] == name) return static_cast<int>(c);
    return -1;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open CSV file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("CSV file is empty: " + path);
    CsvTable t;
    t.header = split_line(line);
    if (t.header.empty()) throw DataError("CSV header row is empty: " + path);

    std::vector<std::vector<double>> rows;
    long lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = split_line(line);
        if (cells.size() != t.header.size())
            throw DataError(path + ": row " + std::to_string(lineno) + " has " +
                                std::to_string(cells.size()) + " cells, expected " +
                                std::to_string(t.header.size()),
                            lineno - 2);
        std::vector<double> row(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c) {
            try {
                std::size_t used = 0;
                row[c] = std::stod(cells[c], &used);
                if (used != cells[c].size()) throw std::invalid_argument("trailing");
            } catch (const std::exception&) {
                throw DataError(path + ": non-numeric cell at row " + std::to_string(lineno) +
                                    ", column " + t.header[c] + " ('" + cells[c] + "')",
                                lineno - 2);
            }
        }
        rows.push_back(std::move(row));
    }
    t.values.resize(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(t.header.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < t.header.size(); ++c)
            t.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    return t;
}

std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Eigen::MatrixXd& values) {
    CsvWriter w(path, header);
    std::vector<std::string> cells(header.size());
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
        for (Eigen::Index c = 0; c < values.cols(); ++c)
            cells[static_cast<std::size_t>(c)] = format_double(values(r, c));
        w.row(cells);
    }
}

struct CsvWriter::Impl {
    std::ofstream out;
};

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : impl_(new Impl), width_(header.size()) {
    impl_->out.open(path);
    if (!impl_->out) {
        delete impl_;
        throw DataError("cannot open output file: " + path);
    }
    for (std::size_t c = 0; c < header.size(); ++c)
        impl_->out << (c ? "," : "") << header[c];
    impl_->out << "\n";
}

CsvWriter::~CsvWriter() { delete impl_; }

void CsvWriter::row(const std::vector<std::string>& cells) {
    if (cells.size() != width_) throw DataError("CSV row width mismatch");
    for (std::size_t c = 0; c < cells.size(); ++c)
        impl_->out << (c ? "," : "") << cells[c];
    impl_->out << "\n";
}

}  // namespace cgp
