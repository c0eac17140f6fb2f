#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace cgp {

// minimal numeric CSV: header row + double body, errors carry row/column
struct CsvTable {
    std::vector<std::string> header;
    Eigen::MatrixXd values;  // rows x header.size()

    int column(const std::string& name) const;  // -1 if absent
};

CsvTable read_csv(const std::string& path);

// shortest round-trip formatting so emitted files re-read bit-exactly
std::string format_double(double x);

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Eigen::MatrixXd& values);

// row-wise writer for heterogeneous tables
class CsvWriter {
  public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header);
    ~CsvWriter();
    CsvWriter(const CsvWriter&) = delete;
    CsvWriter& operator=(const CsvWriter&) = delete;

    void row(const std::vector<std::string>& cells);

  private:
    struct Impl;
    Impl* impl_;
    std::size_t width_;
};

}  // namespace cgp
