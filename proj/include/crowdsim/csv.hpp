#pragma once

#include <fstream>
#include <iomanip>
#include <stdexcept>
#include <string>
#include <vector>

namespace crowdsim {

// Minimal CSV emitter: one comment line (config hash + seed), a header row,
// then numeric rows.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& comment,
            const std::vector<std::string>& columns)
      : out_(path) {
    if (!out_) throw std::runtime_error("cannot open output file " + path);
    out_ << "# " << comment << "\n";
    for (size_t i = 0; i < columns.size(); ++i)
      out_ << columns[i] << (i + 1 < columns.size() ? "," : "");
    out_ << "\n";
    out_ << std::setprecision(12);
  }

  void row(const std::vector<double>& values) {
    for (size_t i = 0; i < values.size(); ++i)
      out_ << values[i] << (i + 1 < values.size() ? "," : "");
    out_ << "\n";
  }

  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
};

}  // namespace crowdsim
