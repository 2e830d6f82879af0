#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace crl {

struct ReportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MetricsTable {
  std::string name;  // derived from the file name
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  int column_index(const std::string& column) const;  // -1 when absent
};

MetricsTable load_metrics_csv(const std::string& path);

// Renders per-regime training curves (critique F1, outcome accuracy, MetaRM
// MAE vs step) as SVG files plus a summary CSV of per-file column means.
// Returns the paths written.
std::vector<std::string> emit_report(const std::vector<std::string>& metrics_files,
                                     const std::string& output_dir);

}  // namespace crl
