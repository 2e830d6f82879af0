#include "crl/report.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace crl {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

std::string format_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", value);
  return buf;
}

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Minimal deterministic SVG line chart.
void write_line_plot(const std::string& path, const std::string& title,
                     const std::vector<Series>& series) {
  const double width = 640, height = 400, margin = 50;
  double min_x = 0, max_x = 1, min_y = 0, max_y = 1;
  bool any = false;
  for (const Series& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!any) {
        min_x = max_x = s.x[i];
        min_y = max_y = s.y[i];
        any = true;
      }
      min_x = std::min(min_x, s.x[i]);
      max_x = std::max(max_x, s.x[i]);
      min_y = std::min(min_y, s.y[i]);
      max_y = std::max(max_y, s.y[i]);
    }
  }
  if (max_x == min_x) max_x = min_x + 1;
  if (max_y == min_y) max_y = min_y + 1;
  const auto sx = [&](double v) {
    return margin + (v - min_x) / (max_x - min_x) * (width - 2 * margin);
  };
  const auto sy = [&](double v) {
    return height - margin - (v - min_y) / (max_y - min_y) * (height - 2 * margin);
  };

  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  std::ofstream out(path);
  if (!out) throw ReportError("cannot write plot file: " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
      << title << "</text>\n";
  out << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin
      << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
      << height - margin << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << margin << "\" y=\"" << height - margin + 20
      << "\" font-size=\"11\">" << format_double(min_x) << "</text>\n";
  out << "<text x=\"" << width - margin << "\" y=\"" << height - margin + 20
      << "\" text-anchor=\"end\" font-size=\"11\">" << format_double(max_x) << "</text>\n";
  out << "<text x=\"" << margin - 4 << "\" y=\"" << height - margin
      << "\" text-anchor=\"end\" font-size=\"11\">" << format_double(min_y) << "</text>\n";
  out << "<text x=\"" << margin - 4 << "\" y=\"" << margin
      << "\" text-anchor=\"end\" font-size=\"11\">" << format_double(max_y) << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % 8];
    if (!series[s].x.empty()) {
      out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < series[s].x.size(); ++i) {
        out << format_double(sx(series[s].x[i])) << "," << format_double(sy(series[s].y[i]))
            << " ";
      }
      out << "\"/>\n";
    }
    out << "<text x=\"" << width - margin + 4 << "\" y=\"" << margin + 16.0 * s
        << "\" font-size=\"11\" fill=\"" << color << "\">" << series[s].label << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace

int MetricsTable::column_index(const std::string& column) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == column) return static_cast<int>(i);
  }
  return -1;
}

MetricsTable load_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ReportError("cannot open metrics file: " + path);
  MetricsTable table;
  table.name = std::filesystem::path(path).stem().string();
  std::string line;
  if (!std::getline(in, line)) throw ReportError("metrics file has no header: " + path);
  table.columns = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    table.rows.push_back(split_csv_line(line));
  }
  return table;
}

std::vector<std::string> emit_report(const std::vector<std::string>& metrics_files,
                                     const std::string& output_dir) {
  std::filesystem::create_directories(output_dir);
  std::vector<MetricsTable> tables;
  for (const std::string& path : metrics_files) tables.push_back(load_metrics_csv(path));

  struct PlotSpec {
    const char* column;
    const char* file;
    const char* title;
  };
  static const PlotSpec kPlots[] = {
      {"mean_similarity_f1", "similarity_f1.svg", "critique F1 vs step"},
      {"outcome_accuracy", "outcome_accuracy.svg", "outcome accuracy vs step"},
      {"metarm_mae_vs_oracle", "metarm_mae.svg", "MetaRM MAE vs step"},
  };

  // Validate every required column up front so the error names all of them.
  std::string missing;
  for (const MetricsTable& table : tables) {
    const auto note = [&](const char* column) {
      if (!missing.empty()) missing += ", ";
      missing += table.name + ":" + column;
    };
    if (table.column_index("step") < 0) note("step");
    for (const PlotSpec& plot : kPlots) {
      if (table.column_index(plot.column) < 0) note(plot.column);
    }
  }
  if (!missing.empty()) throw ReportError("metrics files are missing columns: " + missing);

  std::vector<std::string> written;
  for (const PlotSpec& plot : kPlots) {
    std::vector<Series> series;
    for (const MetricsTable& table : tables) {
      const int step_col = table.column_index("step");
      const int y_col = table.column_index(plot.column);
      if (step_col < 0 || y_col < 0) {
        throw ReportError(std::string("metrics file ") + table.name + " is missing column " +
                          (step_col < 0 ? "step" : plot.column));
      }
      Series s;
      s.label = table.name;
      for (const auto& row : table.rows) {
        if (row[y_col].empty()) continue;  // conditional metric absent this step
        s.x.push_back(std::stod(row[step_col]));
        s.y.push_back(std::stod(row[y_col]));
      }
      series.push_back(std::move(s));
    }
    const std::string path = (std::filesystem::path(output_dir) / plot.file).string();
    write_line_plot(path, plot.title, series);
    written.push_back(path);
  }

  const std::string summary_path = (std::filesystem::path(output_dir) / "summary.csv").string();
  std::ofstream summary(summary_path);
  if (!summary) throw ReportError("cannot write summary file: " + summary_path);
  summary << "file,steps,mean_outcome_accuracy,mean_similarity_f1,mean_metarm_mae\n";
  for (const MetricsTable& table : tables) {
    static const char* kCols[] = {"outcome_accuracy", "mean_similarity_f1",
                                  "metarm_mae_vs_oracle"};
    summary << table.name << "," << table.rows.size();
    for (const char* col : kCols) {
      const int idx = table.column_index(col);
      double sum = 0.0;
      int count = 0;
      for (const auto& row : table.rows) {
        if (idx < 0 || row[idx].empty()) continue;
        sum += std::stod(row[idx]);
        ++count;
      }
      summary << ",";
      if (count > 0) summary << format_double(sum / count);
    }
    summary << "\n";
  }
  written.push_back(summary_path);
  return written;
}

}  // namespace crl
