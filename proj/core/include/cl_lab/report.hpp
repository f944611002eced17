#pragma once

#include <string>
#include <vector>

namespace cl_lab {

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  bool points = false;  // scatter instead of polyline
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  bool diagonal = false;  // draw y = x
  std::vector<PlotSeries> series;
};

// Standalone SVG document; non-finite points (and nonpositive ones on log axes) are skipped.
std::string render_svg(const PlotSpec& spec);

struct ReportResult {
  std::vector<std::string> written;
  std::vector<std::string> warnings;
};

// Reads the experiment CSVs found in `dir` and writes summary.md plus one SVG per figure.
// Missing or malformed inputs become warnings and the rest of the report is still produced.
ReportResult write_report(const std::string& dir);

}  // namespace cl_lab
