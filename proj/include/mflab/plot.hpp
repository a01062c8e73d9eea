#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace mflab {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  bool dashed = false;
  bool markers = false;  // draw points instead of a polyline
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<Series> series;
};

/// Standalone SVG line plot. Points that cannot be shown (non-finite, or
/// non-positive on a log axis) are skipped. Output depends only on the spec.
/// Throws std::invalid_argument when there is no drawable point.
std::string render_svg(const PlotSpec& spec);

void write_svg(const PlotSpec& spec, const std::filesystem::path& path);

}  // namespace mflab
