#pragma once

#include <string>
#include <vector>

#include "epmbench/bench.hpp"

namespace epmbench::report {

std::string to_json(const std::vector<bench::BenchmarkReport>& reports);
std::vector<bench::BenchmarkReport> from_json(const std::string& text, const std::string& what = "report");

void write_reports(const std::string& path, const std::vector<bench::BenchmarkReport>& reports);
std::vector<bench::BenchmarkReport> read_reports(const std::string& path);

/// One row per (scene, method): scene,method,rpmd,windows,valid_pixels.
std::string summary_csv(const std::vector<bench::BenchmarkReport>& reports);
/// One row per scored window.
std::string windows_csv(const std::vector<bench::BenchmarkReport>& reports);

/// Grouped bar chart, one group per scene and one bar per method. Every bar carries
/// data-scene, data-method and data-value attributes holding the exact CSV values.
std::string bar_chart_svg(const std::vector<bench::BenchmarkReport>& reports, const std::string& title = "RPMD");

struct Bar {
  std::string scene;
  std::string method;
  double value = 0.0;
};

/// Recovers the bars from an SVG written by bar_chart_svg.
std::vector<Bar> parse_svg_bars(const std::string& svg);
/// Recovers the bars from summary_csv output.
std::vector<Bar> parse_summary_csv(const std::string& csv);

/// Exact shortest decimal form that parses back to the same double.
std::string format_number(double v);

}  // namespace epmbench::report
