#include "epmbench/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

#include <json.hpp>

namespace epmbench::report {

using bench::BenchmarkReport;
using bench::WindowScore;
using nlohmann::json;

std::string format_number(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

namespace {

double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw Error(ErrorCode::Parse, what + ": bad number '" + s + "'");
  return v;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  return out;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string xml_unescape(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '&') {
      out += s[i];
      continue;
    }
    static const std::pair<const char*, char> ents[] = {{"&amp;", '&'}, {"&lt;", '<'}, {"&gt;", '>'}, {"&quot;", '"'}};
    bool done = false;
    for (auto [name, ch] : ents) {
      std::size_t n = std::char_traits<char>::length(name);
      if (s.compare(i, n, name) == 0) {
        out += ch;
        i += n - 1;
        done = true;
        break;
      }
    }
    if (!done) out += '&';
  }
  return out;
}

}  // namespace

std::string to_json(const std::vector<BenchmarkReport>& reports) {
  json arr = json::array();
  for (const auto& r : reports) {
    json params = json::array();
    for (const auto& [k, v] : r.parameters) params.push_back({k, v});
    json windows = json::array();
    for (const auto& w : r.windows) {
      windows.push_back({{"start_us", w.window.start},
                         {"length_us", w.window.length},
                         {"rpmd", w.rpmd},
                         {"log_prob", w.log_prob},
                         {"log_prob_opt", w.log_prob_opt},
                         {"valid", w.valid},
                         {"events", w.events}});
    }
    arr.push_back({{"scene", r.scene},
                   {"method", r.method},
                   {"parameters", params},
                   {"aggregate_rpmd", r.aggregate},
                   {"valid_pixels", r.total_valid()},
                   {"windows", windows}});
  }
  return json{{"format", "epmbench-report"}, {"version", 1}, {"reports", arr}}.dump(2) + "\n";
}

std::vector<BenchmarkReport> from_json(const std::string& text, const std::string& what) {
  try {
    json j = json::parse(text);
    if (j.value("format", "") != "epmbench-report") throw Error(ErrorCode::BadMagic, what + ": not a benchmark report");
    if (j.value("version", 0) != 1) throw Error(ErrorCode::BadVersion, what + ": unsupported report version");
    std::vector<BenchmarkReport> out;
    for (const auto& r : j.at("reports")) {
      BenchmarkReport b;
      b.scene = r.at("scene").get<std::string>();
      b.method = r.at("method").get<std::string>();
      for (const auto& p : r.at("parameters")) b.parameters.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());
      b.aggregate = r.at("aggregate_rpmd").get<double>();
      for (const auto& w : r.at("windows")) {
        WindowScore s;
        s.window = {w.at("start_us").get<Timestamp>(), w.at("length_us").get<Timestamp>()};
        s.rpmd = w.at("rpmd").get<double>();
        s.log_prob = w.at("log_prob").get<double>();
        s.log_prob_opt = w.at("log_prob_opt").get<double>();
        s.valid = w.at("valid").get<std::size_t>();
        s.events = w.at("events").get<std::size_t>();
        b.windows.push_back(s);
      }
      out.push_back(std::move(b));
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, what + ": " + e.what());
  }
}

void write_reports(const std::string& path, const std::vector<BenchmarkReport>& reports) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << to_json(reports);
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path);
}

std::vector<BenchmarkReport> read_reports(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str(), path);
}

std::string summary_csv(const std::vector<BenchmarkReport>& reports) {
  std::string out = "scene,method,rpmd,windows,valid_pixels\n";
  for (const auto& r : reports) {
    out += csv_field(r.scene) + "," + csv_field(r.method) + "," + format_number(r.aggregate) + "," +
           std::to_string(r.windows.size()) + "," + std::to_string(r.total_valid()) + "\n";
  }
  return out;
}

std::string windows_csv(const std::vector<BenchmarkReport>& reports) {
  std::string out = "scene,method,start_us,length_us,rpmd,log_prob,log_prob_opt,valid,events\n";
  for (const auto& r : reports) {
    for (const auto& w : r.windows) {
      out += csv_field(r.scene) + "," + csv_field(r.method) + "," + std::to_string(w.window.start) + "," +
             std::to_string(w.window.length) + "," + format_number(w.rpmd) + "," + format_number(w.log_prob) + "," +
             format_number(w.log_prob_opt) + "," + std::to_string(w.valid) + "," + std::to_string(w.events) + "\n";
    }
  }
  return out;
}

std::vector<Bar> parse_summary_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  if (line.rfind("scene,method,rpmd", 0) != 0) throw Error(ErrorCode::Parse, "summary CSV: bad header");
  std::vector<Bar> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = csv_split(line);
    if (f.size() != 5) throw Error(ErrorCode::Parse, "summary CSV: expected 5 fields");
    out.push_back({f[0], f[1], parse_double(f[2], "summary CSV")});
  }
  return out;
}

std::string bar_chart_svg(const std::vector<BenchmarkReport>& reports, const std::string& title) {
  // Scenes and methods keep first-appearance order.
  std::vector<std::string> scenes, methods;
  for (const auto& r : reports) {
    if (std::find(scenes.begin(), scenes.end(), r.scene) == scenes.end()) scenes.push_back(r.scene);
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
  }
  double vmax = 0.0;
  for (const auto& r : reports) {
    if (std::isfinite(r.aggregate)) vmax = std::max(vmax, r.aggregate);
  }
  if (vmax <= 0.0) vmax = 1.0;

  const double bar_w = 18.0, gap = 24.0, left = 60.0, top = 40.0, plot_h = 240.0;
  const double group_w = bar_w * std::max<std::size_t>(methods.size(), 1) + gap;
  const double width = left + group_w * std::max<std::size_t>(scenes.size(), 1) + 160.0;
  const double height = top + plot_h + 80.0;
  static const char* palette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3",
                                  "#937860", "#da8bc3", "#8c8c8c", "#ccb974", "#64b5cd"};

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  os << "<text x=\"" << left << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << xml_escape(title)
     << "</text>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << width - 150 << "\" y2=\"" << top + plot_h
     << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << left - 6 << "\" y=\"" << top + 4 << "\" text-anchor=\"end\" font-size=\"10\">"
     << format_number(vmax) << "</text>\n";
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    double gx = left + gap / 2 + group_w * s;
    for (std::size_t m = 0; m < methods.size(); ++m) {
      auto it = std::find_if(reports.begin(), reports.end(),
                             [&](const BenchmarkReport& r) { return r.scene == scenes[s] && r.method == methods[m]; });
      if (it == reports.end()) continue;
      double v = it->aggregate;
      double h = std::isfinite(v) ? std::clamp(v / vmax, 0.0, 1.0) * plot_h : 0.0;
      os << "<rect class=\"bar\" data-scene=\"" << xml_escape(scenes[s]) << "\" data-method=\""
         << xml_escape(methods[m]) << "\" data-value=\"" << format_number(v) << "\" x=\"" << gx + bar_w * m
         << "\" y=\"" << top + plot_h - h << "\" width=\"" << bar_w - 2 << "\" height=\"" << h << "\" fill=\""
         << palette[m % 10] << "\"/>\n";
    }
    os << "<text x=\"" << gx + bar_w * methods.size() / 2 << "\" y=\"" << top + plot_h + 16
       << "\" text-anchor=\"middle\" font-size=\"11\">" << xml_escape(scenes[s]) << "</text>\n";
  }
  for (std::size_t m = 0; m < methods.size(); ++m) {
    double ly = top + 14.0 * m;
    os << "<rect x=\"" << width - 140 << "\" y=\"" << ly << "\" width=\"10\" height=\"10\" fill=\"" << palette[m % 10]
       << "\"/><text x=\"" << width - 125 << "\" y=\"" << ly + 9 << "\" font-size=\"11\">" << xml_escape(methods[m])
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::vector<Bar> parse_svg_bars(const std::string& svg) {
  static const std::regex bar(
      "<rect class=\"bar\" data-scene=\"([^\"]*)\" data-method=\"([^\"]*)\" data-value=\"([^\"]*)\"");
  std::vector<Bar> out;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), bar); it != std::sregex_iterator(); ++it) {
    out.push_back({xml_unescape((*it)[1]), xml_unescape((*it)[2]), parse_double((*it)[3], "svg")});
  }
  return out;
}

}  // namespace epmbench::report
