#include "reach/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "reach/config.hpp"
#include "reach/errors.hpp"

namespace reach {

namespace fs = std::filesystem;

namespace {

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string round_trip(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string mm_label(double metres) { return fmt("%g", metres * 1000.0) + "mm"; }

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double to_number(const std::string& s, const fs::path& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(path.string() + ": bad number '" + s + "'");
  }
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  return in;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

// "nice" tick step covering span with about n intervals
double tick_step(double span, int n) {
  const double raw = span / n;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
    if (raw <= m * mag) return m * mag;
  }
  return 10.0 * mag;
}

}  // namespace

std::string render_curves(const std::vector<Series>& series, const PlotSpec& spec) {
  if (series.empty()) throw UsageError("render_curves needs at least one series");
  const double left = 80, right = 20, top = 40, bottom = 60;
  const double pw = spec.width - left - right;
  const double ph = spec.height - top - bottom;

  double x_max = 0.0, y_lo = INFINITY, y_hi = -INFINITY;
  for (const auto& s : series) {
    for (const auto& p : s.points) {
      x_max = std::max(x_max, static_cast<double>(p.timestep));
      y_lo = std::min(y_lo, p.mean - p.std);
      y_hi = std::max(y_hi, p.mean + p.std);
    }
  }
  if (!std::isfinite(y_lo)) {
    y_lo = -1.0;
    y_hi = 0.0;
  }
  if (y_hi - y_lo < 1e-12) {
    y_lo -= 0.5;
    y_hi += 0.5;
  }
  const double pad = 0.05 * (y_hi - y_lo);
  y_lo -= pad;
  y_hi += pad;
  if (x_max <= 0.0) x_max = 1.0;

  auto sx = [&](double x) { return left + pw * x / x_max; };
  auto sy = [&](double y) { return top + ph * (y_hi - y) / (y_hi - y_lo); };
  auto pt = [&](double x, double y) { return fmt("%.2f", sx(x)) + "," + fmt("%.2f", sy(y)); };

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  o << "<!-- data\nseries,timestep,mean,std,seeds\n";
  for (const auto& s : series) {
    for (const auto& p : s.points) {
      o << s.label << "," << p.timestep << "," << round_trip(p.mean) << "," << round_trip(p.std) << ","
        << p.seeds << "\n";
    }
  }
  o << "-->\n";
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << spec.width << "\" height=\"" << spec.height
    << "\" viewBox=\"0 0 " << spec.width << " " << spec.height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!spec.title.empty()) {
    o << "<text x=\"" << fmt("%.2f", left + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
      << xml_escape(spec.title) << "</text>\n";
  }

  // axes and ticks
  o << "<g stroke=\"#444\" fill=\"none\">\n";
  o << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph << "\"/>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph << "\"/>\n";
  o << "</g>\n<g fill=\"#444\">\n";
  const double xs = tick_step(x_max, 5);
  for (double x = 0.0; x <= x_max + 1e-9; x += xs) {
    o << "<text x=\"" << fmt("%.2f", sx(x)) << "\" y=\"" << fmt("%.2f", top + ph + 18)
      << "\" text-anchor=\"middle\">" << fmt("%g", x) << "</text>\n";
  }
  const double ys = tick_step(y_hi - y_lo, 5);
  for (double y = std::ceil(y_lo / ys) * ys; y <= y_hi + 1e-12; y += ys) {
    const double yy = std::abs(y) < ys * 1e-9 ? 0.0 : y;
    o << "<text x=\"" << left - 6 << "\" y=\"" << fmt("%.2f", sy(yy) + 4) << "\" text-anchor=\"end\">"
      << fmt("%g", yy) << "</text>\n";
    o << "<line x1=\"" << left << "\" y1=\"" << fmt("%.2f", sy(yy)) << "\" x2=\"" << left + pw << "\" y2=\""
      << fmt("%.2f", sy(yy)) << "\" stroke=\"#eee\"/>\n";
  }
  o << "<text x=\"" << fmt("%.2f", left + pw / 2) << "\" y=\"" << spec.height - 16
    << "\" text-anchor=\"middle\">" << xml_escape(spec.x_label) << "</text>\n";
  o << "<text transform=\"translate(18," << fmt("%.2f", top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
    << xml_escape(spec.y_label) << " (rolling mean, window " << spec.smoothing_window << ")</text>\n";
  o << "</g>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* color = kPalette[i % std::size(kPalette)];
    if (s.points.empty()) continue;
    o << "<polygon fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
    for (const auto& p : s.points) o << pt(static_cast<double>(p.timestep), p.mean + p.std) << " ";
    for (auto it = s.points.rbegin(); it != s.points.rend(); ++it) {
      o << pt(static_cast<double>(it->timestep), it->mean - it->std) << (it + 1 == s.points.rend() ? "" : " ");
    }
    o << "\"/>\n";
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < s.points.size(); ++k) {
      o << (k ? " " : "") << pt(static_cast<double>(s.points[k].timestep), s.points[k].mean);
    }
    o << "\"/>\n";
  }

  // legend
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double y = top + 12 + 18.0 * static_cast<double>(i);
    const char* color = kPalette[i % std::size(kPalette)];
    o << "<line x1=\"" << left + pw - 150 << "\" y1=\"" << fmt("%.2f", y) << "\" x2=\"" << left + pw - 128
      << "\" y2=\"" << fmt("%.2f", y) << "\" stroke=\"" << color << "\" stroke-width=\"3\"/>\n";
    o << "<text x=\"" << left + pw - 122 << "\" y=\"" << fmt("%.2f", y + 4) << "\">" << xml_escape(series[i].label)
      << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::vector<std::string> table_header(const std::vector<double>& thresholds) {
  std::vector<std::string> h{"env", "algo", "avg_return", "train_walltime_s"};
  for (double x : thresholds) {
    h.push_back("success_ratio_" + mm_label(x));
    h.push_back("reach_time_" + mm_label(x));
  }
  return h;
}

Table render_table(const std::vector<BenchRow>& rows, const std::vector<double>& thresholds) {
  const auto header = table_header(thresholds);
  std::vector<std::vector<std::string>> csv_cells{header}, text_cells{header};
  for (const auto& row : rows) {
    const EvalReport& r = row.report;
    if (r.thresholds != thresholds) throw UsageError("row thresholds differ from the table's");
    std::vector<std::string> c{row.env, row.algo, round_trip(r.average_return), round_trip(r.train_walltime_s)};
    std::vector<std::string> t{row.env, row.algo, fmt("%.3f", r.average_return), fmt("%.1f", r.train_walltime_s)};
    for (std::size_t k = 0; k < thresholds.size(); ++k) {
      c.push_back(round_trip(r.success_ratio[k]));
      t.push_back(fmt("%.2f", r.success_ratio[k]));
      c.push_back(r.reach_time[k] ? round_trip(*r.reach_time[k]) : "N/A");
      t.push_back(r.reach_time[k] ? fmt("%.1f", *r.reach_time[k]) : "N/A");
    }
    csv_cells.push_back(std::move(c));
    text_cells.push_back(std::move(t));
  }

  Table table;
  for (const auto& line : csv_cells) {
    for (std::size_t i = 0; i < line.size(); ++i) table.csv += (i ? "," : "") + line[i];
    table.csv += "\n";
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : text_cells) {
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  }
  for (const auto& line : text_cells) {
    std::string s;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const std::string pad(width[i] - line[i].size(), ' ');
      // text columns left-aligned, numbers right-aligned
      s += i < 2 ? line[i] + pad : pad + line[i];
      if (i + 1 < line.size()) s += "  ";
    }
    while (!s.empty() && s.back() == ' ') s.pop_back();
    table.text += s + "\n";
  }
  return table;
}

std::vector<BenchRow> read_table_csv(const fs::path& path) {
  auto in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  const auto header = split_csv_line(line);
  if (header.size() < 4 || (header.size() - 4) % 2 != 0) throw DataError(path.string() + ": bad header");
  std::vector<double> thresholds;
  for (std::size_t i = 4; i < header.size(); i += 2) {
    const std::string prefix = "success_ratio_";
    const std::string& h = header[i];
    if (h.rfind(prefix, 0) != 0 || h.size() < prefix.size() + 3) throw DataError(path.string() + ": bad header");
    thresholds.push_back(to_number(h.substr(prefix.size(), h.size() - prefix.size() - 2), path) / 1000.0);
  }
  if (header != table_header(thresholds)) throw DataError(path.string() + ": unexpected columns");
  std::vector<BenchRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) throw DataError(path.string() + ": ragged row");
    BenchRow row;
    row.env = cells[0];
    row.algo = cells[1];
    row.report.thresholds = thresholds;
    row.report.average_return = to_number(cells[2], path);
    row.report.train_walltime_s = to_number(cells[3], path);
    for (std::size_t k = 0; k < thresholds.size(); ++k) {
      row.report.success_ratio.push_back(to_number(cells[4 + 2 * k], path));
      const auto& rt = cells[5 + 2 * k];
      row.report.reach_time.push_back(rt == "N/A" ? std::nullopt : std::optional<double>(to_number(rt, path)));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_curves_csv(std::ostream& out, const std::vector<CurveRecord>& curves) {
  out << "env,algo,timestep,mean,std,seeds\n";
  for (const auto& c : curves) {
    for (const auto& b : c.buckets) {
      out << c.env << "," << c.algo << "," << b.timestep << "," << round_trip(b.mean) << "," << round_trip(b.std)
          << "," << b.seeds << "\n";
    }
  }
}

std::vector<CurveRecord> read_curves_csv(const fs::path& path) {
  auto in = open_input(path);
  std::string line;
  std::getline(in, line);
  if (line != "env,algo,timestep,mean,std,seeds") throw DataError(path.string() + ": unexpected columns");
  std::vector<CurveRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != 6) throw DataError(path.string() + ": ragged row");
    if (out.empty() || out.back().env != c[0] || out.back().algo != c[1]) out.push_back({c[0], c[1], {}});
    out.back().buckets.push_back({static_cast<long long>(to_number(c[2], path)), to_number(c[3], path),
                                  to_number(c[4], path), static_cast<int>(to_number(c[5], path))});
  }
  return out;
}

LearningCurve read_curve_csv(const fs::path& path) {
  auto in = open_input(path);
  std::string line;
  std::getline(in, line);
  if (line != "timestep,episode_return") throw DataError(path.string() + ": unexpected columns");
  LearningCurve curve;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != 2) throw DataError(path.string() + ": ragged row");
    curve.push_back({static_cast<long long>(to_number(c[0], path)), to_number(c[1], path)});
  }
  return curve;
}

std::vector<std::string> write_figures(const std::vector<CurveRecord>& curves, const fs::path& dir,
                                       int smoothing_window) {
  std::vector<std::string> files;
  std::vector<std::string> envs, algos;
  for (const auto& c : curves) {
    if (std::find(envs.begin(), envs.end(), c.env) == envs.end()) envs.push_back(c.env);
    if (std::find(algos.begin(), algos.end(), c.algo) == algos.end()) algos.push_back(c.algo);
  }
  auto safe = [](std::string s) {
    std::replace(s.begin(), s.end(), '+', '_');
    return s;
  };
  for (const auto& env : envs) {
    std::vector<Series> series;
    for (const auto& c : curves) {
      if (c.env == env) series.push_back({c.algo, c.buckets});
    }
    PlotSpec spec;
    spec.title = "Learning curves, " + env;
    spec.smoothing_window = smoothing_window;
    const std::string name = "learning_curves_" + env + ".svg";
    write_text(dir / name, render_curves(series, spec));
    files.push_back(name);
  }
  for (const auto& algo : algos) {
    const CurveRecord* fixed = nullptr;
    const CurveRecord* random = nullptr;
    for (const auto& c : curves) {
      if (c.algo != algo) continue;
      if (c.env == "Env1") fixed = &c;
      if (c.env == "Env2") random = &c;
    }
    if (!fixed || !random) continue;
    PlotSpec spec;
    spec.title = algo + ": Env1 vs Env2";
    spec.smoothing_window = smoothing_window;
    const std::string name = "compare_" + safe(algo) + ".svg";
    write_text(dir / name, render_curves({{"fixed goal", fixed->buckets}, {"random goal", random->buckets}}, spec));
    files.push_back(name);
  }
  return files;
}

std::vector<std::string> regenerate_report(const fs::path& from, const fs::path& out_dir) {
  const auto rows = read_table_csv(from / "benchmark.csv");
  const auto curves = read_curves_csv(from / "curves.csv");
  int window = 50;
  std::ifstream min(from / "manifest.json");
  if (min) {
    const auto m = nlohmann::json::parse(min);
    if (m.contains("smoothing_window")) window = m.at("smoothing_window").get<int>();
  }
  fs::create_directories(out_dir);
  std::vector<double> thresholds = rows.empty() ? kDefaultThresholds : rows.front().report.thresholds;
  const Table table = render_table(rows, thresholds);
  write_text(out_dir / "benchmark.txt", table.text);
  write_text(out_dir / "benchmark.csv", table.csv);
  std::vector<std::string> files{"benchmark.txt", "benchmark.csv"};
  for (const auto& f : write_figures(curves, out_dir, window)) files.push_back(f);
  return files;
}

}  // namespace reach
