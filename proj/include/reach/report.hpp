#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "reach/bench.hpp"

namespace reach {

/// Aggregated learning curve of one (env, algo) pair.
struct CurveRecord {
  std::string env;
  std::string algo;
  std::vector<CurveBucket> buckets;
};

struct Series {
  std::string label;
  std::vector<CurveBucket> points;
};

struct PlotSpec {
  std::string title;
  std::string x_label = "timesteps";
  std::string y_label = "episode return (m^2)";
  int smoothing_window = 50;
  int width = 720;
  int height = 440;
};

/// Self-contained SVG: one mean line and a +/- std band per series, a legend,
/// and the plotted numbers in a leading comment block. Byte-identical for
/// identical inputs. Throws UsageError on an empty series list.
std::string render_curves(const std::vector<Series>& series, const PlotSpec& spec);

struct Table {
  std::string csv;
  std::string text;
};

/// env, algo, avg_return, train_walltime_s, then success_ratio_<X>mm and
/// reach_time_<X>mm per threshold.
std::vector<std::string> table_header(const std::vector<double>& thresholds = kDefaultThresholds);

/// One row per (env, algo); missing reach times are written as N/A.
Table render_table(const std::vector<BenchRow>& rows,
                   const std::vector<double>& thresholds = kDefaultThresholds);

/// Parses a benchmark.csv written by render_table.
std::vector<BenchRow> read_table_csv(const std::filesystem::path& path);

void write_curves_csv(std::ostream& out, const std::vector<CurveRecord>& curves);
std::vector<CurveRecord> read_curves_csv(const std::filesystem::path& path);
LearningCurve read_curve_csv(const std::filesystem::path& path);

/// learning_curves_<env>.svg per environment and compare_<algo>.svg
/// ("fixed goal" vs "random goal") for every algorithm seen on both. Returns
/// the written file names relative to `dir`.
std::vector<std::string> write_figures(const std::vector<CurveRecord>& curves,
                                       const std::filesystem::path& dir, int smoothing_window);

/// Regenerates figures and the text table from a finished benchmark
/// directory into `out_dir` without touching the inputs; returns the
/// written file names.
std::vector<std::string> regenerate_report(const std::filesystem::path& from,
                                           const std::filesystem::path& out_dir);

}  // namespace reach
