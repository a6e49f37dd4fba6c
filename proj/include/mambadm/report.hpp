#pragma once

#include <string>
#include <vector>

#include "mambadm/eval.hpp"
#include "mambadm/train.hpp"

// File emitters for the CLI: versioned CSVs, line-delimited eval reports,
// and small SVG plots with the producing command echoed in a comment.
namespace mambadm {

// Shortest round-trip decimal form, deterministic across runs.
std::string format_double(double v);

struct EvalRow {
  EvalReport report;
  bool best = false;
};

void write_eval_report_jsonl(const std::string& path, const std::string& env_name,
                             const std::string& checkpoint,
                             const std::vector<EvalRow>& rows);
void write_eval_report_csv(const std::string& path,
                           const std::vector<EvalRow>& rows);

struct SweepRow {
  std::string factor;
  std::string value;
  std::uint64_t seed = 0;
  double raw_return = 0.0;
  double normalized = 0.0;
  double wall_s = 0.0;
  std::string status = "ok";
};

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);

struct SpectraRow {
  int layer = 0;
  std::string branch;  // "global" or "local"
  int channel = 0;
  int state_index = 0;
  double log10_mag = 0.0;
};

void write_spectra_csv(const std::string& path,
                       const std::vector<SpectraRow>& rows);

void write_train_log(const std::string& path, const std::vector<TrainLogRow>& log);

struct PlotPoint {
  double x = 0.0;
  double mean = 0.0;
  double stddev = 0.0;
  std::string label;
};

// Mean line with +-std whiskers.
void write_line_plot_svg(const std::string& path, const std::string& title,
                         const std::string& x_label, const std::string& y_label,
                         const std::vector<PlotPoint>& points,
                         const std::string& provenance);

// Per-layer scatter of the state-matrix spectra, one panel per layer.
void write_spectra_svg(const std::string& path, const std::string& title,
                       const std::vector<SpectraRow>& rows,
                       const std::string& provenance);

}  // namespace mambadm
