#include "mambadm/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

namespace mambadm {

using nlohmann::json;

std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  return out;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '-': out += "-"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

void write_eval_report_jsonl(const std::string& path, const std::string& env_name,
                             const std::string& checkpoint,
                             const std::vector<EvalRow>& rows) {
  auto out = open_out(path);
  json head{{"schema_version", 1},
            {"kind", "eval_report"},
            {"env_name", env_name},
            {"checkpoint", checkpoint},
            {"rows", rows.size()}};
  out << head.dump() << "\n";
  for (const auto& r : rows) {
    json line{{"target_rtg", r.report.target_rtg},
              {"episodes", r.report.episodes},
              {"seed", r.report.seed},
              {"returns", r.report.returns},
              {"mean", r.report.mean},
              {"std", r.report.stddev},
              {"normalized", r.report.normalized},
              {"best", r.best}};
    out << line.dump() << "\n";
  }
}

void write_eval_report_csv(const std::string& path,
                           const std::vector<EvalRow>& rows) {
  auto out = open_out(path);
  out << "# schema: mambadm-eval-v1\n";
  out << "target_rtg,episodes,seed,mean_raw,std_raw,normalized,best\n";
  for (const auto& r : rows) {
    out << format_double(r.report.target_rtg) << ',' << r.report.episodes << ','
        << r.report.seed << ',' << format_double(r.report.mean) << ','
        << format_double(r.report.stddev) << ','
        << format_double(r.report.normalized) << ',' << (r.best ? 1 : 0) << "\n";
  }
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
  auto out = open_out(path);
  out << "# schema: mambadm-sweep-v1\n";
  out << "factor,value,seed,raw_return,normalized,wall_s,status\n";
  for (const auto& r : rows) {
    out << r.factor << ',' << r.value << ',' << r.seed << ','
        << format_double(r.raw_return) << ',' << format_double(r.normalized)
        << ',' << format_double(r.wall_s) << ',' << r.status << "\n";
  }
}

void write_spectra_csv(const std::string& path,
                       const std::vector<SpectraRow>& rows) {
  auto out = open_out(path);
  out << "# schema: mambadm-spectra-v1\n";
  out << "layer,branch,channel,state_index,log10_mag\n";
  for (const auto& r : rows) {
    out << r.layer << ',' << r.branch << ',' << r.channel << ','
        << r.state_index << ',' << format_double(r.log10_mag) << "\n";
  }
}

void write_train_log(const std::string& path,
                     const std::vector<TrainLogRow>& log) {
  auto out = open_out(path);
  out << "step\tloss\tlr\twall_ms\n";
  for (const auto& row : log) {
    out << row.step << '\t' << format_double(row.loss) << '\t'
        << format_double(row.lr) << '\t' << format_double(row.wall_ms) << "\n";
  }
}

namespace {

struct Frame {
  double x0, x1, y0, y1;       // data ranges
  double px0, px1, py0, py1;   // pixel box (py0 is the top)

  double sx(double x) const {
    return x1 == x0 ? (px0 + px1) / 2
                    : px0 + (x - x0) / (x1 - x0) * (px1 - px0);
  }
  double sy(double y) const {
    return y1 == y0 ? (py0 + py1) / 2
                    : py1 - (y - y0) / (y1 - y0) * (py1 - py0);
  }
};

void svg_header(std::ofstream& out, int w, int h, const std::string& provenance,
                const std::string& title) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
      << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n";
  out << "<!-- " << xml_escape(provenance) << " -->\n";
  out << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"14\">" << xml_escape(title)
      << "</text>\n";
}

void svg_axes(std::ofstream& out, const Frame& f, const std::string& x_label,
              const std::string& y_label) {
  out << "<line x1=\"" << f.px0 << "\" y1=\"" << f.py1 << "\" x2=\"" << f.px1
      << "\" y2=\"" << f.py1 << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << f.px0 << "\" y1=\"" << f.py0 << "\" x2=\"" << f.px0
      << "\" y2=\"" << f.py1 << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << (f.px0 + f.px1) / 2 << "\" y=\"" << f.py1 + 32
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
      << xml_escape(x_label) << "</text>\n";
  out << "<text x=\"12\" y=\"" << (f.py0 + f.py1) / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" "
      << "transform=\"rotate(-90 12 " << (f.py0 + f.py1) / 2 << ")\">"
      << xml_escape(y_label) << "</text>\n";
  // extremal tick labels
  out << "<text x=\"" << f.px0 - 4 << "\" y=\"" << f.py1 + 4
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
      << format_double(f.y0) << "</text>\n";
  out << "<text x=\"" << f.px0 - 4 << "\" y=\"" << f.py0 + 4
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
      << format_double(f.y1) << "</text>\n";
}

}  // namespace

void write_line_plot_svg(const std::string& path, const std::string& title,
                         const std::string& x_label, const std::string& y_label,
                         const std::vector<PlotPoint>& points,
                         const std::string& provenance) {
  auto out = open_out(path);
  const int w = 640, h = 420;
  svg_header(out, w, h, provenance, title);
  if (!points.empty()) {
    Frame f;
    f.px0 = 60;
    f.px1 = w - 20;
    f.py0 = 40;
    f.py1 = h - 50;
    f.x0 = points.front().x;
    f.x1 = points.front().x;
    f.y0 = points.front().mean - points.front().stddev;
    f.y1 = points.front().mean + points.front().stddev;
    for (const auto& p : points) {
      f.x0 = std::min(f.x0, p.x);
      f.x1 = std::max(f.x1, p.x);
      f.y0 = std::min(f.y0, p.mean - p.stddev);
      f.y1 = std::max(f.y1, p.mean + p.stddev);
    }
    if (f.y0 == f.y1) {
      f.y0 -= 1.0;
      f.y1 += 1.0;
    }
    svg_axes(out, f, x_label, y_label);

    out << "<polyline fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"2\" points=\"";
    for (const auto& p : points)
      out << format_double(f.sx(p.x)) << ',' << format_double(f.sy(p.mean)) << ' ';
    out << "\"/>\n";
    for (const auto& p : points) {
      out << "<line x1=\"" << format_double(f.sx(p.x)) << "\" y1=\""
          << format_double(f.sy(p.mean - p.stddev)) << "\" x2=\""
          << format_double(f.sx(p.x)) << "\" y2=\""
          << format_double(f.sy(p.mean + p.stddev))
          << "\" stroke=\"#1f6fb2\" stroke-width=\"1\"/>\n";
      out << "<circle cx=\"" << format_double(f.sx(p.x)) << "\" cy=\""
          << format_double(f.sy(p.mean)) << "\" r=\"3\" fill=\"#1f6fb2\"/>\n";
      out << "<text x=\"" << format_double(f.sx(p.x)) << "\" y=\""
          << format_double(f.py1 + 16)
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
             "font-size=\"10\">"
          << xml_escape(p.label.empty() ? format_double(p.x) : p.label)
          << "</text>\n";
    }
  }
  out << "</svg>\n";
}

void write_spectra_svg(const std::string& path, const std::string& title,
                       const std::vector<SpectraRow>& rows,
                       const std::string& provenance) {
  auto out = open_out(path);
  // one panel per (layer, branch), laid out layer-by-branch
  std::map<std::pair<int, std::string>, std::vector<const SpectraRow*>> panels;
  for (const auto& r : rows) panels[{r.layer, r.branch}].push_back(&r);

  const int pw = 300, ph = 170, cols = 2;
  const int n_panels = std::max<std::size_t>(1, panels.size());
  const int rows_n = (n_panels + cols - 1) / cols;
  const int w = pw * cols + 60, h = ph * rows_n + 60;
  svg_header(out, w, h, provenance, title);

  int pi = 0;
  for (const auto& [key, entries] : panels) {
    const int cx = pi % cols, cy = pi / cols;
    Frame f;
    f.px0 = 60 + cx * pw;
    f.px1 = f.px0 + pw - 40;
    f.py0 = 50 + cy * ph;
    f.py1 = f.py0 + ph - 40;
    f.x0 = 0;
    f.x1 = 0;
    f.y0 = entries.front()->log10_mag;
    f.y1 = entries.front()->log10_mag;
    for (const auto* e : entries) {
      f.x0 = std::min(f.x0, double(e->state_index));
      f.x1 = std::max(f.x1, double(e->state_index));
      f.y0 = std::min(f.y0, e->log10_mag);
      f.y1 = std::max(f.y1, e->log10_mag);
    }
    if (f.y0 == f.y1) {
      f.y0 -= 0.5;
      f.y1 += 0.5;
    }
    svg_axes(out, f, "state index", "log10|a|");
    out << "<text x=\"" << (f.px0 + f.px1) / 2 << "\" y=\"" << f.py0 - 6
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">layer "
        << key.first << " / " << xml_escape(key.second) << "</text>\n";
    for (const auto* e : entries) {
      out << "<circle cx=\"" << format_double(f.sx(double(e->state_index)))
          << "\" cy=\"" << format_double(f.sy(e->log10_mag))
          << "\" r=\"1.5\" fill=\"#b23a1f\" fill-opacity=\"0.5\"/>\n";
    }
    ++pi;
  }
  out << "</svg>\n";
}

}  // namespace mambadm
