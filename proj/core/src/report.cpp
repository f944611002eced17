#include "cl_lab/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>

#include "cl_lab/csv.hpp"
#include "cl_lab/error.hpp"
#include "cl_lab/stats.hpp"

namespace cl_lab {

namespace {

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

struct Axis {
  bool log = false;
  double lo = 0.0;
  double hi = 1.0;

  double map(double v, double a, double b) const {
    const double t = log ? (std::log10(v) - lo) / (hi - lo) : (v - lo) / (hi - lo);
    return a + t * (b - a);
  }
  double value_at(double t) const {
    const double u = lo + t * (hi - lo);
    return log ? std::pow(10.0, u) : u;
  }
};

bool usable(double v, bool log) { return std::isfinite(v) && (!log || v > 0); }

std::string num(double v) {
  std::ostringstream o;
  o.precision(4);
  o << v;
  return o.str();
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

std::string fmt(double v) {
  if (!std::isfinite(v)) return "nan";
  std::ostringstream o;
  o.precision(4);
  o << v;
  return o.str();
}

std::optional<CsvTable> load(const std::string& dir, const std::string& name, ReportResult& res) {
  const std::string path = (std::filesystem::path(dir) / name).string();
  if (!std::filesystem::exists(path)) {
    res.warnings.push_back("missing " + name);
    return std::nullopt;
  }
  try {
    return read_csv(path);
  } catch (const Error& e) {
    res.warnings.push_back(name + ": " + e.what());
    return std::nullopt;
  }
}

void emit(const std::string& dir, const std::string& name, const std::string& body, ReportResult& res) {
  const std::string path = (std::filesystem::path(dir) / name).string();
  write_text(path, body);
  res.written.push_back(path);
}

std::vector<std::string> strings(const CsvTable& t, const std::string& name) {
  const int c = t.column(name);
  if (c < 0) fail(ErrorKind::Parse, "csv: missing column " + name);
  std::vector<std::string> out;
  for (const auto& r : t.rows) out.push_back(r[std::size_t(c)]);
  return out;
}

std::string phase_section(const std::string& dir, ReportResult& res) {
  const auto t = load(dir, "phase.csv", res);
  if (!t) return "";
  const auto L = t->numbers("L"), rank = t->numbers("rank"), alpha = t->numbers("alpha");
  std::map<int, std::map<int, std::vector<double>>> groups;
  for (std::size_t i = 0; i < L.size(); ++i)
    if (std::isfinite(alpha[i])) groups[int(L[i])][int(rank[i])].push_back(alpha[i]);

  PlotSpec spec{"Median alignment vs target rank", "rank", "alpha", true, true, false, {}};
  std::ostringstream md;
  md << "## Phase transition\n\n| L | Spearman(alpha, rank) | log-log slope of median |\n|---|---|---|\n";
  for (const auto& [depth, by_rank] : groups) {
    PlotSeries s{"L=" + std::to_string(depth), {}, {}, false};
    std::vector<double> xs, ys, lx, ly;
    for (const auto& [r, vals] : by_rank) {
      const double m = median(vals);
      s.x.push_back(r);
      s.y.push_back(m);
      for (double v : vals) {
        xs.push_back(r);
        ys.push_back(v);
      }
      if (m > 0) {
        lx.push_back(std::log(double(r)));
        ly.push_back(std::log(m));
      }
    }
    spec.series.push_back(s);
    const double rho = xs.size() >= 2 ? spearman(xs, ys) : std::nan("");
    const double slope = lx.size() >= 2 ? ols_slope(lx, ly) : std::nan("");
    md << "| " << depth << " | " << fmt(rho) << " | " << fmt(slope) << " |\n";
  }
  emit(dir, "phase.svg", render_svg(spec), res);
  return md.str() + "\n";
}

std::string bounds_section(const std::string& dir, ReportResult& res) {
  const auto t = load(dir, "bounds.csv", res);
  if (!t) return "";
  const auto alpha = t->numbers("alpha_measured"), tight = t->numbers("bound_tight"),
             interp = t->numbers("bound_interp"), ok = t->numbers("regime_ok");
  PlotSeries st{"tighter", {}, {}, true}, si{"interpretable", {}, {}, true};
  int n = 0, above_t = 0, above_i = 0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (ok[i] != 1.0) continue;
    ++n;
    above_t += alpha[i] >= tight[i];
    above_i += alpha[i] >= interp[i];
    st.x.push_back(tight[i]);
    st.y.push_back(alpha[i]);
    si.x.push_back(interp[i]);
    si.y.push_back(alpha[i]);
  }
  PlotSpec spec{"Measured alignment vs lower bounds (regime_ok rows)", "bound", "measured alpha", true, true, true,
                {st, si}};
  emit(dir, "bounds.svg", render_svg(spec), res);
  std::ostringstream md;
  md << "## Bounds\n\n" << n << " of " << alpha.size() << " instances are in regime.\n\n"
     << "| bound | instances with measured alpha >= bound |\n|---|---|\n"
     << "| tighter | " << above_t << "/" << n << " |\n| interpretable | " << above_i << "/" << n << " |\n\n";
  return md.str();
}

std::string forgetting_section(const std::string& dir, ReportResult& res) {
  const auto t = load(dir, "forgetting.csv", res);
  if (!t) return "";
  const auto step = t->numbers("step"), actual = t->numbers("actual"), second = t->numbers("second"),
             random = t->numbers("random_mean");
  std::map<int, std::vector<double>> a, s, r;
  for (std::size_t i = 0; i < step.size(); ++i) {
    a[int(step[i])].push_back(actual[i]);
    s[int(step[i])].push_back(second[i]);
    r[int(step[i])].push_back(random[i]);
  }
  PlotSpec spec{"Old-task forgetting during new-task training (median)", "new-task epoch", "loss increase", false,
                false, false, {{"actual", {}, {}, false}, {"second order", {}, {}, false}, {"random", {}, {}, false}}};
  std::ostringstream md;
  md << "## Forgetting\n\n| epoch | actual | second order | random |\n|---|---|---|---|\n";
  for (const auto& [k, v] : a) {
    const double ma = median(v), ms = median(s[k]), mr = median(r[k]);
    spec.series[0].x.push_back(k);
    spec.series[0].y.push_back(ma);
    spec.series[1].x.push_back(k);
    spec.series[1].y.push_back(ms);
    spec.series[2].x.push_back(k);
    spec.series[2].y.push_back(mr);
    md << "| " << k << " | " << fmt(ma) << " | " << fmt(ms) << " | " << fmt(mr) << " |\n";
  }
  emit(dir, "forgetting.svg", render_svg(spec), res);
  return md.str() + "\n";
}

std::string power_section(const std::string& dir, ReportResult& res) {
  const auto t = load(dir, "power.csv", res);
  if (!t) return "";
  const auto step = t->numbers("step"), alpha = t->numbers("alpha");
  std::map<int, std::vector<double>> by_step;
  for (std::size_t i = 0; i < step.size(); ++i)
    if (std::isfinite(alpha[i])) by_step[int(step[i])].push_back(alpha[i]);
  PlotSpec spec{"Alignment of the cumulative new-task update (median)", "step", "alpha", false, false, false,
                {{"alpha", {}, {}, false}}};
  for (const auto& [k, v] : by_step) {
    spec.series[0].x.push_back(k);
    spec.series[0].y.push_back(median(v));
  }
  emit(dir, "power.svg", render_svg(spec), res);
  return "";
}

std::string cl_section(const std::string& dir, ReportResult& res) {
  const auto t = load(dir, "cl.csv", res);
  if (!t) return "";
  const auto mode = strings(*t, "mode");
  const auto task = t->numbers("task"), alpha = t->numbers("alpha"), forget = t->numbers("forget_task2"),
             acc = t->numbers("ACC"), bwt = t->numbers("BWT"), imm = t->numbers("immACC");
  int last = 0;
  for (double k : task) last = std::max(last, int(k));
  std::vector<std::string> order;
  std::map<std::string, std::map<int, std::vector<double>>> a;
  std::map<std::string, std::vector<double>> f, fa, fb, fi;
  for (std::size_t i = 0; i < mode.size(); ++i) {
    if (std::find(order.begin(), order.end(), mode[i]) == order.end()) order.push_back(mode[i]);
    if (!std::isfinite(alpha[i])) continue;
    a[mode[i]][int(task[i])].push_back(alpha[i]);
    f[mode[i]].push_back(forget[i]);
    if (int(task[i]) == last) {
      fa[mode[i]].push_back(acc[i]);
      fb[mode[i]].push_back(bwt[i]);
      fi[mode[i]].push_back(imm[i]);
    }
  }
  PlotSpec spec{"Alignment of each task's update against the previous task (median)", "task", "alpha", false, false,
                false, {}};
  std::ostringstream md;
  md << "## Continual learning\n\n| mode | median alpha | median forgetting | ACC | BWT | immACC |\n"
     << "|---|---|---|---|---|---|\n";
  for (const auto& m : order) {
    PlotSeries s{m, {}, {}, false};
    std::vector<double> all;
    for (const auto& [k, v] : a[m]) {
      s.x.push_back(k);
      s.y.push_back(median(v));
      all.insert(all.end(), v.begin(), v.end());
    }
    spec.series.push_back(s);
    auto med = [](const std::vector<double>& v) { return v.empty() ? std::nan("") : median(v); };
    md << "| " << m << " | " << fmt(med(all)) << " | " << fmt(med(f[m])) << " | " << fmt(med(fa[m])) << " | "
       << fmt(med(fb[m])) << " | " << fmt(med(fi[m])) << " |\n";
  }
  emit(dir, "cl.svg", render_svg(spec), res);
  return md.str() + "\n";
}

std::string cdf_section(const std::string& dir, ReportResult& res) {
  std::ostringstream md;
  if (const auto t = load(dir, "cdf.csv", res)) {
    const auto seed = strings(*t, "seed"), source = strings(*t, "source"), method = strings(*t, "method");
    const auto lambda = t->numbers("lambda"), cdf = t->numbers("cdf");
    if (!seed.empty()) {
      const std::string first = seed.front();
      std::map<std::string, PlotSeries> curves;
      std::vector<std::string> order;
      for (std::size_t i = 0; i < seed.size(); ++i) {
        if (seed[i] != first) continue;
        const std::string name = source[i] + " (" + method[i] + ")";
        if (!curves.count(name)) {
          order.push_back(name);
          curves[name] = PlotSeries{name, {}, {}, false};
        }
        curves[name].x.push_back(lambda[i]);
        curves[name].y.push_back(cdf[i]);
      }
      PlotSpec spec{"Projection CDF over Hessian eigenvalues (first instance)", "eigenvalue", "CDF", false, false,
                    false, {}};
      for (const auto& n : order) spec.series.push_back(curves[n]);
      emit(dir, "cdf.svg", render_svg(spec), res);
    }
  }
  if (const auto t = load(dir, "cdf_summary.csv", res)) {
    const auto source = strings(*t, "source");
    const auto mass = t->numbers("mass_top"), sup = t->numbers("sup_vs_exact");
    std::map<std::string, std::vector<double>> m;
    double worst = 0.0;
    for (std::size_t i = 0; i < source.size(); ++i) {
      if (std::isfinite(mass[i])) m[source[i]].push_back(mass[i]);
      if (std::isfinite(sup[i])) worst = std::max(worst, sup[i]);
    }
    md << "## Projection CDF\n\n| start vector | median mass on the top-10%-trace region |\n|---|---|\n";
    for (const auto& [k, v] : m) md << "| " << k << " | " << fmt(median(v)) << " |\n";
    md << "\nLargest exact vs Lanczos CDF gap: " << fmt(worst) << "\n\n";
  }
  return md.str();
}

}  // namespace

std::string render_svg(const PlotSpec& spec) {
  constexpr double W = 640, H = 420, left = 70, right = 160, top = 40, bottom = 50;
  Axis ax{spec.log_x}, ay{spec.log_y};
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& s : spec.series)
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!usable(s.x[i], ax.log) || !usable(s.y[i], ay.log)) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (!(xmin <= xmax)) xmin = ax.log ? 1 : 0, xmax = ax.log ? 10 : 1;
  if (!(ymin <= ymax)) ymin = ay.log ? 1 : 0, ymax = ay.log ? 10 : 1;
  if (spec.diagonal) {
    ymin = xmin = std::min(xmin, ymin);
    ymax = xmax = std::max(xmax, ymax);
  }
  auto set = [](Axis& a, double lo, double hi) {
    if (a.log) {
      lo = std::log10(lo);
      hi = std::log10(hi);
    }
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
    const double pad = 0.05 * (hi - lo);
    a.lo = lo - pad;
    a.hi = hi + pad;
  };
  set(ax, xmin, xmax);
  set(ay, ymin, ymax);
  const double x0 = left, x1 = W - right, y0 = H - bottom, y1 = top;

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(spec.title) << "</text>\n";
  o << "<rect x=\"" << x0 << "\" y=\"" << y1 << "\" width=\"" << x1 - x0 << "\" height=\"" << y0 - y1
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double t = k / 4.0;
    const double px = x0 + t * (x1 - x0), py = y0 - t * (y0 - y1);
    o << "<line x1=\"" << px << "\" y1=\"" << y0 << "\" x2=\"" << px << "\" y2=\"" << y0 + 5 << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << px << "\" y=\"" << y0 + 18 << "\" text-anchor=\"middle\">" << num(ax.value_at(t)) << "</text>\n";
    o << "<line x1=\"" << x0 - 5 << "\" y1=\"" << py << "\" x2=\"" << x0 << "\" y2=\"" << py << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << x0 - 8 << "\" y=\"" << py + 4 << "\" text-anchor=\"end\">" << num(ay.value_at(t)) << "</text>\n";
  }
  o << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << escape(spec.x_label)
    << (ax.log ? " (log)" : "") << "</text>\n";
  o << "<text x=\"16\" y=\"" << (y0 + y1) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << (y0 + y1) / 2
    << ")\">" << escape(spec.y_label) << (ay.log ? " (log)" : "") << "</text>\n";
  if (spec.diagonal) {
    o << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y1
      << "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
  }
  for (std::size_t si = 0; si < spec.series.size(); ++si) {
    const auto& s = spec.series[si];
    const char* color = kColors[si % (sizeof kColors / sizeof kColors[0])];
    std::ostringstream pts;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!usable(s.x[i], ax.log) || !usable(s.y[i], ay.log)) continue;
      const double px = ax.map(s.x[i], x0, x1), py = ay.map(s.y[i], y0, y1);
      if (s.points) o << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
      else pts << px << "," << py << " ";
    }
    if (!s.points && !pts.str().empty())
      o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"" << pts.str() << "\"/>\n";
    const double ly = y1 + 14 + 18 * double(si);
    o << "<rect x=\"" << x1 + 12 << "\" y=\"" << ly - 9 << "\" width=\"10\" height=\"10\" fill=\"" << color << "\"/>\n";
    o << "<text x=\"" << x1 + 28 << "\" y=\"" << ly << "\">" << escape(s.name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

ReportResult write_report(const std::string& dir) {
  if (!std::filesystem::is_directory(dir)) fail(ErrorKind::Io, "report: '" + dir + "' is not a directory");
  ReportResult res;
  std::string md = "# Report\n\n";
  using Section = std::string (*)(const std::string&, ReportResult&);
  for (Section f : {phase_section, bounds_section, forgetting_section, power_section, cl_section, cdf_section}) {
    try {
      md += f(dir, res);
    } catch (const Error& e) {
      res.warnings.push_back(e.what());
    }
  }
  if (!res.warnings.empty()) {
    md += "## Warnings\n\n";
    for (const auto& w : res.warnings) md += "- " + w + "\n";
  }
  emit(dir, "summary.md", md, res);
  return res;
}

}  // namespace cl_lab
