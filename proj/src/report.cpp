#include "kinwass/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

#include <unistd.h>

#include "kinwass/errors.hpp"
#include "kinwass/numeric.hpp"

namespace kinwass {

namespace fs = std::filesystem;

namespace {

std::string fmt(double x, int prec = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, x);
  return buf;
}

std::string tick_label(double v, bool log_axis) {
  char buf[64];
  if (log_axis)
    std::snprintf(buf, sizeof buf, "1e%d", static_cast<int>(std::lround(v)));
  else
    std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<')
      o += "&lt;";
    else if (c == '>')
      o += "&gt;";
    else if (c == '&')
      o += "&amp;";
    else
      o += c;
  }
  return o;
}

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"};

}  // namespace

std::string render_svg(const std::vector<Panel>& panels, const std::string& caption) {
  const double W = 720, PH = 300, ml = 70, mr = 180, mt = 30, mb = 45;
  const double H = PH * panels.size() + (caption.empty() ? 0 : 24);
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t k = 0; k < panels.size(); ++k) {
    const Panel& P = panels[k];
    const double y0 = k * PH;
    auto ty = [&](double v) { return P.log_y ? std::log10(v) : v; };
    auto ok = [&](double x, double y) {
      return std::isfinite(x) && std::isfinite(y) && (!P.log_y || y > 0.0);
    };
    double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
    for (const auto& s : P.series)
      for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i)
        if (ok(s.x[i], s.y[i])) {
          xmin = std::min(xmin, s.x[i]);
          xmax = std::max(xmax, s.x[i]);
          ymin = std::min(ymin, ty(s.y[i]));
          ymax = std::max(ymax, ty(s.y[i]));
        }
    if (!(xmin <= xmax)) xmin = 0, xmax = 1;
    if (!(ymin <= ymax)) ymin = 0, ymax = 1;
    if (P.log_y) ymin = std::floor(ymin), ymax = std::ceil(ymax);
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    const double pw = W - ml - mr, ph = PH - mt - mb;
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return y0 + mt + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

    o << "<text x=\"" << fmt(ml) << "\" y=\"" << fmt(y0 + 18) << "\" font-size=\"13\">"
      << escape(P.title) << "</text>\n";
    o << "<rect x=\"" << fmt(ml) << "\" y=\"" << fmt(y0 + mt) << "\" width=\"" << fmt(pw)
      << "\" height=\"" << fmt(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";
    // ticks
    int ny = P.log_y ? static_cast<int>(ymax - ymin) : 4;
    int ystep = std::max(1, ny / 8);
    for (int i = 0; i <= ny; i += ystep) {
      double v = ymin + (ymax - ymin) * i / ny;
      o << "<line x1=\"" << fmt(ml - 4) << "\" x2=\"" << fmt(ml) << "\" y1=\"" << fmt(py(v))
        << "\" y2=\"" << fmt(py(v)) << "\" stroke=\"black\"/>"
        << "<text x=\"" << fmt(ml - 6) << "\" y=\"" << fmt(py(v) + 4)
        << "\" text-anchor=\"end\">" << tick_label(v, P.log_y) << "</text>\n";
    }
    for (int i = 0; i <= 4; ++i) {
      double v = xmin + (xmax - xmin) * i / 4;
      o << "<line x1=\"" << fmt(px(v)) << "\" x2=\"" << fmt(px(v)) << "\" y1=\""
        << fmt(y0 + mt + ph) << "\" y2=\"" << fmt(y0 + mt + ph + 4) << "\" stroke=\"black\"/>"
        << "<text x=\"" << fmt(px(v)) << "\" y=\"" << fmt(y0 + mt + ph + 16)
        << "\" text-anchor=\"middle\">" << tick_label(v, false) << "</text>\n";
    }
    o << "<text x=\"" << fmt(ml + pw / 2) << "\" y=\"" << fmt(y0 + PH - 8)
      << "\" text-anchor=\"middle\">" << escape(P.xlabel) << "</text>\n";
    o << "<text transform=\"translate(14," << fmt(y0 + mt + ph / 2)
      << ") rotate(-90)\" text-anchor=\"middle\">" << escape(P.ylabel) << "</text>\n";

    for (std::size_t s = 0; s < P.series.size(); ++s) {
      const Series& S = P.series[s];
      const char* col = kColors[s % 6];
      std::string path;
      bool pen = false;
      for (std::size_t i = 0; i < std::min(S.x.size(), S.y.size()); ++i) {
        if (!ok(S.x[i], S.y[i])) {
          pen = false;
          continue;
        }
        path += (pen ? " L" : " M") + fmt(px(S.x[i])) + " " + fmt(py(ty(S.y[i])));
        pen = true;
      }
      if (!path.empty())
        o << "<path d=\"" << path.substr(1) << "\" fill=\"none\" stroke=\"" << col
          << "\" stroke-width=\"1.5\"" << (S.dashed ? " stroke-dasharray=\"5,3\"" : "")
          << "/>\n";
      double ly = y0 + mt + 10 + 16 * s;
      o << "<line x1=\"" << fmt(W - mr + 10) << "\" x2=\"" << fmt(W - mr + 34) << "\" y1=\""
        << fmt(ly) << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << col << "\" stroke-width=\"1.5\""
        << (S.dashed ? " stroke-dasharray=\"5,3\"" : "") << "/>"
        << "<text x=\"" << fmt(W - mr + 40) << "\" y=\"" << fmt(ly + 4) << "\">"
        << escape(S.name) << "</text>\n";
    }
  }
  if (!caption.empty())
    o << "<text x=\"" << fmt(ml) << "\" y=\"" << fmt(H - 8) << "\" fill=\"#555\">"
      << escape(caption) << "</text>\n";
  o << "</svg>\n";
  return o.str();
}

std::string stability_svg(const StabilityReport& rep, double p) {
  std::vector<double> t = rep.column("t");
  Panel a;
  a.title = "W_p^p and bounds";
  a.xlabel = "t";
  a.ylabel = "log10 distance";
  a.log_y = true;
  a.series.push_back({"W_p^p(f1,f2)", t, rep.column("Wpp_f"), false});
  a.series.push_back({"W_p^p(rho1,rho2)", t, rep.column("Wpp_rho"), false});
  a.series.push_back({"D_p", t, rep.column("Dp"), false});
  a.series.push_back({"bound", t, rep.column("bound"), true});
  a.series.push_back({"fitted bound", t, rep.column("bound_fitted"), true});

  Panel b;
  b.title = "log|log W_p^p(f1,f2)|";
  b.xlabel = "t";
  b.ylabel = "log|log W|";
  std::vector<double> ll;
  for (double w : rep.column("Wpp_f"))
    ll.push_back(w > 0.0 && w < 1.0 ? std::log(std::abs(std::log(w))) : NAN);
  b.series.push_back({"measured", t, ll, false});
  std::string cap = "p = " + format_double(p);
  if (rep.metadata.contains("config_hash"))
    cap += "  config " + rep.metadata["config_hash"].get<std::string>() +
           "  seed " + std::to_string(rep.metadata.value("seed", 0));
  return render_svg({a, b}, cap);
}

std::string table_csv(const std::vector<std::string>& cols,
                      const std::vector<std::vector<double>>& rows, const std::string& hash,
                      std::uint64_t seed) {
  std::ostringstream o;
  o << "# config_hash=" << hash << " seed=" << seed << "\n";
  for (std::size_t i = 0; i < cols.size(); ++i) o << (i ? "," : "") << cols[i];
  o << "\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) o << (i ? "," : "") << format_double(r[i]);
    o << "\n";
  }
  return o.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

RunDirectory::RunDirectory(fs::path out) : out_(std::move(out)) {
  if (out_.empty()) throw ConfigError("output directory is empty");
  if (fs::exists(out_) && !fs::exists(out_ / kMarker))
    throw ConfigError("refusing to replace " + out_.string() +
                      ": it exists and was not written by this tool");
  staging_ = out_;
  staging_ += ".partial-" + std::to_string(::getpid());
  if (out_.has_parent_path()) fs::create_directories(out_.parent_path());
  fs::remove_all(staging_);
  fs::create_directory(staging_);
  write_text(staging_ / kMarker, "");
}

RunDirectory::~RunDirectory() {
  if (!committed_) {
    std::error_code ec;
    fs::remove_all(staging_, ec);
  }
}

void RunDirectory::write(const std::string& name, const std::string& text) {
  write_text(staging_ / name, text);
}

void RunDirectory::commit() {
  if (fs::exists(out_)) fs::remove_all(out_);
  fs::rename(staging_, out_);
  committed_ = true;
}

}  // namespace kinwass
