#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "mcdet/error.hpp"
#include "mcdet/eval.hpp"
#include "mcdet/image.hpp"

namespace mcdet {
namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  return out;
}

void finish(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw InputError("failed writing '" + path + "'");
}

std::string pct(double v) {
  if (std::isnan(v)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

std::string secs(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

void write_report_csv(const std::string& path, std::span<const EvalReport> reports) {
  auto out = open_out(path);
  out << "mode,method,ap,top1,proposal_s,network_s,overall_s,images\n";
  out.precision(10);
  for (const auto& r : reports) {
    out << to_string(r.mode) << ',' << display_name(r.mode) << ',' << r.ap << ',' << r.top1 << ','
        << r.proposal_seconds << ',' << r.network_seconds << ',' << r.overall_seconds << ',' << r.images << '\n';
  }
  finish(out, path);
}

std::string format_report_table(std::span<const EvalReport> reports) {
  const char* headers[] = {"Method", "AP(%)", "Top1(%)", "Proposal(s)", "Networks(s)", "Overall(s)"};
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : reports) {
    rows.push_back({std::string(display_name(r.mode)), pct(r.ap), pct(r.top1), secs(r.proposal_seconds),
                    secs(r.network_seconds), secs(r.overall_seconds)});
  }
  std::size_t widths[6];
  for (std::size_t c = 0; c < 6; ++c) {
    widths[c] = std::string(headers[c]).size();
    for (const auto& row : rows) widths[c] = std::max(widths[c], row[c].size());
  }
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < 6; ++c) {
      const std::string pad(widths[c] - cells[c].size(), ' ');
      out << (c == 0 ? cells[c] + pad : pad + cells[c]) << (c + 1 < 6 ? "  " : "\n");
    }
  };
  line({headers[0], headers[1], headers[2], headers[3], headers[4], headers[5]});
  std::size_t total = 10;
  for (auto w : widths) total += w;
  out << std::string(total, '-') << '\n';
  for (const auto& row : rows) line(row);
  return out.str();
}

void write_pr_csv(const std::string& path, const PRCurve& curve) {
  auto out = open_out(path);
  out << "recall,precision\n";
  out.precision(10);
  for (const auto& p : curve.points) out << p.recall << ',' << p.precision << '\n';
  finish(out, path);
}

void write_pr_svg(const std::string& path, std::span<const PRCurve> curves, std::span<const std::string> labels) {
  constexpr double kSize = 360.0, kLeft = 50.0, kTop = 20.0;
  static const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  auto out = open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"430\" font-family=\"sans-serif\" "
         "font-size=\"12\">\n";
  out << "<rect width=\"600\" height=\"430\" fill=\"white\"/>\n";
  out << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kSize << "\" height=\"" << kSize
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 10; t += 2) {
    const double v = t / 10.0;
    const double x = kLeft + v * kSize, y = kTop + (1.0 - v) * kSize;
    out << "<text x=\"" << x << "\" y=\"" << kTop + kSize + 16 << "\" text-anchor=\"middle\">" << v << "</text>\n";
    out << "<text x=\"" << kLeft - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << v << "</text>\n";
  }
  out << "<text x=\"" << kLeft + kSize / 2 << "\" y=\"" << kTop + kSize + 34 << "\" text-anchor=\"middle\">Recall</text>\n";
  out << "<text transform=\"translate(14," << kTop + kSize / 2 << ") rotate(-90)\" text-anchor=\"middle\">Precision</text>\n";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const char* colour = colours[i % 6];
    out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
    double prev_r = 0.0;
    bool first = true;
    for (const auto& p : curves[i].points) {
      if (first) {
        out << kLeft + prev_r * kSize << ',' << kTop + (1.0 - p.precision) * kSize << ' ';
        first = false;
      }
      out << kLeft + p.recall * kSize << ',' << kTop + (1.0 - p.precision) * kSize << ' ';
      prev_r = p.recall;
    }
    out << "\"/>\n";
    const std::string label = i < labels.size() ? labels[i] : "curve " + std::to_string(i + 1);
    char ap[32];
    std::snprintf(ap, sizeof ap, " (AP %.3f)", curves[i].ap);
    const double ly = kTop + 14 + 18.0 * static_cast<double>(i);
    out << "<line x1=\"430\" y1=\"" << ly - 4 << "\" x2=\"450\" y2=\"" << ly - 4 << "\" stroke=\"" << colour
        << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"455\" y=\"" << ly << "\">" << label << ap << "</text>\n";
  }
  out << "</svg>\n";
  finish(out, path);
}

RgbImage render_overlay(const FusedImage& image, std::span<const Detection> dets) {
  RgbImage rgb = to_rgb(image);
  for (const auto& d : dets) draw_rect(rgb, d.box.x, d.box.y, d.box.w, d.box.h, 0, 255, 0, 2);
  return rgb;
}

void write_overlay(const std::string& path, const FusedImage& image, std::span<const Detection> dets) {
  write_png_rgb(path, render_overlay(image, dets));
}

template <typename T>
ImagePlane feature_map_image(Network<T>& network, const FusedImage& image, const std::string& layer,
                             const InputConfig& input, FeatureProjection projection) {
  const auto prepared = prepare_input<T>(image, input);
  const Tensor<T> fm = network.features_until(prepared.image, layer);
  const std::size_t c = fm.dim(1), h = fm.dim(2), w = fm.dim(3);
  std::vector<double> proj(h * w, projection == FeatureProjection::channel_max ? -std::numeric_limits<double>::infinity() : 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t i = 0; i < h * w; ++i) {
      const double v = static_cast<double>(fm[k * h * w + i]);
      if (projection == FeatureProjection::channel_max) {
        proj[i] = std::max(proj[i], v);
      } else {
        proj[i] += v / static_cast<double>(c);
      }
    }
  }
  ImagePlane out(w, h, 0);
  if (proj.empty()) return out;
  const auto [lo, hi] = std::minmax_element(proj.begin(), proj.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return out;
  for (std::size_t i = 0; i < proj.size(); ++i) {
    out.values[i] = static_cast<std::uint8_t>(std::lround(255.0 * (proj[i] - *lo) / range));
  }
  return out;
}

template <typename T>
void dump_feature_map(Network<T>& network, const FusedImage& image, const std::string& layer,
                      const std::string& out_path, const InputConfig& input, FeatureProjection projection) {
  write_png_gray(out_path, feature_map_image(network, image, layer, input, projection));
}

template ImagePlane feature_map_image<float>(Network<float>&, const FusedImage&, const std::string&,
                                             const InputConfig&, FeatureProjection);
template ImagePlane feature_map_image<double>(Network<double>&, const FusedImage&, const std::string&,
                                              const InputConfig&, FeatureProjection);
template void dump_feature_map<float>(Network<float>&, const FusedImage&, const std::string&, const std::string&,
                                      const InputConfig&, FeatureProjection);
template void dump_feature_map<double>(Network<double>&, const FusedImage&, const std::string&, const std::string&,
                                       const InputConfig&, FeatureProjection);

}  // namespace mcdet
