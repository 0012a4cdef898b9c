#include "ipgdn/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

namespace ipgdn {

namespace {

constexpr int kWidth = 880;
constexpr int kHeight = 640;
constexpr int kMargin = 40;
constexpr int kLegendWidth = 140;

const char* kPalette[] = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948",
                          "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac", "#1f77b4", "#8c564b"};
constexpr int kPaletteSize = static_cast<int>(sizeof(kPalette) / sizeof(kPalette[0]));

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

void write_scatter_svg(const std::filesystem::path& path, const ad::Tensor& coords,
                       const std::vector<int>& labels, int num_classes) {
  if (coords.cols() != 2) {
    throw ShapeError("write_scatter_svg: coordinates must be n x 2, got " +
                     ad::shape_string(coords));
  }
  if (labels.size() != static_cast<std::size_t>(coords.rows())) {
    throw ValidationError("write_scatter_svg: label count does not match coordinate rows");
  }

  const int n = coords.rows();
  const auto v = coords.value();
  double min_x = v[0], max_x = v[0], min_y = v[1], max_y = v[1];
  for (int i = 0; i < n; ++i) {
    min_x = std::min(min_x, v[static_cast<std::size_t>(i) * 2]);
    max_x = std::max(max_x, v[static_cast<std::size_t>(i) * 2]);
    min_y = std::min(min_y, v[static_cast<std::size_t>(i) * 2 + 1]);
    max_y = std::max(max_y, v[static_cast<std::size_t>(i) * 2 + 1]);
  }
  const double span_x = max_x > min_x ? max_x - min_x : 1.0;
  const double span_y = max_y > min_y ? max_y - min_y : 1.0;
  const double plot_w = kWidth - kLegendWidth - 2 * kMargin;
  const double plot_h = kHeight - 2 * kMargin;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());

  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  out << "  <rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
  out << "  <g stroke=\"none\">\n";
  for (int i = 0; i < n; ++i) {
    const double x = v[static_cast<std::size_t>(i) * 2];
    const double y = v[static_cast<std::size_t>(i) * 2 + 1];
    const double cx = kMargin + (x - min_x) / span_x * plot_w;
    // SVG y axis points down.
    const double cy = kMargin + (max_y - y) / span_y * plot_h;
    const int label = labels[static_cast<std::size_t>(i)];
    const char* color = label < 0 ? "#888888" : kPalette[label % kPaletteSize];
    out << "    <circle cx=\"" << fmt2(cx) << "\" cy=\"" << fmt2(cy)
        << "\" r=\"3\" fill=\"" << color << "\" fill-opacity=\"0.8\" data-x=\"" << fmt(x)
        << "\" data-y=\"" << fmt(y) << "\"/>\n";
  }
  out << "  </g>\n";

  // Legend.
  const bool any_unlabeled = std::any_of(labels.begin(), labels.end(), [](int y) { return y < 0; });
  out << "  <g font-family=\"sans-serif\" font-size=\"13\">\n";
  const int lx = kWidth - kLegendWidth - kMargin / 2;
  int ly = kMargin;
  for (int c = 0; c < num_classes; ++c) {
    out << "    <rect x=\"" << lx << "\" y=\"" << ly << "\" width=\"12\" height=\"12\" fill=\""
        << kPalette[c % kPaletteSize] << "\"/>\n";
    out << "    <text x=\"" << lx + 18 << "\" y=\"" << ly + 11 << "\">class " << c << "</text>\n";
    ly += 20;
  }
  if (any_unlabeled) {
    out << "    <rect x=\"" << lx << "\" y=\"" << ly << "\" width=\"12\" height=\"12\" fill=\"#888888\"/>\n";
    out << "    <text x=\"" << lx + 18 << "\" y=\"" << ly + 11 << "\">unlabeled</text>\n";
  }
  out << "  </g>\n";
  out << "</svg>\n";
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace ipgdn
