#include <cstdio>
#include <string>

#include "sinkdesc/experiment.hpp"

namespace sinkdesc {

namespace {

constexpr double kSize = 800.0;
constexpr double kMargin = 20.0;

struct Viewport {
  const Box& box;
  double sx(double x) const { return kMargin + (x - box.lower[0]) / (box.upper[0] - box.lower[0]) * (kSize - 2 * kMargin); }
  double sy(double y) const { return kSize - kMargin - (y - box.lower[1]) / (box.upper[1] - box.lower[1]) * (kSize - 2 * kMargin); }
};

void append_circles(std::string& out, const DiscreteMeasure& m, const Viewport& vp, double mean_radius,
                    const char* style) {
  const double scale = mean_radius * m.size();
  char buf[160];
  for (int i = 0; i < m.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"%.3f\" %s/>\n", vp.sx(m.points()(i, 0)),
                  vp.sy(m.points()(i, 1)), scale * m.weights()[i], style);
    out += buf;
  }
}

}  // namespace

std::string render_scatter_svg(const std::vector<DiscreteMeasure>& sources, const DiscreteMeasure& particles,
                               const Box& box) {
  if (box.dim() != 2 || particles.dim() != 2) {
    throw Error(ErrorKind::DimensionMismatch, "scatter plots need two-dimensional measures");
  }
  const Viewport vp{box};
  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"800\" height=\"800\" "
         "viewBox=\"0 0 800 800\">\n";
  out += "<rect x=\"0\" y=\"0\" width=\"800\" height=\"800\" fill=\"white\"/>\n";
  char frame[200];
  std::snprintf(frame, sizeof(frame),
                "<rect x=\"%.0f\" y=\"%.0f\" width=\"%.0f\" height=\"%.0f\" fill=\"none\" stroke=\"black\"/>\n",
                kMargin, kMargin, kSize - 2 * kMargin, kSize - 2 * kMargin);
  out += frame;
  out += "<g id=\"sources\">\n";
  for (const DiscreteMeasure& s : sources) {
    if (s.dim() == 2) append_circles(out, s, vp, 1.5, "fill=\"gray\" fill-opacity=\"0.5\"");
  }
  out += "</g>\n<g id=\"particles\">\n";
  append_circles(out, particles, vp, 3.0, "fill=\"crimson\"");
  out += "</g>\n</svg>\n";
  return out;
}

}  // namespace sinkdesc
