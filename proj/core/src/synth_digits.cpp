#include "advkit/synth_digits.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <variant>
#include <vector>

#include "advkit/error.hpp"
#include "advkit/rng.hpp"

namespace advkit {
namespace {

struct Point {
  double x, y;
};

struct Polyline {
  std::vector<Point> points;
};

// Ellipse arc in unit-box coordinates, y pointing down, angles in degrees.
struct Arc {
  double cx, cy, rx, ry, from, to;
};

using Stroke = std::variant<Polyline, Arc>;

const std::vector<Stroke>& glyph(int digit) {
  static const std::vector<std::vector<Stroke>> glyphs = {
      {Arc{.5, .5, .42, .5, 0, 360}},
      {Polyline{{{.3, .2}, {.55, 0}, {.55, 1}}}},
      {Arc{.5, .28, .4, .28, 180, 400}, Polyline{{{.806, .46}, {.1, 1}, {.92, 1}}}},
      {Arc{.5, .25, .38, .25, 200, 450}, Arc{.5, .74, .42, .26, -90, 160}},
      {Polyline{{{.7, 1}, {.7, 0}, {.05, .68}, {.95, .68}}}},
      {Polyline{{{.9, 0}, {.25, 0}, {.19, .5}}}, Arc{.5, .7, .4, .3, -140, 150}},
      {Polyline{{{.8, .02}, {.45, .22}, {.13, .68}}}, Arc{.5, .72, .38, .28, 0, 360}},
      {Polyline{{{.05, 0}, {.95, 0}, {.4, 1}}}},
      {Arc{.5, .25, .34, .25, 0, 360}, Arc{.5, .74, .42, .26, 0, 360}},
      {Arc{.5, .28, .4, .28, 0, 360}, Polyline{{{.9, .3}, {.62, 1}}}},
  };
  return glyphs.at(static_cast<std::size_t>(digit));
}

double jitter(Rng& rng, double amount) { return (rng.uniform() * 2.0 - 1.0) * amount; }

std::vector<Polyline> sample_strokes(int digit, Rng& rng) {
  std::vector<Polyline> out;
  for (const Stroke& s : glyph(digit)) {
    if (const auto* line = std::get_if<Polyline>(&s)) {
      Polyline p;
      for (Point v : line->points) p.points.push_back({v.x + jitter(rng, .06), v.y + jitter(rng, .05)});
      out.push_back(std::move(p));
    } else {
      const Arc& a = std::get<Arc>(s);
      const double cx = a.cx + jitter(rng, .04), cy = a.cy + jitter(rng, .04);
      const double rx = a.rx * (1.0 + jitter(rng, .15)), ry = a.ry * (1.0 + jitter(rng, .12));
      const double from = a.from + jitter(rng, 10.0), to = a.to + jitter(rng, 10.0);
      constexpr int kSegments = 28;
      Polyline p;
      for (int i = 0; i <= kSegments; ++i) {
        const double t = (from + (to - from) * i / kSegments) * std::numbers::pi / 180.0;
        p.points.push_back({cx + rx * std::cos(t), cy + ry * std::sin(t)});
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

double segment_distance(Point p, Point a, Point b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = p.x - (a.x + t * vx), dy = p.y - (a.y + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

Tensor render(int digit, std::size_t size, Rng& rng) {
  std::vector<Polyline> strokes = sample_strokes(digit, rng);
  const double s = static_cast<double>(size);
  // Glyph box of roughly 0.5 x 0.7 of the canvas, as in MNIST's 20px box.
  const double box_h = s * (0.62 + jitter(rng, 0.06) + 0.06);
  const double box_w = box_h * (0.62 + jitter(rng, 0.1));
  const double angle = jitter(rng, 0.22);
  const double shear = jitter(rng, 0.25);
  const double cx = s / 2 + jitter(rng, s * 0.07), cy = s / 2 + jitter(rng, s * 0.07);
  const double half_width = 0.8 + rng.uniform() * 0.9;
  const double peak = 0.85 + rng.uniform() * 0.15;
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (Polyline& p : strokes)
    for (Point& v : p.points) {
      const double ux = (v.x - 0.5) * box_w + shear * (v.y - 0.5) * box_h;
      const double uy = (v.y - 0.5) * box_h;
      v = {cx + ca * ux - sa * uy, cy + sa * ux + ca * uy};
    }
  Tensor img(Shape{1, size, size});
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const Point c{x + 0.5, y + 0.5};
      double d = 1e9;
      for (const Polyline& p : strokes)
        for (std::size_t i = 1; i < p.points.size(); ++i)
          d = std::min(d, segment_distance(c, p.points[i - 1], p.points[i]));
      const double v = std::clamp(half_width + 0.5 - d, 0.0, 1.0) * peak;
      img[y * size + x] = static_cast<float>(v);
    }
  return img;
}

}  // namespace

Dataset synth_digits(const SynthDigitsConfig& config) {
  if (config.count == 0) fail(Errc::invalid_argument, "synth_digits: count must be positive");
  if (config.image_size < 8) fail(Errc::invalid_argument, "synth_digits: image size below 8");
  std::vector<int> labels(config.count);
  for (std::size_t i = 0; i < config.count; ++i) labels[i] = static_cast<int>(i % 10);
  Rng order(derive_seed(config.seed, 0));
  order.shuffle(std::span<int>(labels));
  std::vector<Tensor> images;
  images.reserve(config.count);
  for (std::size_t i = 0; i < config.count; ++i) {
    Rng rng(derive_seed(config.seed, i + 1));
    images.push_back(render(labels[i], config.image_size, rng));
  }
  std::vector<std::string> names;
  for (int d = 0; d < 10; ++d) names.push_back(std::to_string(d));
  return Dataset(std::move(images), std::move(labels), std::move(names));
}

}  // namespace advkit
