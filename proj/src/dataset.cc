#include "fse/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "fse/error.hpp"
#include "fse/rng.hpp"

namespace fse {

ImageDataset ImageDataset::subset(int64_t start, int64_t count) const {
  require(start >= 0 && count >= 0 && start + count <= n, "dataset: subset [", start, ",",
          start + count, ") out of range for n=", n);
  ImageDataset out;
  out.n = count;
  out.height = height;
  out.width = width;
  out.pixels.assign(pixels.begin() + start * image_size(),
                    pixels.begin() + (start + count) * image_size());
  if (has_labels()) out.labels.assign(labels.begin() + start, labels.begin() + start + count);
  return out;
}

ImageDataset binarize(const ImageDataset& data, uint64_t seed) {
  ImageDataset out = data;
  const uint64_t key = stream_key(seed, "binarize");
  const int64_t sz = data.image_size();
  for (int64_t i = 0; i < data.n; ++i) {
    float* px = out.image(i);
    for (int64_t j = 0; j < sz; ++j) {
      const float v = px[j];
      require(v >= 0.0f && v <= 1.0f, "binarize: pixel value ", v, " outside [0,1] at image ", i);
      const double u = u64_to_unit_double(entry_hash(key, static_cast<uint64_t>(i),
                                                     static_cast<uint64_t>(j)));
      px[j] = u < static_cast<double>(v) ? 1.0f : 0.0f;
    }
  }
  return out;
}

ImageDataset quantize(const ImageDataset& data, int bits) {
  require(bits >= 1 && bits <= 8, "quantize: bits ", bits, " outside [1,8]");
  ImageDataset out = data;
  const float levels = static_cast<float>((1 << bits) - 1);
  for (float& v : out.pixels) {
    require(v >= 0.0f && v <= 1.0f, "quantize: pixel value ", v, " outside [0,1]");
    v = std::floor(v * levels + 0.5f);
  }
  return out;
}

namespace {

struct Pt {
  double x, y;
};

double seg_dist(Pt p, Pt a, Pt b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double wx = p.x - a.x, wy = p.y - a.y;
  const double vv = vx * vx + vy * vy;
  double t = vv > 0 ? (wx * vx + wy * vy) / vv : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = p.x - (a.x + t * vx), dy = p.y - (a.y + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

void ring(std::vector<std::pair<Pt, Pt>>& segs, Pt c, double r, int sides = 12) {
  Pt prev{c.x + r, c.y};
  for (int i = 1; i <= sides; ++i) {
    const double a = 2.0 * M_PI * i / sides;
    Pt cur{c.x + r * std::cos(a), c.y + r * std::sin(a)};
    segs.push_back({prev, cur});
    prev = cur;
  }
}

void polyline(std::vector<std::pair<Pt, Pt>>& segs, std::initializer_list<Pt> pts) {
  const Pt* p = pts.begin();
  for (size_t i = 1; i < pts.size(); ++i) segs.push_back({p[i - 1], p[i]});
}

// stroke skeletons for the 10 glyph classes, in unit coordinates (y down)
std::vector<std::pair<Pt, Pt>> glyph_segments(int cls) {
  std::vector<std::pair<Pt, Pt>> s;
  switch (cls) {
    case 0:
      ring(s, {0.5, 0.5}, 0.30);
      break;
    case 1:
      polyline(s, {{0.5, 0.14}, {0.5, 0.86}});
      break;
    case 2:
      polyline(s, {{0.26, 0.30}, {0.42, 0.15}, {0.68, 0.18}, {0.72, 0.38}, {0.30, 0.84},
                   {0.75, 0.84}});
      break;
    case 3:
      polyline(s, {{0.28, 0.18}, {0.68, 0.19}, {0.52, 0.47}, {0.70, 0.62}, {0.58, 0.84},
                   {0.28, 0.82}});
      break;
    case 4:
      polyline(s, {{0.62, 0.86}, {0.62, 0.14}, {0.28, 0.58}, {0.80, 0.58}});
      break;
    case 5:
      polyline(s, {{0.72, 0.15}, {0.31, 0.16}, {0.30, 0.46}, {0.62, 0.44}, {0.72, 0.64},
                   {0.58, 0.85}, {0.28, 0.80}});
      break;
    case 6:
      polyline(s, {{0.64, 0.14}, {0.38, 0.42}, {0.32, 0.66}});
      ring(s, {0.50, 0.68}, 0.18);
      break;
    case 7:
      polyline(s, {{0.26, 0.16}, {0.76, 0.16}, {0.44, 0.86}});
      break;
    case 8:
      ring(s, {0.5, 0.31}, 0.17);
      ring(s, {0.5, 0.69}, 0.19);
      break;
    case 9:
      ring(s, {0.48, 0.33}, 0.18);
      polyline(s, {{0.66, 0.36}, {0.58, 0.86}});
      break;
    default:
      fail("glyph: class ", cls, " out of range");
  }
  return s;
}

void render_glyph(float* px, int64_t h, int64_t w, int cls, CounterRng& rng) {
  auto segs = glyph_segments(cls);
  // per-sample jitter: shift, scale, rotation, stroke width
  const double dx = rng.next_uniform(-0.07, 0.07);
  const double dy = rng.next_uniform(-0.07, 0.07);
  const double sc = rng.next_uniform(0.85, 1.10);
  const double rot = rng.next_uniform(-0.18, 0.18);
  const double radius = rng.next_uniform(0.050, 0.075);
  const double cr = std::cos(rot), sr = std::sin(rot);
  auto xform = [&](Pt p) {
    const double cx = p.x - 0.5, cy = p.y - 0.5;
    return Pt{0.5 + dx + sc * (cr * cx - sr * cy), 0.5 + dy + sc * (sr * cx + cr * cy)};
  };
  for (auto& sg : segs) {
    sg.first = xform(sg.first);
    sg.second = xform(sg.second);
  }
  const double aa = 0.035;  // edge falloff width
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      const Pt p{(x + 0.5) / static_cast<double>(w), (y + 0.5) / static_cast<double>(h)};
      double d = 1e9;
      for (const auto& sg : segs) d = std::min(d, seg_dist(p, sg.first, sg.second));
      const double v = std::clamp((radius - d) / aa + 1.0, 0.0, 1.0);
      px[y * w + x] = static_cast<float>(v);
    }
}

}  // namespace

ImageDataset make_synthetic_digits(int64_t n, int64_t height, int64_t width, uint64_t seed) {
  require(n > 0 && height >= 8 && width >= 8, "synthetic digits: need n>0 and size >= 8x8");
  ImageDataset out;
  out.n = n;
  out.height = height;
  out.width = width;
  out.pixels.assign(static_cast<size_t>(n * height * width), 0.0f);
  out.labels.resize(static_cast<size_t>(n));
  const uint64_t key = stream_key(seed, "synthetic-digits");
  for (int64_t i = 0; i < n; ++i) {
    CounterRng rng(stream_key(key, "sample", static_cast<uint64_t>(i)));
    const int cls = static_cast<int>(rng.next_below(10));
    out.labels[static_cast<size_t>(i)] = cls;
    render_glyph(out.image(i), height, width, cls, rng);
  }
  return out;
}

ImageDataset make_planted_attribute(int64_t n, int64_t height, int64_t width, uint64_t seed) {
  require(n > 0 && height >= 10 && width >= 10, "planted attribute: need n>0 and size >= 10x10");
  ImageDataset out;
  out.n = n;
  out.height = height;
  out.width = width;
  out.pixels.assign(static_cast<size_t>(n * height * width), 0.0f);
  out.labels.resize(static_cast<size_t>(n));
  const uint64_t key = stream_key(seed, "planted-attribute");
  const int base_classes[3] = {0, 1, 7};  // visually distinct backgrounds
  for (int64_t i = 0; i < n; ++i) {
    CounterRng rng(stream_key(key, "sample", static_cast<uint64_t>(i)));
    const int cls = base_classes[rng.next_below(3)];
    const int attr = static_cast<int>(rng.next_below(2));
    out.labels[static_cast<size_t>(i)] = attr;
    float* px = out.image(i);
    render_glyph(px, height, width, cls, rng);
    if (attr == 1) {
      // 3x3 bright patch planted near the top-left corner
      for (int64_t y = 1; y <= 3; ++y)
        for (int64_t x = 1; x <= 3; ++x) px[y * width + x] = 1.0f;
    }
  }
  return out;
}

}  // namespace fse
