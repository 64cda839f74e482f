#include "vts/imageio.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace vts::img {

Canvas::Canvas(int w, int h, Rgb fill) : w_(w), h_(h) {
  pix_.resize(static_cast<std::size_t>(w) * h * 3);
  for (int i = 0; i < w * h; ++i) {
    pix_[3 * i] = fill.r;
    pix_[3 * i + 1] = fill.g;
    pix_[3 * i + 2] = fill.b;
  }
}

void Canvas::set(int x, int y, Rgb c) {
  if (x < 0 || x >= w_ || y < 0 || y >= h_) return;
  std::size_t i = (static_cast<std::size_t>(y) * w_ + x) * 3;
  pix_[i] = c.r;
  pix_[i + 1] = c.g;
  pix_[i + 2] = c.b;
}

void Canvas::line(int x0, int y0, int x1, int y1, Rgb c) {
  int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  for (;;) {
    set(x0, y0, c);
    if (x0 == x1 && y0 == y1) break;
    int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void Canvas::rect(int x0, int y0, int x1, int y1, Rgb c) {
  line(x0, y0, x1, y0, c);
  line(x1, y0, x1, y1, c);
  line(x1, y1, x0, y1, c);
  line(x0, y1, x0, y0, c);
}

void Canvas::cross(int x, int y, int arm, Rgb c) {
  line(x - arm, y, x + arm, y, c);
  line(x, y - arm, x, y + arm, c);
}

namespace {

// 5x7 glyphs, row-major bits (msb left)
struct Glyph {
  char ch;
  unsigned char rows[7];
};

constexpr Glyph kGlyphs[] = {
    {'0', {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e}},
    {'1', {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e}},
    {'2', {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f}},
    {'3', {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e}},
    {'4', {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02}},
    {'5', {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e}},
    {'6', {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e}},
    {'7', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e}},
    {'9', {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0c, 0x0c}},
    {'-', {0x00, 0x00, 0x00, 0x1f, 0x00, 0x00, 0x00}},
    {'e', {0x00, 0x00, 0x0e, 0x11, 0x1f, 0x10, 0x0e}},
    {'t', {0x08, 0x08, 0x1c, 0x08, 0x08, 0x09, 0x06}},
    {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
};

const Glyph* find_glyph(char ch) {
  for (const auto& g : kGlyphs)
    if (g.ch == ch) return &g;
  return nullptr;
}

std::string format_num(double v) {
  char buf[32];
  if (v == std::floor(v) && std::fabs(v) < 1e6)
    std::snprintf(buf, sizeof buf, "%.0f", v);
  else
    std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

}  // namespace

void Canvas::text(int x, int y, const std::string& s, Rgb c) {
  int cx = x;
  for (char ch : s) {
    const Glyph* g = find_glyph(ch);
    if (g != nullptr) {
      for (int row = 0; row < 7; ++row)
        for (int col = 0; col < 5; ++col)
          if (g->rows[row] & (1 << (4 - col))) set(cx + col, y + row, c);
    }
    cx += 6;
  }
}

void Canvas::blit_gray(int x, int y, const Tensor& frame, double scale) {
  int h = frame.dim(0), w = frame.dim(1);
  for (int yy = 0; yy < h; ++yy)
    for (int xx = 0; xx < w; ++xx) {
      double v = std::clamp(frame.at(yy, xx) * scale, 0.0, 1.0);
      auto g = static_cast<unsigned char>(std::lround(v * 255.0));
      set(x + xx, y + yy, {g, g, g});
    }
}

void Canvas::save_png(const std::string& path) const {
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (fp == nullptr) throw std::runtime_error("png: cannot open " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error("png: write failed for " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w_), static_cast<png_uint_32>(h_), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < h_; ++y)
    png_write_row(png, const_cast<png_bytep>(&pix_[static_cast<std::size_t>(y) * w_ * 3]));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

void render_curve_plot(const std::string& path, const std::vector<Curve>& curves,
                       const std::vector<std::pair<int, std::string>>& markers,
                       const std::string& title) {
  const int width = 640, height = 400;
  const int ml = 50, mr = 15, mt = 30, mb = 35;
  Canvas canvas(width, height);
  int x0 = ml, x1 = width - mr, y0 = height - mb, y1 = mt;

  int t_min = 1, t_max = 2;
  double v_max = 1e-9;
  for (const auto& c : curves) {
    if (c.values.empty()) continue;
    t_min = std::min(t_min, c.t0);
    t_max = std::max(t_max, c.t0 + static_cast<int>(c.values.size()) - 1);
    for (double v : c.values) v_max = std::max(v_max, v);
  }
  for (const auto& m : markers) t_max = std::max(t_max, m.first);
  v_max *= 1.1;

  auto px = [&](double t) {
    return x0 + static_cast<int>((t - t_min) / std::max(1.0, double(t_max - t_min)) *
                                 (x1 - x0));
  };
  auto py = [&](double v) { return y0 - static_cast<int>(v / v_max * (y0 - y1)); };

  Rgb axis{60, 60, 60}, grid{225, 225, 225};
  for (int k = 0; k <= 5; ++k) {
    double v = v_max * k / 5;
    canvas.line(x0, py(v), x1, py(v), grid);
    canvas.text(4, py(v) - 3, format_num(v), axis);
  }
  int t_step = std::max(1, (t_max - t_min) / 10);
  for (int t = t_min; t <= t_max; t += t_step) {
    canvas.line(px(t), y0, px(t), y0 + 3, axis);
    canvas.text(px(t) - 5, y0 + 6, format_num(t), axis);
  }
  canvas.line(x0, y0, x1, y0, axis);
  canvas.line(x0, y0, x0, y1, axis);
  canvas.text(x0, 8, title, axis);

  for (const auto& m : markers) {
    Rgb mc{150, 150, 150};
    canvas.line(px(m.first), y0, px(m.first), y1, mc);
    canvas.text(px(m.first) + 3, y1 + 2, m.second, mc);
  }

  int legend_y = y1 + 14;
  for (const auto& c : curves) {
    for (std::size_t i = 1; i < c.values.size(); ++i) {
      int t_prev = c.t0 + static_cast<int>(i) - 1;
      canvas.line(px(t_prev), py(c.values[i - 1]), px(t_prev + 1), py(c.values[i]),
                  c.color);
    }
    canvas.line(x0 + 8, legend_y + 3, x0 + 28, legend_y + 3, c.color);
    canvas.text(x0 + 34, legend_y, c.label, c.color);
    legend_y += 12;
  }
  canvas.save_png(path);
}

void render_frame_strip(const std::string& path, const std::vector<Tensor>& frames,
                        const std::vector<std::vector<Overlay>>& overlays, int upscale) {
  if (frames.empty()) throw std::invalid_argument("render_frame_strip: no frames");
  int h = frames[0].dim(0), w = frames[0].dim(1);
  int sep = 1;
  int total_w = static_cast<int>(frames.size()) * (w * upscale + sep) - sep;
  Canvas canvas(total_w, h * upscale, {40, 40, 60});
  for (std::size_t f = 0; f < frames.size(); ++f) {
    int ox = static_cast<int>(f) * (w * upscale + sep);
    // nearest-neighbor upscale
    for (int y = 0; y < h * upscale; ++y)
      for (int x = 0; x < w * upscale; ++x) {
        double v = std::clamp(frames[f].at(y / upscale, x / upscale), 0.0, 1.0);
        auto g = static_cast<unsigned char>(std::lround(v * 255.0));
        canvas.set(ox + x, y, {g, g, g});
      }
    if (f < overlays.size()) {
      for (const auto& ov : overlays[f]) {
        int cx = ox + static_cast<int>(std::lround(ov.center_px[0] * upscale));
        int cy = static_cast<int>(std::lround(ov.center_px[1] * upscale));
        canvas.cross(cx, cy, 2, ov.color);
        if (ov.box_wh_px[0] > 0 && ov.box_wh_px[1] > 0) {
          int hx = static_cast<int>(std::lround(0.5 * ov.box_wh_px[0] * upscale));
          int hy = static_cast<int>(std::lround(0.5 * ov.box_wh_px[1] * upscale));
          canvas.rect(cx - hx, cy - hy, cx + hx, cy + hy, ov.color);
        }
      }
    }
  }
  canvas.save_png(path);
}

}  // namespace vts::img
