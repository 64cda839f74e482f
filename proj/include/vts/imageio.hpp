#pragma once

#include <array>
#include <string>
#include <vector>

#include "vts/tensor.hpp"

namespace vts::img {

struct Rgb {
  unsigned char r, g, b;
};

// Simple RGB raster with integer drawing primitives; y grows downwards.
class Canvas {
 public:
  Canvas(int w, int h, Rgb fill = {255, 255, 255});
  int width() const { return w_; }
  int height() const { return h_; }
  void set(int x, int y, Rgb c);
  void line(int x0, int y0, int x1, int y1, Rgb c);
  void rect(int x0, int y0, int x1, int y1, Rgb c);
  void cross(int x, int y, int arm, Rgb c);
  // 5x7 bitmap glyphs: digits, '.', '-', 'e', space
  void text(int x, int y, const std::string& s, Rgb c);
  void blit_gray(int x, int y, const Tensor& frame, double scale = 1.0);
  void save_png(const std::string& path) const;

 private:
  int w_, h_;
  std::vector<unsigned char> pix_;
};

struct Curve {
  std::string label;
  std::vector<double> values;  // y per integer timestep starting at `t0`
  int t0 = 1;
  Rgb color{0, 0, 0};
};

// Error-vs-timestep line plot with optional vertical markers (observation
// horizon, training horizon).
void render_curve_plot(const std::string& path, const std::vector<Curve>& curves,
                       const std::vector<std::pair<int, std::string>>& markers,
                       const std::string& title);

struct Overlay {
  std::array<double, 2> center_px;  // (x, y)
  std::array<double, 2> box_wh_px;  // box extent; zero disables the rectangle
  Rgb color;
};

// Horizontal strip of frames with per-frame overlays (centers and boxes).
void render_frame_strip(const std::string& path, const std::vector<Tensor>& frames,
                        const std::vector<std::vector<Overlay>>& overlays, int upscale = 3);

}  // namespace vts::img
