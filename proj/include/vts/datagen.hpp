#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vts/rng.hpp"
#include "vts/tensor.hpp"

namespace vts::data {

enum class Motion { linear, elliptic };
enum class BounceMode { appearance, bbox_corner };
enum class SpriteSource { procedural, image_bank };

std::string to_string(Motion m);
std::string to_string(BounceMode m);
std::string to_string(SpriteSource s);
Motion motion_from_string(const std::string& s);
BounceMode bounce_from_string(const std::string& s);
SpriteSource sprites_from_string(const std::string& s);

struct DataConfig {
  int frame_h = 50;
  int frame_w = 50;
  int seq_len = 20;
  int count_min = 0;
  int max_objects = 2;  // count sampled uniformly from [count_min, max_objects]
  Motion motion = Motion::linear;
  bool overlap_first_frame = true;
  BounceMode bounce = BounceMode::appearance;
  SpriteSource sprites = SpriteSource::procedural;
  std::string image_bank_path;
  int sprite_px_min = 12;
  int sprite_px_max = 20;
  double speed_min = 1.0;  // px/frame, linear motion
  double speed_max = 3.0;
  int margin_px = 0;  // 3 for the corner-bounce variant
  std::uint64_t seed = 0;

  std::string to_json() const;
  static DataConfig from_json(const std::string& text);
};

struct MotionParams {
  Motion motion = Motion::linear;
  std::array<double, 2> velocity{0, 0};        // linear, (x, y)
  std::array<double, 2> ellipse_center{0, 0};  // elliptic, pixel coords
  double semi_a = 0, semi_b = 0;               // elliptic semi-axes, pixels
  double phase = 0, omega = 0;                 // elliptic phase/angular velocity
};

struct SequenceAnnotation {
  int count = 0;
  // centers[t][i] = (x, y) pixel coordinates of the object's tight-bbox center
  std::vector<std::vector<std::array<double, 2>>> centers;
  std::vector<MotionParams> motions;
  // per-object tight-bbox extent (c1-c0, r1-r0) in pixels
  std::vector<std::array<int, 2>> bbox_wh;
  std::uint64_t seed = 0;
};

struct FrameSequence {
  int t = 0, h = 0, w = 0;
  std::vector<double> pixels;  // [T,H,W], values in [0,1]

  double& at(int ti, int y, int x) {
    return pixels[(static_cast<std::size_t>(ti) * h + y) * w + x];
  }
  double at(int ti, int y, int x) const {
    return pixels[(static_cast<std::size_t>(ti) * h + y) * w + x];
  }
  Tensor frame(int ti) const;
};

// Sprite raster with the tight bounding box of its nonzero pixels
// (inclusive index ranges).
struct Sprite {
  Tensor raster;  // [s, s], values in [0, 1]
  int r0 = 0, r1 = 0, c0 = 0, c1 = 0;
  // tight-bbox center relative to the raster origin, (x, y)
  std::array<double, 2> bbox_center() const {
    return {0.5 * (c0 + c1), 0.5 * (r0 + r1)};
  }
};

// Anti-aliased rectangle, ellipse, or cross raster.
Sprite make_procedural_sprite(Rng& rng, int px_min, int px_max);
Sprite sprite_from_raster(Tensor raster);

// IDX-format (MNIST-style) image bank of square uint8 rasters.
std::vector<Tensor> load_image_bank(const std::string& path);

// center(t) = ellipse_center + (a cos(phase + omega t), b sin(phase + omega t))
std::array<double, 2> elliptic_trajectory_point(const MotionParams& p, double t);

// A sampled object with its initial tight-bbox-center position (x, y).
// Motion state is tracked in center coordinates; the raster origin for
// rendering is derived from it.
struct PlacedObject {
  Sprite sprite;
  MotionParams motion;
  std::array<double, 2> center0{0, 0};

  std::array<double, 2> origin_at(const std::array<double, 2>& center) const {
    auto bc = sprite.bbox_center();
    return {center[0] - bc[0], center[1] - bc[1]};
  }
};

// Samples object count, sprites, motion parameters and initial placements
// (honoring the first-frame non-overlap constraint when configured).
std::vector<PlacedObject> setup_scene(const DataConfig& cfg, Rng& rng);

// Renders a sampled scene into frames plus annotations.
std::pair<FrameSequence, SequenceAnnotation> render_sequence(
    const DataConfig& cfg, const std::vector<PlacedObject>& objects,
    std::uint64_t seed_echo);

// Deterministic given (cfg, rng_seed); setup_scene + render_sequence.
std::pair<FrameSequence, SequenceAnnotation> gen_sequence(const DataConfig& cfg,
                                                          std::uint64_t rng_seed);

// Renders one sprite at real-valued raster-origin offset (x, y) into an
// (otherwise untouched) frame accumulator via bilinear interpolation.
void render_sprite(const Sprite& s, double px, double py, Tensor& frame_acc);

// ---- dataset container ------------------------------------------------------
// DIR/frames.bin        uint8 frames, little-endian u32 header [S,T,H,W]
// DIR/annotations.jsonl one record per sequence
// DIR/manifest.json     config echo, format version "1", counts

void write_dataset(const DataConfig& cfg, int n_sequences, const std::string& dir);

class DatasetReader {
 public:
  explicit DatasetReader(const std::string& dir);
  int size() const { return n_; }
  int seq_len() const { return t_; }
  int frame_h() const { return h_; }
  int frame_w() const { return w_; }
  const DataConfig& config() const { return cfg_; }
  std::pair<FrameSequence, SequenceAnnotation> get(int i) const;

 private:
  DataConfig cfg_;
  int n_ = 0, t_ = 0, h_ = 0, w_ = 0;
  std::vector<std::uint8_t> frames_;
  std::vector<SequenceAnnotation> annotations_;
};

}  // namespace vts::data
