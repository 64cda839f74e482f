#include "vts/datagen.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace vts::data {

using nlohmann::json;

std::string to_string(Motion m) { return m == Motion::linear ? "linear" : "elliptic"; }
std::string to_string(BounceMode m) {
  return m == BounceMode::appearance ? "appearance" : "bbox_corner";
}
std::string to_string(SpriteSource s) {
  return s == SpriteSource::procedural ? "procedural" : "image_bank";
}

Motion motion_from_string(const std::string& s) {
  if (s == "linear") return Motion::linear;
  if (s == "elliptic") return Motion::elliptic;
  throw std::invalid_argument("unknown motion: " + s);
}
BounceMode bounce_from_string(const std::string& s) {
  if (s == "appearance") return BounceMode::appearance;
  if (s == "bbox_corner" || s == "bbox-corner") return BounceMode::bbox_corner;
  throw std::invalid_argument("unknown bounce mode: " + s);
}
SpriteSource sprites_from_string(const std::string& s) {
  if (s == "procedural") return SpriteSource::procedural;
  if (s == "image_bank" || s == "image-bank") return SpriteSource::image_bank;
  throw std::invalid_argument("unknown sprite source: " + s);
}

static json config_to_json_obj(const DataConfig& c) {
  return json{{"frame_hw", {c.frame_h, c.frame_w}},
              {"seq_len", c.seq_len},
              {"count_min", c.count_min},
              {"max_objects", c.max_objects},
              {"motion", to_string(c.motion)},
              {"overlap_first_frame", c.overlap_first_frame},
              {"bounce_mode", to_string(c.bounce)},
              {"sprite_source", to_string(c.sprites)},
              {"image_bank_path", c.image_bank_path},
              {"sprite_px", {c.sprite_px_min, c.sprite_px_max}},
              {"speed", {c.speed_min, c.speed_max}},
              {"margin_px", c.margin_px},
              {"seed", c.seed}};
}

static DataConfig config_from_json_obj(const json& j) {
  DataConfig c;
  c.frame_h = j.at("frame_hw")[0];
  c.frame_w = j.at("frame_hw")[1];
  c.seq_len = j.at("seq_len");
  c.count_min = j.value("count_min", 0);
  c.max_objects = j.at("max_objects");
  c.motion = motion_from_string(j.at("motion"));
  c.overlap_first_frame = j.at("overlap_first_frame");
  c.bounce = bounce_from_string(j.at("bounce_mode"));
  c.sprites = sprites_from_string(j.at("sprite_source"));
  c.image_bank_path = j.value("image_bank_path", "");
  c.sprite_px_min = j.at("sprite_px")[0];
  c.sprite_px_max = j.at("sprite_px")[1];
  c.speed_min = j.at("speed")[0];
  c.speed_max = j.at("speed")[1];
  c.margin_px = j.value("margin_px", 0);
  c.seed = j.at("seed");
  return c;
}

std::string DataConfig::to_json() const { return config_to_json_obj(*this).dump(2); }

DataConfig DataConfig::from_json(const std::string& text) {
  return config_from_json_obj(json::parse(text));
}

Tensor FrameSequence::frame(int ti) const {
  Tensor f({h, w});
  const double* src = &pixels[static_cast<std::size_t>(ti) * h * w];
  std::copy(src, src + static_cast<std::size_t>(h) * w, f.data.begin());
  return f;
}

// ---- sprites ----------------------------------------------------------------

Sprite sprite_from_raster(Tensor raster) {
  Sprite s;
  s.raster = std::move(raster);
  int n = s.raster.dim(0), m = s.raster.dim(1);
  s.r0 = n;
  s.r1 = -1;
  s.c0 = m;
  s.c1 = -1;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < m; ++x)
      if (s.raster.at(y, x) > 0.0) {
        s.r0 = std::min(s.r0, y);
        s.r1 = std::max(s.r1, y);
        s.c0 = std::min(s.c0, x);
        s.c1 = std::max(s.c1, x);
      }
  if (s.r1 < 0) throw std::invalid_argument("sprite raster is empty");
  return s;
}

namespace {

enum class Shape { rectangle, ellipse, cross };

// coverage test in sprite-local coordinates centered at 0
bool inside_shape(Shape shape, double x, double y, double hx, double hy, double bar) {
  switch (shape) {
    case Shape::rectangle:
      return std::fabs(x) <= hx && std::fabs(y) <= hy;
    case Shape::ellipse:
      return (x * x) / (hx * hx) + (y * y) / (hy * hy) <= 1.0;
    case Shape::cross:
      return (std::fabs(x) <= hx && std::fabs(y) <= bar * hy) ||
             (std::fabs(y) <= hy && std::fabs(x) <= bar * hx);
  }
  return false;
}

}  // namespace

Sprite make_procedural_sprite(Rng& rng, int px_min, int px_max) {
  int s = rng.uniform_int(px_min, px_max);
  Shape shape = static_cast<Shape>(rng.uniform_int(0, 2));
  double hx = 0.5 * s * rng.uniform(0.55, 0.95);
  double hy = 0.5 * s * rng.uniform(0.55, 0.95);
  double bar = rng.uniform(0.22, 0.38);
  double brightness = rng.uniform(0.75, 1.0);
  double cx = 0.5 * (s - 1), cy = 0.5 * (s - 1);
  Tensor raster({s, s});
  const int ss = 4;  // supersampling per axis
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      int hit = 0;
      for (int sy = 0; sy < ss; ++sy)
        for (int sx = 0; sx < ss; ++sx) {
          double px = x - cx + (sx + 0.5) / ss - 0.5;
          double py = y - cy + (sy + 0.5) / ss - 0.5;
          if (inside_shape(shape, px, py, hx, hy, bar)) ++hit;
        }
      raster.at(y, x) = brightness * hit / (ss * ss);
    }
  return sprite_from_raster(std::move(raster));
}

std::vector<Tensor> load_image_bank(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("image bank: cannot open " + path);
  auto read_u32be = [&]() {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
  };
  std::uint32_t magic = read_u32be();
  if (magic != 0x00000803)
    throw std::runtime_error("image bank: not an IDX image file: " + path);
  std::uint32_t n = read_u32be(), rows = read_u32be(), cols = read_u32be();
  std::vector<Tensor> bank;
  bank.reserve(n);
  std::vector<unsigned char> buf(static_cast<std::size_t>(rows) * cols);
  for (std::uint32_t i = 0; i < n; ++i) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) throw std::runtime_error("image bank: truncated file");
    Tensor t({static_cast<int>(rows), static_cast<int>(cols)});
    for (std::size_t j = 0; j < buf.size(); ++j) t.data[j] = buf[j] / 255.0;
    bank.push_back(std::move(t));
  }
  return bank;
}

// ---- rendering --------------------------------------------------------------

void render_sprite(const Sprite& s, double px, double py, Tensor& frame_acc) {
  int h = frame_acc.dim(0), w = frame_acc.dim(1);
  int n = s.raster.dim(0), m = s.raster.dim(1);
  int x_lo = std::max(0, static_cast<int>(std::floor(px)));
  int x_hi = std::min(w - 1, static_cast<int>(std::ceil(px)) + m - 1);
  int y_lo = std::max(0, static_cast<int>(std::floor(py)));
  int y_hi = std::min(h - 1, static_cast<int>(std::ceil(py)) + n - 1);
  for (int y = y_lo; y <= y_hi; ++y) {
    double ry = y - py;
    int r0 = static_cast<int>(std::floor(ry));
    double fy = ry - r0;
    for (int x = x_lo; x <= x_hi; ++x) {
      double rx = x - px;
      int q0 = static_cast<int>(std::floor(rx));
      double fx = rx - q0;
      double acc = 0.0;
      for (int dy = 0; dy <= 1; ++dy)
        for (int dx = 0; dx <= 1; ++dx) {
          int yy = r0 + dy, xx = q0 + dx;
          if (yy < 0 || yy >= n || xx < 0 || xx >= m) continue;
          double wy = dy == 0 ? 1.0 - fy : fy;
          double wx = dx == 0 ? 1.0 - fx : fx;
          acc += wy * wx * s.raster.at(yy, xx);
        }
      frame_acc.at(y, x) += acc;
    }
  }
}

// ---- motion -----------------------------------------------------------------

std::array<double, 2> elliptic_trajectory_point(const MotionParams& p, double t) {
  double ang = p.phase + p.omega * t;
  return {p.ellipse_center[0] + p.semi_a * std::cos(ang),
          p.ellipse_center[1] + p.semi_b * std::sin(ang)};
}

namespace {

// Reflects x into [lo, hi], flipping `v` on each bounce.
void reflect_axis(double& x, double& v, double lo, double hi) {
  for (int guard = 0; guard < 64 && (x < lo || x > hi); ++guard) {
    if (x < lo) {
      x = 2 * lo - x;
      v = -v;
    } else if (x > hi) {
      x = 2 * hi - x;
      v = -v;
    }
  }
}

// Admissible tight-bbox-center interval: every nonzero pixel stays in frame
// (appearance bounce), or the top-left bbox corner bounces against virtually
// shifted walls while the rest of the sprite may leave (bbox_corner).
struct AxisBounds {
  double lo, hi;
};

AxisBounds axis_bounds(const DataConfig& cfg, int extent, int b0, int b1) {
  double half = 0.5 * (b1 - b0);
  if (cfg.bounce == BounceMode::appearance)
    return {half, static_cast<double>(extent - 1) - half};
  return {-static_cast<double>(cfg.margin_px) + half,
          static_cast<double>(extent - 1 + cfg.margin_px) + half};
}

PlacedObject sample_object(const DataConfig& cfg, Rng& rng,
                           const std::vector<Tensor>* bank) {
  PlacedObject obj;
  if (cfg.sprites == SpriteSource::procedural) {
    obj.sprite = make_procedural_sprite(rng, cfg.sprite_px_min, cfg.sprite_px_max);
  } else {
    if (bank == nullptr || bank->empty())
      throw std::runtime_error("gen_sequence: image bank is empty");
    obj.sprite = sprite_from_raster((*bank)[rng.uniform_int(0, static_cast<int>(bank->size()) - 1)]);
  }
  const Sprite& sp = obj.sprite;
  AxisBounds bx = axis_bounds(cfg, cfg.frame_w, sp.c0, sp.c1);
  AxisBounds by = axis_bounds(cfg, cfg.frame_h, sp.r0, sp.r1);
  if (bx.lo > bx.hi || by.lo > by.hi)
    throw std::runtime_error("gen_sequence: sprite too large for frame");

  if (cfg.motion == Motion::linear) {
    obj.motion.motion = Motion::linear;
    double speed = rng.uniform(cfg.speed_min, cfg.speed_max);
    double dir = rng.uniform(0, 2 * M_PI);
    obj.motion.velocity = {speed * std::cos(dir), speed * std::sin(dir)};
    obj.center0 = {rng.uniform(bx.lo, bx.hi), rng.uniform(by.lo, by.hi)};
  } else {
    obj.motion.motion = Motion::elliptic;
    bool ok = false;
    for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
      double max_ax = 0.5 * (bx.hi - bx.lo), max_ay = 0.5 * (by.hi - by.lo);
      double a = rng.uniform(1.5, std::max(1.5, std::min(10.0, max_ax)));
      double b = rng.uniform(1.5, std::max(1.5, std::min(10.0, max_ay)));
      double ecx = rng.uniform(bx.lo + a, bx.hi - a);
      double ecy = rng.uniform(by.lo + b, by.hi - b);
      if (ecx - a < bx.lo || ecx + a > bx.hi || ecy - b < by.lo || ecy + b > by.hi)
        continue;  // infeasible, resample
      obj.motion.ellipse_center = {ecx, ecy};
      obj.motion.semi_a = a;
      obj.motion.semi_b = b;
      obj.motion.phase = rng.uniform(0, 2 * M_PI);
      obj.motion.omega = (rng.uniform() < 0.5 ? 1.0 : -1.0) * rng.uniform(0.15, 0.5);
      ok = true;
    }
    if (!ok) throw std::runtime_error("gen_sequence: elliptic feasibility failed");
    obj.center0 = elliptic_trajectory_point(obj.motion, 0.0);
  }
  return obj;
}

bool sprites_overlap(const PlacedObject& a, const PlacedObject& b, int h, int w) {
  Tensor fa({h, w}), fb({h, w});
  auto pa = a.origin_at(a.center0);
  auto pb = b.origin_at(b.center0);
  render_sprite(a.sprite, pa[0], pa[1], fa);
  render_sprite(b.sprite, pb[0], pb[1], fb);
  for (int i = 0; i < h * w; ++i)
    if (fa.data[i] > 0.0 && fb.data[i] > 0.0) return true;
  return false;
}

}  // namespace

std::vector<PlacedObject> setup_scene(const DataConfig& cfg, Rng& rng) {
  if (cfg.seq_len < 1) throw std::invalid_argument("setup_scene: seq_len < 1");
  if (cfg.count_min < 0 || cfg.max_objects < cfg.count_min)
    throw std::invalid_argument("setup_scene: bad object count range");
  std::vector<Tensor> bank;
  const std::vector<Tensor>* bank_ptr = nullptr;
  if (cfg.sprites == SpriteSource::image_bank) {
    bank = load_image_bank(cfg.image_bank_path);
    bank_ptr = &bank;
  }
  int count = rng.uniform_int(cfg.count_min, cfg.max_objects);
  std::vector<PlacedObject> objs;
  const int retry_budget = 100;
  for (int attempt = 0;; ++attempt) {
    if (attempt >= retry_budget)
      throw std::runtime_error("setup_scene: placement retry budget exhausted");
    objs.clear();
    for (int i = 0; i < count; ++i) objs.push_back(sample_object(cfg, rng, bank_ptr));
    if (cfg.overlap_first_frame) break;
    bool any = false;
    for (std::size_t i = 0; i < objs.size() && !any; ++i)
      for (std::size_t j = i + 1; j < objs.size() && !any; ++j)
        any = sprites_overlap(objs[i], objs[j], cfg.frame_h, cfg.frame_w);
    if (!any) break;
  }
  return objs;
}

std::pair<FrameSequence, SequenceAnnotation> render_sequence(
    const DataConfig& cfg, const std::vector<PlacedObject>& objects,
    std::uint64_t seed_echo) {
  int count = static_cast<int>(objects.size());
  FrameSequence seq;
  seq.t = cfg.seq_len;
  seq.h = cfg.frame_h;
  seq.w = cfg.frame_w;
  seq.pixels.assign(static_cast<std::size_t>(seq.t) * seq.h * seq.w, 0.0);
  SequenceAnnotation ann;
  ann.count = count;
  ann.seed = seed_echo;
  for (const auto& o : objects) {
    ann.motions.push_back(o.motion);
    ann.bbox_wh.push_back({o.sprite.c1 - o.sprite.c0, o.sprite.r1 - o.sprite.r0});
  }
  ann.centers.resize(cfg.seq_len);

  struct State {
    std::array<double, 2> center;
    std::array<double, 2> vel;
  };
  std::vector<State> st;
  for (const auto& o : objects) st.push_back({o.center0, o.motion.velocity});

  for (int t = 0; t < cfg.seq_len; ++t) {
    if (t > 0) {
      for (int i = 0; i < count; ++i) {
        const Sprite& sp = objects[i].sprite;
        if (objects[i].motion.motion == Motion::linear) {
          AxisBounds bx = axis_bounds(cfg, cfg.frame_w, sp.c0, sp.c1);
          AxisBounds by = axis_bounds(cfg, cfg.frame_h, sp.r0, sp.r1);
          st[i].center[0] += st[i].vel[0];
          st[i].center[1] += st[i].vel[1];
          reflect_axis(st[i].center[0], st[i].vel[0], bx.lo, bx.hi);
          reflect_axis(st[i].center[1], st[i].vel[1], by.lo, by.hi);
        } else {
          st[i].center = elliptic_trajectory_point(objects[i].motion, static_cast<double>(t));
        }
      }
    }
    Tensor acc({cfg.frame_h, cfg.frame_w});
    ann.centers[t].resize(count);
    for (int i = 0; i < count; ++i) {
      auto p = objects[i].origin_at(st[i].center);
      render_sprite(objects[i].sprite, p[0], p[1], acc);
      ann.centers[t][i] = st[i].center;
    }
    for (int p = 0; p < cfg.frame_h * cfg.frame_w; ++p)
      seq.pixels[static_cast<std::size_t>(t) * cfg.frame_h * cfg.frame_w + p] =
          std::min(1.0, acc.data[p]);
  }
  return {std::move(seq), std::move(ann)};
}

std::pair<FrameSequence, SequenceAnnotation> gen_sequence(const DataConfig& cfg,
                                                          std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  auto objects = setup_scene(cfg, rng);
  return render_sequence(cfg, objects, rng_seed);
}

// ---- dataset container ------------------------------------------------------

namespace {

void write_u32le(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<char*>(b), 4);
}

std::uint32_t read_u32le(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

json annotation_to_json(int idx, const SequenceAnnotation& ann) {
  json centers = json::array();
  for (const auto& per_t : ann.centers) {
    json row = json::array();
    for (const auto& c : per_t) row.push_back({c[0], c[1]});
    centers.push_back(std::move(row));
  }
  json motions = json::array();
  for (const auto& m : ann.motions) {
    if (m.motion == Motion::linear) {
      motions.push_back({{"motion", "linear"}, {"velocity", {m.velocity[0], m.velocity[1]}}});
    } else {
      motions.push_back({{"motion", "elliptic"},
                         {"ellipse_center", {m.ellipse_center[0], m.ellipse_center[1]}},
                         {"semi_axes", {m.semi_a, m.semi_b}},
                         {"phase", m.phase},
                         {"omega", m.omega}});
    }
  }
  json bbox = json::array();
  for (const auto& b : ann.bbox_wh) bbox.push_back({b[0], b[1]});
  return json{{"seq", idx},
              {"count", ann.count},
              {"centers", std::move(centers)},
              {"motion", std::move(motions)},
              {"bbox_wh", std::move(bbox)},
              {"seed", ann.seed}};
}

SequenceAnnotation annotation_from_json(const json& j) {
  SequenceAnnotation ann;
  ann.count = j.at("count");
  ann.seed = j.at("seed");
  for (const auto& row : j.at("centers")) {
    std::vector<std::array<double, 2>> per_t;
    for (const auto& c : row) per_t.push_back({c[0], c[1]});
    ann.centers.push_back(std::move(per_t));
  }
  for (const auto& m : j.at("motion")) {
    MotionParams mp;
    mp.motion = motion_from_string(m.at("motion"));
    if (mp.motion == Motion::linear) {
      mp.velocity = {m.at("velocity")[0], m.at("velocity")[1]};
    } else {
      mp.ellipse_center = {m.at("ellipse_center")[0], m.at("ellipse_center")[1]};
      mp.semi_a = m.at("semi_axes")[0];
      mp.semi_b = m.at("semi_axes")[1];
      mp.phase = m.at("phase");
      mp.omega = m.at("omega");
    }
    ann.motions.push_back(mp);
  }
  for (const auto& b : j.at("bbox_wh")) ann.bbox_wh.push_back({b[0], b[1]});
  return ann;
}

}  // namespace

void write_dataset(const DataConfig& cfg, int n_sequences, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream frames(fs::path(dir) / "frames.bin", std::ios::binary);
  std::ofstream ann_out(fs::path(dir) / "annotations.jsonl");
  if (!frames || !ann_out) throw std::runtime_error("write_dataset: cannot open outputs");
  write_u32le(frames, static_cast<std::uint32_t>(n_sequences));
  write_u32le(frames, static_cast<std::uint32_t>(cfg.seq_len));
  write_u32le(frames, static_cast<std::uint32_t>(cfg.frame_h));
  write_u32le(frames, static_cast<std::uint32_t>(cfg.frame_w));
  std::vector<unsigned char> buf;
  for (int i = 0; i < n_sequences; ++i) {
    auto [seq, ann] = gen_sequence(cfg, mix_seed(cfg.seed, static_cast<std::uint64_t>(i)));
    buf.resize(seq.pixels.size());
    for (std::size_t p = 0; p < seq.pixels.size(); ++p)
      buf[p] = static_cast<unsigned char>(std::lround(seq.pixels[p] * 255.0));
    frames.write(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    ann_out << annotation_to_json(i, ann).dump() << '\n';
  }
  json manifest{{"format_version", "1"},
                {"n_sequences", n_sequences},
                {"config", config_to_json_obj(cfg)}};
  std::ofstream mf(fs::path(dir) / "manifest.json");
  mf << manifest.dump(2) << '\n';
}

DatasetReader::DatasetReader(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw std::runtime_error("dataset: missing manifest.json in " + dir);
  json manifest = json::parse(mf);
  if (manifest.at("format_version") != "1")
    throw std::runtime_error("dataset: unsupported format version");
  cfg_ = config_from_json_obj(manifest.at("config"));
  n_ = manifest.at("n_sequences");

  std::ifstream frames(fs::path(dir) / "frames.bin", std::ios::binary);
  if (!frames) throw std::runtime_error("dataset: missing frames.bin in " + dir);
  std::uint32_t s = read_u32le(frames), t = read_u32le(frames), h = read_u32le(frames),
                w = read_u32le(frames);
  if (static_cast<int>(s) != n_ || static_cast<int>(t) != cfg_.seq_len ||
      static_cast<int>(h) != cfg_.frame_h || static_cast<int>(w) != cfg_.frame_w)
    throw std::runtime_error("dataset: frames.bin header does not match manifest");
  t_ = static_cast<int>(t);
  h_ = static_cast<int>(h);
  w_ = static_cast<int>(w);
  frames_.resize(static_cast<std::size_t>(n_) * t_ * h_ * w_);
  frames.read(reinterpret_cast<char*>(frames_.data()),
              static_cast<std::streamsize>(frames_.size()));
  if (!frames) throw std::runtime_error("dataset: frames.bin truncated");

  std::ifstream ann_in(fs::path(dir) / "annotations.jsonl");
  if (!ann_in) throw std::runtime_error("dataset: missing annotations.jsonl in " + dir);
  std::string line;
  while (std::getline(ann_in, line)) {
    if (line.empty()) continue;
    annotations_.push_back(annotation_from_json(json::parse(line)));
  }
  if (static_cast<int>(annotations_.size()) != n_)
    throw std::runtime_error("dataset: annotation count does not match manifest");
}

std::pair<FrameSequence, SequenceAnnotation> DatasetReader::get(int i) const {
  if (i < 0 || i >= n_) throw std::out_of_range("dataset index");
  FrameSequence seq;
  seq.t = t_;
  seq.h = h_;
  seq.w = w_;
  seq.pixels.resize(static_cast<std::size_t>(t_) * h_ * w_);
  const std::uint8_t* src = &frames_[static_cast<std::size_t>(i) * seq.pixels.size()];
  for (std::size_t p = 0; p < seq.pixels.size(); ++p) seq.pixels[p] = src[p] / 255.0;
  return {std::move(seq), annotations_[i]};
}

}  // namespace vts::data
