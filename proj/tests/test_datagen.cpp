#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "vts/datagen.hpp"
#include "vts/rng.hpp"

using namespace vts;
using namespace vts::data;

namespace {

DataConfig small_cfg() {
  DataConfig cfg;
  cfg.frame_h = cfg.frame_w = 28;
  cfg.seq_len = 8;
  cfg.sprite_px_min = 7;
  cfg.sprite_px_max = 11;
  cfg.count_min = 0;
  cfg.max_objects = 2;
  return cfg;
}

std::uint64_t hash_sequence(const FrameSequence& seq, const SequenceAnnotation& ann) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ull;
  };
  for (double p : seq.pixels) {
    std::uint64_t bits;
    std::memcpy(&bits, &p, 8);
    mix(bits);
  }
  mix(static_cast<std::uint64_t>(ann.count));
  for (const auto& per_t : ann.centers)
    for (const auto& c : per_t)
      for (double v : c) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        mix(bits);
      }
  return h;
}

// Independent straight-line-with-reflection stepper over tight-bbox centers.
// The admissible center interval on an axis of extent E with bbox width bw is
// [bw/2, E-1-bw/2] (every sprite pixel stays in frame).
std::vector<std::array<double, 2>> reference_centers(std::array<double, 2> c0,
                                                     std::array<double, 2> v,
                                                     std::array<int, 2> bbox_wh, int h,
                                                     int w, int steps) {
  double lox = bbox_wh[0] / 2.0, hix = (w - 1) - bbox_wh[0] / 2.0;
  double loy = bbox_wh[1] / 2.0, hiy = (h - 1) - bbox_wh[1] / 2.0;
  std::vector<std::array<double, 2>> out{c0};
  double x = c0[0], y = c0[1], vx = v[0], vy = v[1];
  for (int t = 1; t < steps; ++t) {
    x += vx;
    y += vy;
    while (x < lox || x > hix) {
      if (x < lox) {
        x = 2 * lox - x;
        vx = -vx;
      } else {
        x = 2 * hix - x;
        vx = -vx;
      }
    }
    while (y < loy || y > hiy) {
      if (y < loy) {
        y = 2 * loy - y;
        vy = -vy;
      } else {
        y = 2 * hiy - y;
        vy = -vy;
      }
    }
    out.push_back({x, y});
  }
  return out;
}

}  // namespace

TEST_CASE("same config and seed give bit-identical sequences") {
  DataConfig cfg = small_cfg();
  cfg.frame_h = cfg.frame_w = 16;
  cfg.seq_len = 3;
  cfg.sprite_px_min = 5;
  cfg.sprite_px_max = 7;
  for (int i = 0; i < 1000; ++i) {
    auto [s1, a1] = gen_sequence(cfg, static_cast<std::uint64_t>(i));
    auto [s2, a2] = gen_sequence(cfg, static_cast<std::uint64_t>(i));
    CHECK(hash_sequence(s1, a1) == hash_sequence(s2, a2));
  }
}

TEST_CASE("zero objects give all-zero frames") {
  DataConfig cfg = small_cfg();
  cfg.count_min = 0;
  cfg.max_objects = 0;
  auto [seq, ann] = gen_sequence(cfg, 5);
  CHECK(ann.count == 0);
  for (double p : seq.pixels) CHECK(p == 0.0);
}

TEST_CASE("zero velocity keeps all frames identical") {
  DataConfig cfg = small_cfg();
  cfg.count_min = cfg.max_objects = 1;
  cfg.speed_min = cfg.speed_max = 0.0;
  auto [seq, ann] = gen_sequence(cfg, 11);
  for (int t = 1; t < seq.t; ++t) {
    for (int i = 0; i < seq.h * seq.w; ++i)
      CHECK(seq.at(t, i / seq.w, i % seq.w) == seq.at(0, i / seq.w, i % seq.w));
    CHECK(ann.centers[t][0][0] == ann.centers[0][0][0]);
    CHECK(ann.centers[t][0][1] == ann.centers[0][0][1]);
  }
}

TEST_CASE("linear bounce trajectories match the reference stepper exactly") {
  DataConfig cfg = small_cfg();
  cfg.count_min = cfg.max_objects = 1;
  cfg.seq_len = 30;
  cfg.speed_min = 1.5;
  cfg.speed_max = 3.0;
  int bounces_seen = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto [seq, ann] = gen_sequence(cfg, seed);
    auto ref = reference_centers(ann.centers[0][0], ann.motions[0].velocity,
                                 ann.bbox_wh[0], cfg.frame_h, cfg.frame_w, cfg.seq_len);
    for (int t = 0; t < cfg.seq_len; ++t) {
      CHECK(ann.centers[t][0][0] == ref[t][0]);
      CHECK(ann.centers[t][0][1] == ref[t][1]);
    }
    // count direction flips to confirm bounces are exercised
    for (int t = 2; t < cfg.seq_len; ++t) {
      double d1 = ref[t][0] - ref[t - 1][0], d0 = ref[t - 1][0] - ref[t - 2][0];
      if (d1 * d0 < 0) ++bounces_seen;
    }
  }
  CHECK(bounces_seen > 10);
}

TEST_CASE("appearance bounce keeps every nonzero pixel in frame") {
  // A bilinear-shifted raster conserves total mass as long as no pixel is
  // clipped at the frame edge; single-object frames never clamp, so any
  // clipped pixel would show up as lost mass.
  DataConfig cfg = small_cfg();
  cfg.count_min = cfg.max_objects = 1;
  cfg.seq_len = 12;
  cfg.speed_min = 2.0;
  cfg.speed_max = 3.5;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    auto objs = setup_scene(cfg, rng);
    REQUIRE(objs.size() == 1);
    double sprite_mass = 0.0;
    for (double v : objs[0].sprite.raster.data) sprite_mass += v;
    auto [seq, ann] = render_sequence(cfg, objs, seed);
    for (int t = 0; t < seq.t; ++t) {
      double frame_mass = 0.0;
      for (int y = 0; y < seq.h; ++y)
        for (int x = 0; x < seq.w; ++x) frame_mass += seq.at(t, y, x);
      CHECK(std::fabs(frame_mass - sprite_mass) < 1e-9);
    }
  }
}

TEST_CASE("first-frame non-overlap is honored") {
  DataConfig cfg = small_cfg();
  cfg.count_min = cfg.max_objects = 2;
  cfg.overlap_first_frame = false;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    auto objs = setup_scene(cfg, rng);
    REQUIRE(objs.size() == 2);
    Tensor fa({cfg.frame_h, cfg.frame_w}), fb({cfg.frame_h, cfg.frame_w});
    auto p0 = objs[0].origin_at(objs[0].center0);
    auto p1 = objs[1].origin_at(objs[1].center0);
    render_sprite(objs[0].sprite, p0[0], p0[1], fa);
    render_sprite(objs[1].sprite, p1[0], p1[1], fb);
    for (int i = 0; i < cfg.frame_h * cfg.frame_w; ++i)
      CHECK(!(fa.data[i] > 0.0 && fb.data[i] > 0.0));
  }
}

TEST_CASE("integer displacement is an exact array shift") {
  Rng rng(3);
  Sprite sp = make_procedural_sprite(rng, 7, 9);
  Tensor f1({24, 24}), f2({24, 24});
  render_sprite(sp, 4.0, 5.0, f1);
  render_sprite(sp, 7.0, 9.0, f2);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x) {
      int sy = y + 4, sx = x + 3;
      double want = (sy < 24 && sx < 24) ? f1.at(y, x) : 0.0;
      if (sy < 24 && sx < 24) CHECK(f2.at(sy, sx) == want);
    }
  // and bilinear at integer offsets reproduces the raster exactly
  Tensor f3({24, 24});
  render_sprite(sp, 6.0, 2.0, f3);
  int s = sp.raster.dim(0);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) CHECK(f3.at(y + 2, x + 6) == sp.raster.at(y, x));
}

TEST_CASE("annotated centers track the rendered tight bounding box") {
  DataConfig cfg = small_cfg();
  cfg.count_min = cfg.max_objects = 1;
  cfg.seq_len = 10;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    auto [seq, ann] = gen_sequence(cfg, seed);
    for (int t = 0; t < seq.t; ++t) {
      int x0 = seq.w, x1 = -1, y0 = seq.h, y1 = -1;
      for (int y = 0; y < seq.h; ++y)
        for (int x = 0; x < seq.w; ++x)
          if (seq.at(t, y, x) > 0.0) {
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
          }
      REQUIRE(x1 >= 0);
      CHECK(std::fabs(0.5 * (x0 + x1) - ann.centers[t][0][0]) <= 0.75);
      CHECK(std::fabs(0.5 * (y0 + y1) - ann.centers[t][0][1]) <= 0.75);
    }
  }
}

TEST_CASE("elliptic trajectory closed form, periodicity, degenerate ellipse") {
  MotionParams p;
  p.motion = Motion::elliptic;
  p.ellipse_center = {20, 15};
  p.semi_a = 10;
  p.semi_b = 5;
  p.phase = 0;
  p.omega = 0.1;
  auto c = elliptic_trajectory_point(p, 7);
  CHECK(c[0] == doctest::Approx(20 + 10 * std::cos(0.7)).epsilon(1e-12));
  CHECK(c[1] == doctest::Approx(15 + 5 * std::sin(0.7)).epsilon(1e-12));

  p.omega = 2 * M_PI / 20.0;
  auto c0 = elliptic_trajectory_point(p, 0);
  auto cT = elliptic_trajectory_point(p, 20);
  CHECK(std::fabs(c0[0] - cT[0]) < 1e-9);
  CHECK(std::fabs(c0[1] - cT[1]) < 1e-9);

  p.semi_a = p.semi_b = 0;
  auto d0 = elliptic_trajectory_point(p, 0);
  auto d9 = elliptic_trajectory_point(p, 9);
  CHECK(d0[0] == d9[0]);
  CHECK(d0[1] == d9[1]);
}

TEST_CASE("elliptic sequences stay in frame") {
  DataConfig cfg = small_cfg();
  cfg.motion = Motion::elliptic;
  cfg.count_min = 1;
  cfg.seq_len = 16;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto [seq, ann] = gen_sequence(cfg, seed);
    for (int t = 0; t < seq.t; ++t)
      for (int i = 0; i < ann.count; ++i) {
        CHECK(ann.centers[t][i][0] >= 0.0);
        CHECK(ann.centers[t][i][0] <= seq.w - 1.0);
        CHECK(ann.centers[t][i][1] >= 0.0);
        CHECK(ann.centers[t][i][1] <= seq.h - 1.0);
      }
  }
}

TEST_CASE("corner bounce mode lets sprites exit right/bottom") {
  DataConfig cfg = small_cfg();
  cfg.bounce = BounceMode::bbox_corner;
  cfg.margin_px = 3;
  cfg.count_min = cfg.max_objects = 1;
  cfg.seq_len = 40;
  cfg.speed_min = 2.0;
  cfg.speed_max = 3.5;
  bool saw_out_of_frame_center = false;
  for (std::uint64_t seed = 0; seed < 40 && !saw_out_of_frame_center; ++seed) {
    auto [seq, ann] = gen_sequence(cfg, seed);
    for (int t = 0; t < seq.t; ++t)
      if (ann.centers[t][0][0] > seq.w - 1.0 || ann.centers[t][0][1] > seq.h - 1.0)
        saw_out_of_frame_center = true;
  }
  CHECK(saw_out_of_frame_center);
}

TEST_CASE("dataset round-trips losslessly up to uint8 quantization") {
  DataConfig cfg = small_cfg();
  cfg.seed = 99;
  std::string dir = "/tmp/vts_test_dataset";
  std::filesystem::remove_all(dir);
  write_dataset(cfg, 5, dir);
  DatasetReader reader(dir);
  REQUIRE(reader.size() == 5);
  for (int i = 0; i < 5; ++i) {
    auto [seq, ann] = reader.get(i);
    auto [raw, raw_ann] = gen_sequence(cfg, mix_seed(cfg.seed, i));
    REQUIRE(seq.pixels.size() == raw.pixels.size());
    for (std::size_t p = 0; p < seq.pixels.size(); ++p) {
      double q = std::lround(raw.pixels[p] * 255.0) / 255.0;
      CHECK(seq.pixels[p] == doctest::Approx(q).epsilon(1e-12));
    }
    CHECK(ann.count == raw_ann.count);
    for (int t = 0; t < seq.t; ++t)
      for (int k = 0; k < ann.count; ++k) {
        CHECK(ann.centers[t][k][0] == doctest::Approx(raw_ann.centers[t][k][0]));
        CHECK(ann.centers[t][k][1] == doctest::Approx(raw_ann.centers[t][k][1]));
      }
  }
  // corrupt manifest -> error
  {
    std::ofstream mf(std::filesystem::path(dir) / "manifest.json");
    mf << "{\"format_version\": \"1\", \"n_sequences\": 7, \"config\": " << cfg.to_json()
       << "}";
  }
  CHECK_THROWS(DatasetReader(dir));
}

TEST_CASE("oversized sprites exhaust the placement budget") {
  DataConfig cfg = small_cfg();
  cfg.frame_h = cfg.frame_w = 8;
  cfg.sprite_px_min = cfg.sprite_px_max = 12;
  cfg.count_min = cfg.max_objects = 1;
  CHECK_THROWS(gen_sequence(cfg, 1));
}
