#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "doctest.h"
#include "scene.hpp"

using namespace ccap;
namespace fs = std::filesystem;

namespace {

SceneParams params64() { return SceneParams{}; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("generate_scene: determinism, count, separation") {
  SceneParams p = params64();
  SceneSpec a = generate_scene(42, 4, p);
  SceneSpec b = generate_scene(42, 4, p);
  REQUIRE(a.objects.size() == 4);
  for (size_t i = 0; i < 4; ++i) {
    CHECK(a.objects[i].cx == b.objects[i].cx);
    CHECK(a.objects[i].cy == b.objects[i].cy);
    CHECK(a.objects[i].color == b.objects[i].color);
  }
  SceneSpec c = generate_scene(43, 3, p);
  CHECK(c.objects.size() == 3);

  for (size_t i = 0; i < a.objects.size(); ++i) {
    for (size_t j = i + 1; j < a.objects.size(); ++j) {
      const double dx = a.objects[i].cx - a.objects[j].cx;
      const double dy = a.objects[i].cy - a.objects[j].cy;
      CHECK(std::sqrt(dx * dx + dy * dy) >= p.min_separation());
    }
  }
}

TEST_CASE("placement sweep: no failures over 10k seeds at count 6") {
  SceneParams p = params64();
  for (uint64_t seed = 0; seed < 10000; ++seed) {
    CHECK_NOTHROW(generate_scene(seed, 6, p));
  }
}

TEST_CASE("apply_change semantics per type") {
  SceneParams p = params64();
  SceneSpec scene = generate_scene(77, 4, p);

  auto [none_after, none_spec] = apply_change(scene, 1, ChangeType::None, p);
  CHECK(none_after.objects.size() == scene.objects.size());
  for (size_t i = 0; i < scene.objects.size(); ++i) {
    CHECK(none_after.objects[i].color == scene.objects[i].color);
    CHECK(none_after.objects[i].cx == scene.objects[i].cx);
  }

  auto [drop_after, drop_spec] = apply_change(scene, 2, ChangeType::Drop, p);
  CHECK(drop_after.objects.size() == scene.objects.size() - 1);

  auto [color_after, color_spec] = apply_change(scene, 3, ChangeType::Color, p);
  size_t diffs = 0;
  for (size_t i = 0; i < scene.objects.size(); ++i) {
    if (color_after.objects[i].color != scene.objects[i].color) diffs++;
  }
  CHECK(diffs == 1);
  CHECK(color_after.objects[color_spec.target_index].color == color_spec.new_color);

  auto [add_after, add_spec] = apply_change(scene, 4, ChangeType::Add, p);
  CHECK(add_after.objects.size() == scene.objects.size() + 1);

  auto [tex_after, tex_spec] = apply_change(scene, 5, ChangeType::Texture, p);
  CHECK(tex_after.objects[tex_spec.target_index].texture !=
        scene.objects[tex_spec.target_index].texture);

  CHECK_THROWS_AS(apply_change(SceneSpec{}, 6, ChangeType::Drop, p), std::invalid_argument);
}

TEST_CASE("move displacement is at least the object radius (sweep)") {
  SceneParams p = params64();
  for (uint64_t seed = 100; seed < 300; ++seed) {
    SceneSpec scene = generate_scene(seed, 4, p);
    auto [after, spec] = apply_change(scene, seed * 3 + 1, ChangeType::Move, p);
    const double r = p.radius(scene.objects[spec.target_index].size);
    const double dist = std::hypot(spec.move_dx, spec.move_dy);
    CAPTURE(seed);
    CHECK(dist >= r - 1e-12);
  }
}

TEST_CASE("render: background, identity distractor, center pixel color") {
  SceneParams p = params64();
  auto bg = render_scene(SceneSpec{}, Viewpoint{}, 1.0, p);
  for (double v : bg) CHECK(v == 0.35);

  SceneSpec scene = generate_scene(7, 3, p);
  auto base = render_scene(scene, Viewpoint{}, 1.0, p);
  auto same = render_scene(scene, Viewpoint{0.0, 0.0, 0.0}, 1.0, p);
  CHECK(base == same);

  SceneSpec red;
  red.objects.push_back({ObjShape::Cube, 0 /*red*/, ObjTexture::Solid, ObjSize::Large,
                         32.0, 32.0});
  auto img = render_scene(red, Viewpoint{}, 1.0, p);
  const size_t center = 32 * 64 + 32;
  CHECK(img[0 * 64 * 64 + center] > 0.8);
  CHECK(img[1 * 64 * 64 + center] < 0.2);

  auto dim = render_scene(red, Viewpoint{}, 0.8, p);
  CHECK(dim[center] == doctest::Approx(img[center] * 0.8).epsilon(1e-12));
}

TEST_CASE("caption templates per change type") {
  SceneParams p = params64();

  SceneSpec scene;
  scene.objects.push_back({ObjShape::Sphere, 1 /*blue*/, ObjTexture::Solid, ObjSize::Small,
                           20.0, 20.0});
  scene.objects.push_back({ObjShape::Sphere, 0 /*red*/, ObjTexture::Solid, ObjSize::Large,
                           44.0, 44.0});
  scene.objects.push_back({ObjShape::Cube, 1 /*blue*/, ObjTexture::Solid, ObjSize::Small,
                           20.0, 44.0});

  ChangeSpec drop;
  drop.type = ChangeType::Drop;
  drop.target_index = 0;
  SceneSpec after = scene;
  after.objects.erase(after.objects.begin());
  auto caps = caption_templates(drop, scene, after);
  REQUIRE(caps.size() == 2);
  CHECK(caps[0] == "the blue sphere is missing");
  CHECK(caps[1] == "the blue sphere disappeared");

  ChangeSpec none;
  none.type = ChangeType::None;
  auto none_caps = caption_templates(none, scene, scene);
  CHECK(none_caps[0] == "no change was made");

  ChangeSpec color;
  color.type = ChangeType::Color;
  color.target_index = 1;
  color.new_color = 3;  // yellow
  SceneSpec colored = scene;
  colored.objects[1].color = 3;
  auto color_caps = caption_templates(color, scene, colored);
  CHECK(color_caps[0] == "the red sphere changed to yellow");
  CHECK(color_caps[1] == "the red sphere turned yellow");

  // Ambiguous referent: two objects identical in every attribute.
  SceneSpec twins;
  twins.objects.push_back({ObjShape::Cube, 2, ObjTexture::Solid, ObjSize::Small, 15.0, 15.0});
  twins.objects.push_back({ObjShape::Cube, 2, ObjTexture::Solid, ObjSize::Small, 45.0, 45.0});
  ChangeSpec move;
  move.type = ChangeType::Move;
  move.target_index = 0;
  CHECK_THROWS_AS(caption_templates(move, twins, twins), std::runtime_error);
}

TEST_CASE("vocabulary closure over 10k generated caption sets") {
  SceneParams p = params64();
  Vocabulary vocab = make_vocabulary();
  const ChangeType types[6] = {ChangeType::Color, ChangeType::Texture, ChangeType::Add,
                               ChangeType::Drop, ChangeType::Move, ChangeType::None};
  size_t produced = 0;
  for (uint64_t seed = 0; produced < 10000; ++seed) {
    const ChangeType type = types[seed % 6];
    try {
      SceneSpec scene = generate_scene(seed, 3 + seed % 4, p);
      auto [after, change] = apply_change(scene, seed, type, p);
      for (const std::string& cap : caption_templates(change, scene, after)) {
        CHECK_NOTHROW(vocab.encode(cap));
        produced++;
      }
    } catch (const std::runtime_error&) {
      continue;  // ambiguous referent; the dataset builder retries too
    }
  }
}

TEST_CASE("enumeration caption and candidate pool") {
  SceneSpec scene;
  scene.objects.push_back({ObjShape::Cube, 0, ObjTexture::Solid, ObjSize::Small, 20.0, 20.0});
  scene.objects.push_back({ObjShape::Sphere, 1, ObjTexture::Striped, ObjSize::Large, 44.0,
                           44.0});
  CHECK(enumeration_caption(scene) ==
        "a small red solid cube and a large blue striped sphere");

  Vocabulary vocab = make_vocabulary();
  auto pool = enumerate_candidate_captions(scene);
  CHECK(pool.size() > 50);
  std::set<std::string> seen;
  for (const std::string& cap : pool) {
    CHECK_NOTHROW(vocab.encode(cap));
    CHECK(seen.insert(cap).second);  // deduplicated
  }
  bool has_none = false;
  for (const std::string& cap : pool) {
    if (cap == "no change was made") has_none = true;
  }
  CHECK(has_none);
}

TEST_CASE("unchanged_iou: identity, disjoint, hand geometry") {
  SceneParams p = params64();
  SceneSpec scene = generate_scene(11, 3, p);

  ChangeSpec none;
  none.type = ChangeType::None;
  auto full = unchanged_iou(scene, scene, none, p);
  REQUIRE(full.has_value());
  CHECK(*full == doctest::Approx(1.0).epsilon(1e-12));

  ChangeSpec far;
  far.type = ChangeType::None;
  far.distractor.viewpoint.shift_x = 500.0;
  auto zero = unchanged_iou(scene, scene, far, p);
  REQUIRE(zero.has_value());
  CHECK(*zero == doctest::Approx(0.0).epsilon(1e-12));

  // One small object (radius 5 -> box 10x10) shifted 4px horizontally:
  // intersection 6*10 = 60, union 200 - 60 = 140, IoU = 3/7.
  SceneSpec one;
  one.objects.push_back({ObjShape::Cube, 0, ObjTexture::Solid, ObjSize::Small, 32.0, 32.0});
  ChangeSpec shift;
  shift.type = ChangeType::None;
  shift.distractor.viewpoint.shift_x = 4.0;
  auto iou = unchanged_iou(one, one, shift, p);
  REQUIRE(iou.has_value());
  CHECK(*iou == doctest::Approx(3.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("IoU monotonicity: mean over 500 pairs non-increasing in the shift bound") {
  double prev_mean = 2.0;
  for (double bound : {0.0, 2.0, 4.0, 8.0}) {
    SceneParams p = params64();
    p.shift_bound = bound;
    double total = 0.0;
    size_t count = 0;
    for (uint64_t seed = 1000; seed < 1500; ++seed) {
      SceneSpec scene = generate_scene(seed, 4, p);
      auto [after, change] = apply_change(scene, seed, ChangeType::None, p);
      auto iou = unchanged_iou(scene, after, change, p);
      if (iou) {
        total += *iou;
        count++;
      }
    }
    const double mean = total / static_cast<double>(count);
    CAPTURE(bound);
    CHECK(mean <= prev_mean + 1e-12);
    prev_mean = mean;
  }
}

TEST_CASE("build_dataset: counts, determinism, balance, loadability") {
  DatasetConfig cfg;
  cfg.train_pairs = 30;
  cfg.val_pairs = 6;
  cfg.test_pairs = 10;
  cfg.seed = 5;
  const fs::path dir1 = fs::temp_directory_path() / "ccap_ds1";
  const fs::path dir2 = fs::temp_directory_path() / "ccap_ds2";
  fs::remove_all(dir1);
  fs::remove_all(dir2);
  build_dataset(cfg, dir1.string());
  build_dataset(cfg, dir2.string());

  auto train = load_split(dir1.string(), "train");
  auto val = load_split(dir1.string(), "val");
  auto test = load_split(dir1.string(), "test");
  CHECK(train.size() == 30);
  CHECK(val.size() == 6);
  CHECK(test.size() == 10);

  // Byte-identical reruns.
  for (const char* name : {"train.jsonl", "val.jsonl", "test.jsonl", "vocab.txt"}) {
    CHECK(slurp(dir1 / name) == slurp(dir2 / name));
  }
  CHECK(slurp(dir1 / "train" / "train_000000_before.ppm") ==
        slurp(dir2 / "train" / "train_000000_before.ppm"));

  // Distractor fraction 0.5 and change-type balance within +-1.
  std::map<ChangeType, size_t> counts;
  size_t distractors = 0;
  for (const PairRecord& rec : train) {
    if (rec.change_type == ChangeType::None) {
      distractors++;
    } else {
      counts[rec.change_type]++;
    }
  }
  CHECK(distractors == 15);
  size_t lo = 99, hi = 0;
  for (const auto& [type, n] : counts) {
    lo = std::min(lo, n);
    hi = std::max(hi, n);
  }
  CHECK(hi - lo <= 1);

  // Label soundness: none pairs identical scenes; change pairs differ by one.
  for (const PairRecord& rec : train) {
    if (rec.change_type == ChangeType::None) {
      CHECK(rec.before_scene.objects.size() == rec.after_scene.objects.size());
    } else if (rec.change_type == ChangeType::Add) {
      CHECK(rec.after_scene.objects.size() == rec.before_scene.objects.size() + 1);
    } else if (rec.change_type == ChangeType::Drop) {
      CHECK(rec.after_scene.objects.size() == rec.before_scene.objects.size() - 1);
    }
    CHECK(rec.captions.size() == 2);
    CHECK(rec.before_image.width == 64);
    if (rec.change_type != ChangeType::None || !rec.viewpoint.is_identity()) {
      REQUIRE(rec.iou.has_value());
      CHECK(*rec.iou >= 0.0);
      CHECK(*rec.iou <= 1.0);
    }
  }

  fs::remove_all(dir1);
  fs::remove_all(dir2);
}
