#include "scene.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "rng.hpp"

namespace ccap {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

const char* const kColorNames[8] = {"red",    "blue", "green", "yellow",
                                    "purple", "cyan", "brown", "gray"};
const double kColorRgb[8][3] = {
    {0.90, 0.10, 0.10}, {0.10, 0.20, 0.90}, {0.10, 0.80, 0.15}, {0.95, 0.90, 0.10},
    {0.60, 0.15, 0.75}, {0.15, 0.85, 0.90}, {0.55, 0.35, 0.12}, {0.78, 0.78, 0.78}};

namespace {

constexpr double kBackground = 0.35;
constexpr double kPi = 3.141592653589793;

const char* shape_word(ObjShape s) {
  switch (s) {
    case ObjShape::Cube: return "cube";
    case ObjShape::Sphere: return "sphere";
    case ObjShape::Cylinder: return "cylinder";
  }
  return "?";
}

const char* size_word(ObjSize s) { return s == ObjSize::Small ? "small" : "large"; }
const char* texture_word(ObjTexture t) { return t == ObjTexture::Solid ? "solid" : "striped"; }

ObjShape shape_from_word(const std::string& w) {
  if (w == "cube") return ObjShape::Cube;
  if (w == "sphere") return ObjShape::Sphere;
  if (w == "cylinder") return ObjShape::Cylinder;
  throw std::runtime_error("unknown shape word: " + w);
}

size_t color_from_word(const std::string& w) {
  for (size_t i = 0; i < 8; ++i) {
    if (w == kColorNames[i]) return i;
  }
  throw std::runtime_error("unknown color word: " + w);
}

bool placement_ok(const SceneSpec& scene, double cx, double cy, const SceneParams& p,
                  int ignore_index = -1) {
  const double min_sep = p.min_separation();
  for (size_t i = 0; i < scene.objects.size(); ++i) {
    if (static_cast<int>(i) == ignore_index) continue;
    const double dx = scene.objects[i].cx - cx;
    const double dy = scene.objects[i].cy - cy;
    if (dx * dx + dy * dy < min_sep * min_sep) return false;
  }
  return true;
}

SceneObject random_object(Rng& rng, const SceneParams& p) {
  SceneObject o;
  o.shape = static_cast<ObjShape>(rng.below(3));
  o.color = rng.below(8);
  o.texture = static_cast<ObjTexture>(rng.below(2));
  o.size = static_cast<ObjSize>(rng.below(2));
  const double r = p.radius(o.size);
  const double span = static_cast<double>(p.image_size) - 2.0 * r;
  o.cx = r + rng.uniform() * span;
  o.cy = r + rng.uniform() * span;
  return o;
}

struct Point {
  double x, y;
};

Point transform(const Viewpoint& vp, double cx, double cy, double canvas) {
  const double half = canvas / 2.0;
  const double th = vp.rotation_deg * kPi / 180.0;
  const double c = std::cos(th), s = std::sin(th);
  const double rx = cx - half, ry = cy - half;
  return {c * rx - s * ry + half + vp.shift_x, s * rx + c * ry + half + vp.shift_y};
}

bool point_in_object(double px, double py, const SceneObject& o, double cx, double cy,
                     double r) {
  switch (o.shape) {
    case ObjShape::Cube:
      return std::fabs(px - cx) <= r && std::fabs(py - cy) <= r;
    case ObjShape::Sphere: {
      const double dx = px - cx, dy = py - cy;
      return dx * dx + dy * dy <= r * r;
    }
    case ObjShape::Cylinder: {
      // Upward triangle inscribed in the radius-r circle.
      const double ax = cx, ay = cy - r;
      const double bx = cx - 0.8660254037844386 * r, by = cy + 0.5 * r;
      const double gx = cx + 0.8660254037844386 * r, gy = cy + 0.5 * r;
      const double d1 = (px - bx) * (ay - by) - (ax - bx) * (py - by);
      const double d2 = (px - gx) * (by - gy) - (bx - gx) * (py - gy);
      const double d3 = (px - ax) * (gy - ay) - (gx - ax) * (py - ay);
      const bool has_neg = (d1 < 0) || (d2 < 0) || (d3 < 0);
      const bool has_pos = (d1 > 0) || (d2 > 0) || (d3 > 0);
      return !(has_neg && has_pos);
    }
  }
  return false;
}

struct AttrMask {
  bool size, color, texture;  // shape always included
};

// Subset priority: fewest attributes first, color preferred over size over
// texture at equal count.
const AttrMask kSubsets[] = {
    {false, false, false}, {false, true, false}, {true, false, false},
    {false, false, true},  {true, true, false},  {false, true, true},
    {true, false, true},   {true, true, true},
};

bool matches(const SceneObject& a, const SceneObject& b, const AttrMask& m) {
  if (a.shape != b.shape) return false;
  if (m.size && a.size != b.size) return false;
  if (m.color && a.color != b.color) return false;
  if (m.texture && a.texture != b.texture) return false;
  return true;
}

std::string phrase(const SceneObject& o, const AttrMask& m) {
  std::string out;
  if (m.size) out += std::string(size_word(o.size)) + " ";
  if (m.color) out += std::string(kColorNames[o.color]) + " ";
  if (m.texture) out += std::string(texture_word(o.texture)) + " ";
  out += shape_word(o.shape);
  return out;
}

std::string full_description(const SceneObject& o) {
  return std::string(size_word(o.size)) + " " + kColorNames[o.color] + " " +
         shape_word(o.shape);
}

ordered_json scene_to_json(const SceneSpec& scene) {
  ordered_json arr = ordered_json::array();
  for (const SceneObject& o : scene.objects) {
    arr.push_back({{"shape", shape_word(o.shape)},
                   {"color", kColorNames[o.color]},
                   {"texture", texture_word(o.texture)},
                   {"size", size_word(o.size)},
                   {"x", o.cx},
                   {"y", o.cy}});
  }
  return arr;
}

SceneSpec scene_from_json(const ordered_json& arr) {
  SceneSpec scene;
  for (const auto& j : arr) {
    SceneObject o;
    o.shape = shape_from_word(j.at("shape").get<std::string>());
    o.color = color_from_word(j.at("color").get<std::string>());
    o.texture = j.at("texture").get<std::string>() == "solid" ? ObjTexture::Solid
                                                              : ObjTexture::Striped;
    o.size = j.at("size").get<std::string>() == "small" ? ObjSize::Small : ObjSize::Large;
    o.cx = j.at("x").get<double>();
    o.cy = j.at("y").get<double>();
    scene.objects.push_back(o);
  }
  return scene;
}

}  // namespace

std::string to_string(ChangeType t) {
  switch (t) {
    case ChangeType::Color: return "color";
    case ChangeType::Texture: return "texture";
    case ChangeType::Add: return "add";
    case ChangeType::Drop: return "drop";
    case ChangeType::Move: return "move";
    case ChangeType::None: return "none";
  }
  return "?";
}

ChangeType change_type_from_string(const std::string& s) {
  if (s == "color") return ChangeType::Color;
  if (s == "texture") return ChangeType::Texture;
  if (s == "add") return ChangeType::Add;
  if (s == "drop") return ChangeType::Drop;
  if (s == "move") return ChangeType::Move;
  if (s == "none") return ChangeType::None;
  throw std::invalid_argument("unknown change type: " + s);
}

SceneSpec generate_scene(uint64_t seed, size_t object_count, const SceneParams& p) {
  if (object_count == 0) throw std::invalid_argument("generate_scene: empty scene requested");
  Rng rng(seed);
  SceneSpec scene;
  for (size_t i = 0; i < object_count; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      SceneObject o = random_object(rng, p);
      if (placement_ok(scene, o.cx, o.cy, p)) {
        scene.objects.push_back(o);
        placed = true;
        break;
      }
    }
    if (!placed) {
      throw std::runtime_error("generate_scene: placement failed after 1000 attempts (seed " +
                               std::to_string(seed) + ")");
    }
  }
  return scene;
}

std::pair<SceneSpec, ChangeSpec> apply_change(const SceneSpec& scene, uint64_t seed,
                                              ChangeType type, const SceneParams& p) {
  if (scene.objects.empty() && type != ChangeType::Add && type != ChangeType::None) {
    throw std::invalid_argument("apply_change: '" + to_string(type) + "' needs an object");
  }
  Rng rng(seed ^ 0xc2b2ae3d27d4eb4full);
  SceneSpec after = scene;
  ChangeSpec change;
  change.type = type;
  switch (type) {
    case ChangeType::None:
      break;
    case ChangeType::Color: {
      const size_t idx = rng.below(scene.objects.size());
      size_t next = rng.below(7);
      if (next >= scene.objects[idx].color) next++;
      change.target_index = static_cast<int>(idx);
      change.new_color = next;
      after.objects[idx].color = next;
      break;
    }
    case ChangeType::Texture: {
      const size_t idx = rng.below(scene.objects.size());
      change.target_index = static_cast<int>(idx);
      change.new_texture = scene.objects[idx].texture == ObjTexture::Solid
                               ? ObjTexture::Striped
                               : ObjTexture::Solid;
      after.objects[idx].texture = change.new_texture;
      break;
    }
    case ChangeType::Add: {
      bool placed = false;
      for (int attempt = 0; attempt < 1000; ++attempt) {
        SceneObject o = random_object(rng, p);
        if (placement_ok(after, o.cx, o.cy, p)) {
          after.objects.push_back(o);
          placed = true;
          break;
        }
      }
      if (!placed) {
        throw std::runtime_error("apply_change: add placement failed (seed " +
                                 std::to_string(seed) + ")");
      }
      change.target_index = static_cast<int>(after.objects.size()) - 1;
      break;
    }
    case ChangeType::Drop: {
      const size_t idx = rng.below(scene.objects.size());
      change.target_index = static_cast<int>(idx);
      after.objects.erase(after.objects.begin() + static_cast<long>(idx));
      break;
    }
    case ChangeType::Move: {
      const size_t idx = rng.below(scene.objects.size());
      const SceneObject& o = scene.objects[idx];
      const double r = p.radius(o.size);
      bool moved = false;
      for (int attempt = 0; attempt < 1000; ++attempt) {
        const double ang = rng.uniform() * 2.0 * kPi;
        const double dist = r + rng.uniform() * (2.0 * r);  // displacement >= own radius
        const double nx = o.cx + dist * std::cos(ang);
        const double ny = o.cy + dist * std::sin(ang);
        const double lim = static_cast<double>(p.image_size) - r;
        if (nx < r || ny < r || nx > lim || ny > lim) continue;
        if (!placement_ok(scene, nx, ny, p, static_cast<int>(idx))) continue;
        change.target_index = static_cast<int>(idx);
        change.move_dx = nx - o.cx;
        change.move_dy = ny - o.cy;
        after.objects[idx].cx = nx;
        after.objects[idx].cy = ny;
        moved = true;
        break;
      }
      if (!moved) {
        throw std::runtime_error("apply_change: move placement failed (seed " +
                                 std::to_string(seed) + ")");
      }
      break;
    }
  }
  change.distractor.viewpoint.shift_x = rng.uniform(-p.shift_bound, p.shift_bound);
  change.distractor.viewpoint.shift_y = rng.uniform(-p.shift_bound, p.shift_bound);
  change.distractor.viewpoint.rotation_deg = rng.uniform(-p.max_rotation, p.max_rotation);
  change.distractor.illumination = rng.uniform(p.illum_lo, p.illum_hi);
  return {after, change};
}

std::vector<double> render_scene(const SceneSpec& scene, const Viewpoint& vp,
                                 double illumination, const SceneParams& p) {
  const size_t n = p.image_size;
  const size_t ss = 2 * n;  // 2x supersampling
  std::vector<double> hi(3 * ss * ss);
  const double canvas = static_cast<double>(n);

  // Object centers under the viewpoint transform; radii are unchanged.
  std::vector<Point> centers(scene.objects.size());
  for (size_t i = 0; i < scene.objects.size(); ++i) {
    centers[i] = transform(vp, scene.objects[i].cx, scene.objects[i].cy, canvas);
  }

  for (size_t sy = 0; sy < ss; ++sy) {
    for (size_t sx = 0; sx < ss; ++sx) {
      const double px = (static_cast<double>(sx) + 0.5) / 2.0;
      const double py = (static_cast<double>(sy) + 0.5) / 2.0;
      double r = kBackground, g = kBackground, b = kBackground;
      // Painter's order: later objects overwrite earlier ones.
      for (size_t i = 0; i < scene.objects.size(); ++i) {
        const SceneObject& o = scene.objects[i];
        if (!point_in_object(px, py, o, centers[i].x, centers[i].y, p.radius(o.size))) continue;
        double scale = 1.0;
        if (o.texture == ObjTexture::Striped &&
            static_cast<long>(std::floor(py / 2.0)) % 2 == 0) {
          scale = 0.35;
        }
        r = kColorRgb[o.color][0] * scale;
        g = kColorRgb[o.color][1] * scale;
        b = kColorRgb[o.color][2] * scale;
      }
      hi[0 * ss * ss + sy * ss + sx] = r;
      hi[1 * ss * ss + sy * ss + sx] = g;
      hi[2 * ss * ss + sy * ss + sx] = b;
    }
  }

  std::vector<double> out(3 * n * n);
  for (size_t c = 0; c < 3; ++c) {
    for (size_t y = 0; y < n; ++y) {
      for (size_t x = 0; x < n; ++x) {
        const double sum = hi[c * ss * ss + (2 * y) * ss + 2 * x] +
                           hi[c * ss * ss + (2 * y) * ss + 2 * x + 1] +
                           hi[c * ss * ss + (2 * y + 1) * ss + 2 * x] +
                           hi[c * ss * ss + (2 * y + 1) * ss + 2 * x + 1];
        out[c * n * n + y * n + x] = std::clamp(0.25 * sum * illumination, 0.0, 1.0);
      }
    }
  }
  return out;
}

std::optional<std::string> referring_expression(const SceneSpec& scene, size_t index) {
  const SceneObject& target = scene.objects[index];
  for (const AttrMask& m : kSubsets) {
    bool unique = true;
    for (size_t i = 0; i < scene.objects.size(); ++i) {
      if (i == index) continue;
      if (matches(scene.objects[i], target, m)) {
        unique = false;
        break;
      }
    }
    if (unique) return phrase(target, m);
  }
  return std::nullopt;
}

std::vector<std::string> caption_templates(const ChangeSpec& change, const SceneSpec& before,
                                           const SceneSpec& after) {
  auto ref_or_throw = [](const SceneSpec& scene, int index) {
    auto ref = referring_expression(scene, static_cast<size_t>(index));
    if (!ref) {
      throw std::runtime_error("caption_templates: no unique referent for object " +
                               std::to_string(index));
    }
    return *ref;
  };
  switch (change.type) {
    case ChangeType::None:
      return {"no change was made", "the two scenes seem identical"};
    case ChangeType::Color: {
      const std::string ref = ref_or_throw(before, change.target_index);
      const std::string c = kColorNames[change.new_color];
      return {"the " + ref + " changed to " + c, "the " + ref + " turned " + c};
    }
    case ChangeType::Texture: {
      const std::string ref = ref_or_throw(before, change.target_index);
      const std::string t = texture_word(change.new_texture);
      return {"the " + ref + " became " + t, "the " + ref + " turned " + t};
    }
    case ChangeType::Add: {
      const std::string desc = full_description(after.objects[change.target_index]);
      return {"a new " + desc + " appeared", "there is a new " + desc};
    }
    case ChangeType::Drop: {
      const std::string ref = ref_or_throw(before, change.target_index);
      return {"the " + ref + " is missing", "the " + ref + " disappeared"};
    }
    case ChangeType::Move: {
      const std::string ref = ref_or_throw(before, change.target_index);
      return {"the " + ref + " moved", "the " + ref + " changed its location"};
    }
  }
  throw std::logic_error("unreachable");
}

std::string enumeration_caption(const SceneSpec& scene) {
  // Raster order (top-to-bottom, then left-to-right): the listing order is
  // observable from the image, unlike the scene's internal depth order.
  std::vector<size_t> order(scene.objects.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    const SceneObject& oa = scene.objects[a];
    const SceneObject& ob = scene.objects[b];
    if (oa.cy != ob.cy) return oa.cy < ob.cy;
    if (oa.cx != ob.cx) return oa.cx < ob.cx;
    return a < b;
  });
  std::string out;
  for (size_t i = 0; i < order.size(); ++i) {
    const SceneObject& o = scene.objects[order[i]];
    if (i) out += " and";
    out += std::string(i ? " " : "") + "a " + size_word(o.size) + " " + kColorNames[o.color] +
           " " + texture_word(o.texture) + " " + shape_word(o.shape);
  }
  return out;
}

std::vector<std::string> enumerate_candidate_captions(const SceneSpec& before) {
  std::set<std::string> out;
  out.insert("no change was made");
  out.insert("the two scenes seem identical");
  for (size_t i = 0; i < before.objects.size(); ++i) {
    auto ref = referring_expression(before, i);
    const std::string r = ref ? *ref : phrase(before.objects[i], {true, true, true});
    for (size_t c = 0; c < 8; ++c) {
      if (c == before.objects[i].color) continue;
      out.insert("the " + r + " changed to " + kColorNames[c]);
      out.insert("the " + r + " turned " + kColorNames[c]);
    }
    const char* t =
        texture_word(before.objects[i].texture == ObjTexture::Solid ? ObjTexture::Striped
                                                                    : ObjTexture::Solid);
    out.insert("the " + r + " became " + t);
    out.insert("the " + r + " turned " + t);
    out.insert("the " + r + " is missing");
    out.insert("the " + r + " disappeared");
    out.insert("the " + r + " moved");
    out.insert("the " + r + " changed its location");
  }
  for (const char* size : {"small", "large"}) {
    for (const char* const color : kColorNames) {
      for (const char* shape : {"cube", "sphere", "cylinder"}) {
        const std::string desc = std::string(size) + " " + color + " " + shape;
        out.insert("a new " + desc + " appeared");
        out.insert("there is a new " + desc);
      }
    }
  }
  return {out.begin(), out.end()};
}

std::optional<double> unchanged_iou(const SceneSpec& before, const SceneSpec& after,
                                    const ChangeSpec& change, const SceneParams& p) {
  const double canvas = static_cast<double>(p.image_size);
  double total = 0.0;
  size_t count = 0;
  for (size_t i = 0; i < before.objects.size(); ++i) {
    if (change.type == ChangeType::Drop || change.type == ChangeType::Color ||
        change.type == ChangeType::Texture || change.type == ChangeType::Move) {
      if (static_cast<int>(i) == change.target_index) continue;
    }
    const SceneObject& o = before.objects[i];
    const double r = p.radius(o.size);
    const Point moved = transform(change.distractor.viewpoint, o.cx, o.cy, canvas);
    const double ix = std::max(0.0, 2.0 * r - std::fabs(moved.x - o.cx));
    const double iy = std::max(0.0, 2.0 * r - std::fabs(moved.y - o.cy));
    const double inter = ix * iy;
    const double uni = 2.0 * (2.0 * r) * (2.0 * r) - inter;
    total += inter / uni;
    count++;
  }
  if (count == 0) return std::nullopt;
  return total / static_cast<double>(count);
}

std::vector<std::string> template_vocabulary() {
  std::set<std::string> words;
  const char* fixed[] = {"a",       "the",   "new",     "there",     "is",      "no",
                         "change",  "was",   "made",    "two",       "scenes",  "seem",
                         "identical", "changed", "turned", "became",  "to",      "missing",
                         "disappeared", "moved", "its",  "location", "appeared", "and",
                         "small",   "large", "solid",   "striped",   "cube",    "sphere",
                         "cylinder"};
  for (const char* w : fixed) words.insert(w);
  for (const char* const c : kColorNames) words.insert(c);
  return {words.begin(), words.end()};
}

Vocabulary make_vocabulary() { return Vocabulary(template_vocabulary()); }

PairRecord make_pair(uint64_t pair_seed, ChangeType type, size_t object_count,
                     const SceneParams& p) {
  PairRecord rec;
  rec.before_scene = generate_scene(pair_seed, object_count, p);
  auto [after, change] = apply_change(rec.before_scene, pair_seed, type, p);
  rec.after_scene = after;
  rec.change_type = type;
  rec.captions = caption_templates(change, rec.before_scene, rec.after_scene);
  rec.viewpoint = change.distractor.viewpoint;
  rec.illumination = change.distractor.illumination;
  rec.iou = unchanged_iou(rec.before_scene, rec.after_scene, change, p);
  rec.before_image =
      ImageU8::from_planar(render_scene(rec.before_scene, Viewpoint{}, 1.0, p), p.image_size,
                           p.image_size);
  rec.after_image = ImageU8::from_planar(
      render_scene(rec.after_scene, rec.viewpoint, rec.illumination, p), p.image_size,
      p.image_size);
  return rec;
}

namespace {

ChangeType cycle_change_type(size_t k) {
  static const ChangeType kTypes[5] = {ChangeType::Color, ChangeType::Texture, ChangeType::Add,
                                       ChangeType::Drop, ChangeType::Move};
  return kTypes[k % 5];
}

PairRecord make_pair_with_retries(uint64_t base_seed, ChangeType type, size_t object_count,
                                  const SceneParams& p) {
  for (uint64_t attempt = 0; attempt < 64; ++attempt) {
    try {
      return make_pair(base_seed + attempt, type, object_count, p);
    } catch (const std::runtime_error&) {
      // ambiguous referent or placement failure: retry with shifted seed
      continue;
    }
  }
  throw std::runtime_error("make_pair: no valid pair after 64 seeds from " +
                           std::to_string(base_seed));
}

}  // namespace

void build_dataset(const DatasetConfig& cfg, const std::string& out_dir) {
  const SceneParams p = cfg.scene_params();
  fs::create_directories(out_dir);

  const char* splits[3] = {"train", "val", "test"};
  const size_t counts[3] = {cfg.train_pairs, cfg.val_pairs, cfg.test_pairs};

  for (size_t s = 0; s < 3; ++s) {
    const std::string split = splits[s];
    fs::create_directories(fs::path(out_dir) / split);
    std::ofstream jsonl(fs::path(out_dir) / (split + ".jsonl"), std::ios::trunc);
    if (!jsonl) throw std::runtime_error("cannot write annotations for split " + split);

    size_t change_cursor = 0;
    for (size_t i = 0; i < counts[s]; ++i) {
      // Deterministic distractor interleave at the configured fraction.
      const double f = cfg.distractor_fraction;
      const bool distractor =
          std::floor(static_cast<double>(i + 1) * f) > std::floor(static_cast<double>(i) * f);
      const ChangeType type = distractor ? ChangeType::None : cycle_change_type(change_cursor++);

      const uint64_t pair_seed =
          ((cfg.seed * 1000003ull + s) * 1000003ull + i) * 1000ull + 7ull;
      Rng pick(pair_seed);
      const size_t object_count =
          cfg.object_min + pick.below(cfg.object_max - cfg.object_min + 1);

      PairRecord rec = make_pair_with_retries(pair_seed, type, object_count, p);
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%s_%06zu", split.c_str(), i);
      rec.pair_id = buf;

      write_ppm((fs::path(out_dir) / split / (rec.pair_id + "_before.ppm")).string(),
                rec.before_image);
      write_ppm((fs::path(out_dir) / split / (rec.pair_id + "_after.ppm")).string(),
                rec.after_image);

      ordered_json line = {
          {"pair_id", rec.pair_id},
          {"change_type", to_string(rec.change_type)},
          {"captions", rec.captions},
          {"viewpoint_shift", {rec.viewpoint.shift_x, rec.viewpoint.shift_y}},
          {"rotation", rec.viewpoint.rotation_deg},
          {"illumination", rec.illumination},
          {"unchanged_iou", rec.iou ? ordered_json(*rec.iou) : ordered_json(nullptr)},
          {"before_scene", scene_to_json(rec.before_scene)},
          {"after_scene", scene_to_json(rec.after_scene)},
      };
      jsonl << line.dump() << '\n';
    }
  }

  make_vocabulary().save((fs::path(out_dir) / "vocab.txt").string());
  {
    std::ofstream words(fs::path(out_dir) / "candidates.txt", std::ios::trunc);
    for (const std::string& w : template_vocabulary()) words << w << '\n';
  }
  {
    std::ofstream meta(fs::path(out_dir) / "dataset_config.json", std::ios::trunc);
    ordered_json j = {{"train_pairs", cfg.train_pairs},
                      {"val_pairs", cfg.val_pairs},
                      {"test_pairs", cfg.test_pairs},
                      {"image_size", cfg.image_size},
                      {"object_min", cfg.object_min},
                      {"object_max", cfg.object_max},
                      {"shift_bound", cfg.shift_bound},
                      {"max_rotation", cfg.max_rotation},
                      {"illum_lo", cfg.illum_lo},
                      {"illum_hi", cfg.illum_hi},
                      {"distractor_fraction", cfg.distractor_fraction},
                      {"seed", cfg.seed}};
    meta << j.dump(2) << '\n';
  }
}

std::vector<PairRecord> load_split(const std::string& dataset_dir, const std::string& split) {
  const fs::path ann = fs::path(dataset_dir) / (split + ".jsonl");
  std::ifstream in(ann);
  if (!in) throw std::runtime_error("cannot read annotations: " + ann.string());
  std::vector<PairRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ordered_json j = ordered_json::parse(line);
    PairRecord rec;
    rec.pair_id = j.at("pair_id").get<std::string>();
    rec.change_type = change_type_from_string(j.at("change_type").get<std::string>());
    for (const auto& c : j.at("captions")) rec.captions.push_back(c.get<std::string>());
    rec.viewpoint.shift_x = j.at("viewpoint_shift")[0].get<double>();
    rec.viewpoint.shift_y = j.at("viewpoint_shift")[1].get<double>();
    rec.viewpoint.rotation_deg = j.at("rotation").get<double>();
    rec.illumination = j.at("illumination").get<double>();
    if (!j.at("unchanged_iou").is_null()) rec.iou = j.at("unchanged_iou").get<double>();
    rec.before_scene = scene_from_json(j.at("before_scene"));
    rec.after_scene = scene_from_json(j.at("after_scene"));
    rec.before_image =
        read_ppm((fs::path(dataset_dir) / split / (rec.pair_id + "_before.ppm")).string());
    rec.after_image =
        read_ppm((fs::path(dataset_dir) / split / (rec.pair_id + "_after.ppm")).string());
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace ccap
