#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "decoder.hpp"
#include "image.hpp"

namespace ccap {

enum class ObjShape { Cube, Sphere, Cylinder };     // drawn as square/circle/triangle
enum class ObjTexture { Solid, Striped };
enum class ObjSize { Small, Large };
enum class ChangeType { Color, Texture, Add, Drop, Move, None };

extern const char* const kColorNames[8];
extern const double kColorRgb[8][3];

std::string to_string(ChangeType t);
ChangeType change_type_from_string(const std::string& s);

struct SceneObject {
  ObjShape shape = ObjShape::Cube;
  size_t color = 0;  // index into kColorNames
  ObjTexture texture = ObjTexture::Solid;
  ObjSize size = ObjSize::Small;
  double cx = 0.0, cy = 0.0;  // pixels, canvas coordinates
};

struct SceneSpec {
  std::vector<SceneObject> objects;  // index order = depth order (later on top)
};

struct Viewpoint {
  double shift_x = 0.0;
  double shift_y = 0.0;
  double rotation_deg = 0.0;  // about the canvas center
  bool is_identity() const {
    return shift_x == 0.0 && shift_y == 0.0 && rotation_deg == 0.0;
  }
};

struct Distractor {
  Viewpoint viewpoint;
  double illumination = 1.0;
};

struct ChangeSpec {
  ChangeType type = ChangeType::None;
  int target_index = -1;      // before-scene index (after-scene index for Add)
  size_t new_color = 0;       // Color changes
  ObjTexture new_texture = ObjTexture::Solid;
  double move_dx = 0.0, move_dy = 0.0;
  Distractor distractor;
};

struct SceneParams {
  size_t image_size = 64;
  double shift_bound = 4.0;    // S, pixels per axis
  double max_rotation = 5.0;   // degrees
  double illum_lo = 0.8, illum_hi = 1.2;

  double radius(ObjSize s) const {
    const double scale = static_cast<double>(image_size) / 64.0;
    return (s == ObjSize::Small ? 5.0 : 9.0) * scale;
  }
  double max_radius() const { return radius(ObjSize::Large); }
  double min_separation() const { return 1.5 * max_radius(); }
};

// Deterministic scene from seed; throws after 1000 placement attempts.
SceneSpec generate_scene(uint64_t seed, size_t object_count, const SceneParams& p);

// Second scene differing only by the requested change, plus independently
// sampled distractor parameters.
std::pair<SceneSpec, ChangeSpec> apply_change(const SceneSpec& scene, uint64_t seed,
                                              ChangeType type, const SceneParams& p);

// Painter's-algorithm rasterizer with 2x supersampling; background 0.35 gray.
std::vector<double> render_scene(const SceneSpec& scene, const Viewpoint& vp,
                                 double illumination, const SceneParams& p);

// Referring expression from the minimal attribute subset that uniquely
// identifies the object; nullopt when even the full set is ambiguous.
std::optional<std::string> referring_expression(const SceneSpec& scene, size_t index);

// Two paraphrases per change type; throws std::runtime_error when a referent
// cannot be made unique (callers retry with a fresh seed).
std::vector<std::string> caption_templates(const ChangeSpec& change, const SceneSpec& before,
                                           const SceneSpec& after);

// Single-image enumeration caption ("a small red solid cube and ...").
std::string enumeration_caption(const SceneSpec& scene);

// Every template caption instantiable over the before scene (ranking pool).
std::vector<std::string> enumerate_candidate_captions(const SceneSpec& before);

// Mean bounding-box IoU of unchanged objects across the pair; nullopt when
// no object is unchanged.
std::optional<double> unchanged_iou(const SceneSpec& before, const SceneSpec& after,
                                    const ChangeSpec& change, const SceneParams& p);

// The closed caption vocabulary (everything the template grammar can emit).
std::vector<std::string> template_vocabulary();
Vocabulary make_vocabulary();

struct PairRecord {
  std::string pair_id;
  ChangeType change_type = ChangeType::None;
  std::vector<std::string> captions;
  Viewpoint viewpoint;
  double illumination = 1.0;
  std::optional<double> iou;
  SceneSpec before_scene, after_scene;
  ImageU8 before_image, after_image;
};

// In-memory pair synthesis (dataset building and sweeps share this path).
PairRecord make_pair(uint64_t pair_seed, ChangeType type, size_t object_count,
                     const SceneParams& p);

struct DatasetConfig {
  size_t train_pairs = 2000;
  size_t val_pairs = 200;
  size_t test_pairs = 400;
  size_t image_size = 64;
  size_t object_min = 3;
  size_t object_max = 6;
  double shift_bound = 4.0;
  double max_rotation = 5.0;
  double illum_lo = 0.8, illum_hi = 1.2;
  double distractor_fraction = 0.5;
  uint64_t seed = 1;

  SceneParams scene_params() const {
    return SceneParams{image_size, shift_bound, max_rotation, illum_lo, illum_hi};
  }
};

void build_dataset(const DatasetConfig& cfg, const std::string& out_dir);

// Reads one split (annotations plus images) back into memory.
std::vector<PairRecord> load_split(const std::string& dataset_dir, const std::string& split);

}  // namespace ccap
