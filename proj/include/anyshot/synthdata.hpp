#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "anyshot/detector.hpp"
#include "anyshot/matrix.hpp"
#include "anyshot/rng.hpp"
#include "anyshot/semantics.hpp"

namespace anyshot {

struct WorldSpec {
  std::size_t seen = 13;
  std::size_t few_shot = 2;
  std::size_t unseen = 2;
  std::size_t semantic_dim = 24;   // d
  std::size_t feature_dim = 32;    // n
  double noise_sigma = 0.08;       // per-coordinate feature noise
  std::size_t grid = 6;            // grid x grid anchors on the unit square
  std::uint64_t seed = 7;

  std::size_t total() const { return seen + few_shot + unseen; }
};

// A controllable detection world: class semantics plus a hidden linear
// semantic-to-visual map. The projection and background prototypes are
// generation-time state only and are never shown to the model.
struct SyntheticWorld {
  SemanticMatrix semantics;
  Matrix hidden_projection;      // n x d
  Matrix background_prototypes;  // k x n, feature centers of non-object anchors
  double noise_sigma = 0.0;
  std::size_t scene_grid = 6;
  std::uint64_t seed = 0;

  std::size_t feature_dim() const { return hidden_projection.rows(); }
};

struct Scene {
  std::vector<GroundTruthBox> boxes;
  std::vector<Vector> anchor_features;
  std::vector<BoundingBox> anchor_geometry;
};

struct SplitSizes {
  std::size_t train_scenes = 200;
  std::size_t finetune_scenes = 60;
  std::size_t test_scenes = 60;
  std::size_t objects_per_scene = 3;
};

// Base/fine-tune/test splits. d_tr holds seen-only scenes, d_ft the few-shot
// scenes (plus seen instances), d_ts may contain any class.
struct DatasetBundle {
  std::vector<Scene> d_tr;
  std::vector<Scene> d_ft;
  std::vector<Scene> d_ts;
  std::size_t shots = 0;
};

// IoU thresholds shared by scene generation and training.
inline constexpr double kPositiveIou = 0.5;
inline constexpr double kNegativeIou = 0.4;

SyntheticWorld generate_world(const WorldSpec& spec);

// Same world mechanics around externally supplied semantics (e.g. loaded
// word vectors).
SyntheticWorld generate_world(SemanticMatrix semantics, std::size_t feature_dim,
                              double noise_sigma, std::size_t grid,
                              std::uint64_t seed);

// Scene with the requested objects drawn from allowed_classes, one anchor per
// grid cell. Object boxes are jittered grid cells, so each object is covered
// by exactly its home anchor.
Scene generate_scene(const SyntheticWorld& world, std::size_t object_count,
                     const std::vector<std::size_t>& allowed_classes, Rng& rng);

DatasetBundle assemble_bundle(const SyntheticWorld& world, const SplitSizes& sizes,
                              std::size_t shots);

// On-disk layout: <dir>/world.json, <dir>/bundle.json and one line-oriented
// .scenes file per split.
void save_bundle(const SyntheticWorld& world, const DatasetBundle& bundle,
                 const std::string& dir);
SyntheticWorld load_world(const std::string& dir);
DatasetBundle load_bundle(const std::string& dir);

}  // namespace anyshot
