#include "anyshot/synthdata.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "anyshot/errors.hpp"

namespace anyshot {

namespace {

// Background anchors draw their features from a few fixed world-specific
// prototype directions (plus noise), the way backbone features of sky, wall
// or ground cluster in their own region of feature space. A scorer can learn
// to reject these regions; zero-mean isotropic noise would be unrejectable
// by a bilinear score.
constexpr std::size_t kBackgroundPrototypes = 3;
constexpr double kBackgroundNorm = 0.5;
constexpr double kBackgroundJitter = 0.15;

// Novel embeddings are sampled mostly inside the span of the seen ones:
// knowledge can only transfer to classes that relate to something seen, and
// detectors fine-tuned on seen data must be able to affect novel scores.
// Few-shot and unseen classes draw from disjoint halves of the seen
// prototypes so the two novel groups have distinct seen neighborhoods.
constexpr double kNovelSpanMix = 0.95;

SemanticMatrix sample_semantics(const WorldSpec& spec, Rng& rng) {
  Matrix vectors(spec.semantic_dim, spec.total());
  std::vector<std::string> names;
  std::vector<ClassGroup> partition;
  const std::size_t half = std::max<std::size_t>(1, spec.seen / 2);
  for (std::size_t c = 0; c < spec.total(); ++c) {
    const ClassGroup group = c < spec.seen ? ClassGroup::kSeen
                             : c < spec.seen + spec.few_shot
                                 ? ClassGroup::kFewShot
                                 : ClassGroup::kUnseen;
    Vector v(spec.semantic_dim);
    for (double& x : v) x = rng.normal();
    v = l2_normalize(v);
    if (group != ClassGroup::kSeen) {
      const std::size_t lo = group == ClassGroup::kFewShot ? 0 : half;
      const std::size_t hi = group == ClassGroup::kFewShot ? half : spec.seen;
      Vector span(spec.semantic_dim, 0.0);
      const std::size_t picks = std::min<std::size_t>(3, hi - lo);
      for (std::size_t k = 0; k < picks; ++k) {
        const Vector w = vectors.column(lo + rng.index(hi - lo));
        const double weight = rng.uniform(0.2, 1.0);
        for (std::size_t i = 0; i < span.size(); ++i) span[i] += weight * w[i];
      }
      span = l2_normalize(span);
      for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = kNovelSpanMix * span[i] + (1.0 - kNovelSpanMix) * v[i];
      v = l2_normalize(v);
    }
    vectors.set_column(c, v);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "class_%02zu", c);
    names.emplace_back(buf);
    partition.push_back(group);
  }
  return SemanticMatrix(std::move(names), std::move(vectors), std::move(partition));
}

Matrix sample_projection(std::size_t n, std::size_t d, Rng& rng) {
  // Entry scale 1/sqrt(n) puts unit semantic vectors at roughly unit-norm
  // visual features.
  Matrix p(n, d);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (double& x : p.storage()) x = rng.normal(0.0, scale);
  return p;
}

// Objects with these exact class labels, one per jittered grid cell.
Scene generate_scene_with_labels(const SyntheticWorld& world,
                                 const std::vector<std::size_t>& labels, Rng& rng) {
  const std::size_t g = world.scene_grid;
  const double cell = 1.0 / static_cast<double>(g);
  Scene scene;
  scene.anchor_geometry.reserve(g * g);
  for (std::size_t r = 0; r < g; ++r)
    for (std::size_t c = 0; c < g; ++c)
      scene.anchor_geometry.push_back(
          {c * cell, r * cell, (c + 1) * cell, (r + 1) * cell});

  if (labels.size() > g * g)
    throw ConfigError("more objects than grid cells in a scene");

  // Boxes are grid cells with each edge jittered by up to 10% of a cell,
  // which keeps every object's IoU with its home anchor above the positive
  // threshold and below the negative threshold for all other anchors.
  std::vector<std::size_t> cells(g * g);
  for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = i;
  rng.shuffle(cells);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const BoundingBox& home = scene.anchor_geometry[cells[i]];
    const double j = 0.1 * cell;
    BoundingBox box{
        std::max(0.0, home.x_min + rng.uniform(-j, j)),
        std::max(0.0, home.y_min + rng.uniform(-j, j)),
        std::min(1.0, home.x_max + rng.uniform(-j, j)),
        std::min(1.0, home.y_max + rng.uniform(-j, j)),
    };
    scene.boxes.push_back({box, static_cast<int>(labels[i])});
  }

  const auto matches =
      match_anchors(scene.anchor_geometry, scene.boxes, kPositiveIou, kNegativeIou);
  const std::size_t n = world.feature_dim();
  const double jitter = kBackgroundJitter / std::sqrt(static_cast<double>(n));
  scene.anchor_features.reserve(matches.size());
  for (const auto& m : matches) {
    Vector f(n);
    if (m.kind == MatchKind::kPositive) {
      f = matvec(world.hidden_projection,
                 world.semantics.embedding(static_cast<std::size_t>(m.class_id)));
      if (world.noise_sigma > 0.0)
        for (double& x : f) x += rng.normal(0.0, world.noise_sigma);
    } else {
      const std::size_t proto = rng.index(world.background_prototypes.rows());
      for (std::size_t i = 0; i < n; ++i)
        f[i] = world.background_prototypes.at(proto, i) + rng.normal(0.0, jitter);
    }
    scene.anchor_features.push_back(std::move(f));
  }
  return scene;
}

}  // namespace

SyntheticWorld generate_world(SemanticMatrix semantics, std::size_t feature_dim,
                              double noise_sigma, std::size_t grid,
                              std::uint64_t seed) {
  if (feature_dim < 2 || semantics.dim() < 2)
    throw ConfigError("world needs feature_dim >= 2 and semantic_dim >= 2");
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
  if (grid < 1) throw ConfigError("scene grid must be >= 1");
  Rng rng(seed ^ 0x5eedc0deULL);
  SyntheticWorld world;
  world.hidden_projection = sample_projection(feature_dim, semantics.dim(), rng);
  world.background_prototypes = Matrix(kBackgroundPrototypes, feature_dim);
  for (std::size_t p = 0; p < kBackgroundPrototypes; ++p) {
    Vector dir(feature_dim);
    for (double& x : dir) x = rng.normal();
    dir = l2_normalize(dir);
    for (std::size_t i = 0; i < feature_dim; ++i)
      world.background_prototypes.at(p, i) = kBackgroundNorm * dir[i];
  }
  world.semantics = std::move(semantics);
  world.noise_sigma = noise_sigma;
  world.scene_grid = grid;
  world.seed = seed;
  return world;
}

SyntheticWorld generate_world(const WorldSpec& spec) {
  if (spec.seen < 1) throw ConfigError("world needs at least one seen class");
  Rng rng(spec.seed);
  SemanticMatrix semantics = sample_semantics(spec, rng);
  return generate_world(std::move(semantics), spec.feature_dim, spec.noise_sigma,
                        spec.grid, spec.seed);
}

Scene generate_scene(const SyntheticWorld& world, std::size_t object_count,
                     const std::vector<std::size_t>& allowed_classes, Rng& rng) {
  if (object_count > 0 && allowed_classes.empty())
    throw ConfigError("scene objects requested but no classes allowed");
  std::vector<std::size_t> labels(object_count);
  for (auto& l : labels) l = allowed_classes[rng.index(allowed_classes.size())];
  return generate_scene_with_labels(world, labels, rng);
}

DatasetBundle assemble_bundle(const SyntheticWorld& world, const SplitSizes& sizes,
                              std::size_t shots) {
  const auto seen = world.semantics.seen_ids();
  const auto few = world.semantics.ids_of(ClassGroup::kFewShot);
  const std::size_t F = few.size();
  if (F > 0 && shots < 1)
    throw ConfigError("few-shot classes present but shots < 1");
  if (F > 0 && sizes.finetune_scenes == 0)
    throw ConfigError("few-shot classes present but no fine-tune scenes");
  const std::size_t few_boxes = F * shots;
  if (F > 0 && few_boxes > sizes.finetune_scenes * sizes.objects_per_scene)
    throw ConfigError("fine-tune split cannot host all few-shot boxes");

  Rng rng(world.seed * 0x100000001b3ULL + 0xcbf29ce484222325ULL);
  DatasetBundle bundle;
  bundle.shots = F > 0 ? shots : 0;

  // Base training: seen-only scenes.
  for (std::size_t s = 0; s < sizes.train_scenes; ++s) {
    Rng scene_rng = rng.fork(s);
    bundle.d_tr.push_back(
        generate_scene(world, sizes.objects_per_scene, seen, scene_rng));
  }

  // Fine-tuning: exactly `shots` boxes per few-shot class, the remaining
  // object slots filled with seen instances.
  if (F > 0) {
    std::vector<std::size_t> few_queue;
    for (std::size_t k = 0; k < shots; ++k)
      for (std::size_t c = 0; c < F; ++c) few_queue.push_back(few[c]);
    for (std::size_t s = 0; s < sizes.finetune_scenes; ++s) {
      Rng scene_rng = rng.fork(1000 + s);
      const std::size_t remaining_scenes = sizes.finetune_scenes - s;
      const std::size_t pending = few_queue.size();
      std::size_t take = (pending + remaining_scenes - 1) / remaining_scenes;
      take = std::min({take, pending, sizes.objects_per_scene});
      std::vector<std::size_t> labels(few_queue.begin(),
                                      few_queue.begin() + static_cast<long>(take));
      few_queue.erase(few_queue.begin(), few_queue.begin() + static_cast<long>(take));
      while (labels.size() < sizes.objects_per_scene)
        labels.push_back(seen[scene_rng.index(seen.size())]);
      bundle.d_ft.push_back(generate_scene_with_labels(world, labels, scene_rng));
    }
    if (!few_queue.empty()) throw ConfigError("internal: few-shot boxes left unplaced");
  }

  // Test: all classes, round-robin coverage.
  const auto all = world.semantics.all_ids();
  std::size_t next_class = 0;
  for (std::size_t s = 0; s < sizes.test_scenes; ++s) {
    Rng scene_rng = rng.fork(2000 + s);
    std::vector<std::size_t> labels(sizes.objects_per_scene);
    for (auto& l : labels) l = all[next_class++ % all.size()];
    bundle.d_ts.push_back(generate_scene_with_labels(world, labels, scene_rng));
  }
  return bundle;
}

namespace {

void write_scenes(const std::vector<Scene>& scenes, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write scenes file: " + path);
  char buf[64];
  auto num = [&buf](double x) {
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return std::string(buf);
  };
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const Scene& scene = scenes[s];
    out << "scene " << s << "\n";
    for (const auto& b : scene.boxes)
      out << "object " << b.class_id << " " << num(b.box.x_min) << " "
          << num(b.box.y_min) << " " << num(b.box.x_max) << " " << num(b.box.y_max)
          << "\n";
    for (std::size_t a = 0; a < scene.anchor_geometry.size(); ++a) {
      const auto& g = scene.anchor_geometry[a];
      out << "anchor " << num(g.x_min) << " " << num(g.y_min) << " " << num(g.x_max)
          << " " << num(g.y_max);
      for (double x : scene.anchor_features[a]) out << " " << num(x);
      out << "\n";
    }
    out << "end\n";
  }
}

std::vector<Scene> read_scenes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scenes file: " + path);
  std::vector<Scene> scenes;
  Scene current;
  bool open = false;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind)) continue;
    if (kind == "scene") {
      if (open) throw IoError("scenes file: nested scene record");
      current = Scene{};
      open = true;
    } else if (kind == "object") {
      GroundTruthBox b;
      if (!(ls >> b.class_id >> b.box.x_min >> b.box.y_min >> b.box.x_max >>
            b.box.y_max))
        throw IoError("scenes file: bad object line");
      current.boxes.push_back(b);
    } else if (kind == "anchor") {
      BoundingBox g;
      if (!(ls >> g.x_min >> g.y_min >> g.x_max >> g.y_max))
        throw IoError("scenes file: bad anchor line");
      Vector f;
      double x;
      while (ls >> x) f.push_back(x);
      current.anchor_geometry.push_back(g);
      current.anchor_features.push_back(std::move(f));
    } else if (kind == "end") {
      if (!open) throw IoError("scenes file: end without scene");
      scenes.push_back(std::move(current));
      open = false;
    } else {
      throw IoError("scenes file: unknown record '" + kind + "'");
    }
  }
  if (open) throw IoError("scenes file: unterminated scene");
  return scenes;
}

nlohmann::ordered_json matrix_to_json(const Matrix& m) {
  nlohmann::ordered_json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["data"] = m.storage();
  return j;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  const auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != m.size()) throw IoError("world matrix size mismatch");
  m.storage() = data;
  return m;
}

}  // namespace

void save_bundle(const SyntheticWorld& world, const DatasetBundle& bundle,
                 const std::string& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json w;
  w["format"] = "anyshot-world-v1";
  w["class_names"] = world.semantics.class_names();
  std::vector<std::string> tags;
  for (ClassGroup g : world.semantics.partition()) tags.emplace_back(to_string(g));
  w["partition"] = tags;
  w["semantic_dim"] = world.semantics.dim();
  w["feature_dim"] = world.feature_dim();
  w["noise_sigma"] = world.noise_sigma;
  w["scene_grid"] = world.scene_grid;
  w["seed"] = world.seed;
  w["semantics"] = matrix_to_json(world.semantics.vectors());
  w["hidden_projection"] = matrix_to_json(world.hidden_projection);
  w["background_prototypes"] = matrix_to_json(world.background_prototypes);
  {
    std::ofstream out(dir + "/world.json");
    if (!out) throw IoError("cannot write world.json in " + dir);
    out << w.dump(2) << "\n";
  }
  nlohmann::ordered_json b;
  b["format"] = "anyshot-bundle-v1";
  b["shots"] = bundle.shots;
  b["train_scenes"] = bundle.d_tr.size();
  b["finetune_scenes"] = bundle.d_ft.size();
  b["test_scenes"] = bundle.d_ts.size();
  {
    std::ofstream out(dir + "/bundle.json");
    if (!out) throw IoError("cannot write bundle.json in " + dir);
    out << b.dump(2) << "\n";
  }
  write_scenes(bundle.d_tr, dir + "/train.scenes");
  write_scenes(bundle.d_ft, dir + "/finetune.scenes");
  write_scenes(bundle.d_ts, dir + "/test.scenes");
}

SyntheticWorld load_world(const std::string& dir) {
  std::ifstream in(dir + "/world.json");
  if (!in) throw IoError("cannot open world.json in " + dir);
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != "anyshot-world-v1")
    throw IoError("unrecognized world format in " + dir);
  const auto names = j.at("class_names").get<std::vector<std::string>>();
  const auto tags = j.at("partition").get<std::vector<std::string>>();
  std::vector<ClassGroup> partition;
  for (const auto& t : tags) partition.push_back(class_group_from_string(t));
  SyntheticWorld world;
  world.semantics =
      SemanticMatrix(names, matrix_from_json(j.at("semantics")), partition);
  world.hidden_projection = matrix_from_json(j.at("hidden_projection"));
  world.background_prototypes = matrix_from_json(j.at("background_prototypes"));
  world.noise_sigma = j.at("noise_sigma").get<double>();
  world.scene_grid = j.at("scene_grid").get<std::size_t>();
  world.seed = j.at("seed").get<std::uint64_t>();
  return world;
}

DatasetBundle load_bundle(const std::string& dir) {
  std::ifstream in(dir + "/bundle.json");
  if (!in) throw IoError("cannot open bundle.json in " + dir);
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != "anyshot-bundle-v1")
    throw IoError("unrecognized bundle format in " + dir);
  DatasetBundle bundle;
  bundle.shots = j.at("shots").get<std::size_t>();
  bundle.d_tr = read_scenes(dir + "/train.scenes");
  bundle.d_ft = read_scenes(dir + "/finetune.scenes");
  bundle.d_ts = read_scenes(dir + "/test.scenes");
  return bundle;
}

}  // namespace anyshot
