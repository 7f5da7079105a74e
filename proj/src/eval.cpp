#include "anyshot/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "anyshot/errors.hpp"

namespace anyshot {

const char* to_string(EvalMode m) {
  switch (m) {
    case EvalMode::kZsd: return "ZSD";
    case EvalMode::kFsd: return "FSD";
    case EvalMode::kAsd: return "ASD";
    case EvalMode::kGzsd: return "GZSD";
    case EvalMode::kGfsd: return "GFSD";
    case EvalMode::kGasd: return "GASD";
  }
  return "?";
}

EvalMode eval_mode_from_string(const std::string& s) {
  if (s == "ZSD" || s == "zsd") return EvalMode::kZsd;
  if (s == "FSD" || s == "fsd") return EvalMode::kFsd;
  if (s == "ASD" || s == "asd") return EvalMode::kAsd;
  if (s == "GZSD" || s == "gzsd") return EvalMode::kGzsd;
  if (s == "GFSD" || s == "gfsd") return EvalMode::kGfsd;
  if (s == "GASD" || s == "gasd") return EvalMode::kGasd;
  throw ConfigError("unknown eval mode: " + s);
}

bool is_generalized(EvalMode m) {
  return m == EvalMode::kGzsd || m == EvalMode::kGfsd || m == EvalMode::kGasd;
}

double harmonic_mean(const std::vector<double>& values) {
  if (values.empty()) throw EmptyInput("harmonic mean of nothing");
  double inv_sum = 0.0;
  for (double v : values) {
    if (v < 0.0) throw DomainError("harmonic mean arguments must be >= 0");
    if (v == 0.0) return 0.0;
    inv_sum += 1.0 / v;
  }
  return static_cast<double>(values.size()) / inv_sum;
}

namespace {

bool tagged_detection_order(const TaggedDetection& a, const TaggedDetection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.scene_id != b.scene_id) return a.scene_id < b.scene_id;
  if (a.box.x_min != b.box.x_min) return a.box.x_min < b.box.x_min;
  return a.box.y_min < b.box.y_min;
}

}  // namespace

double average_precision(std::vector<TaggedDetection> dets,
                         const std::vector<TaggedBox>& gt, double iou_thr) {
  if (gt.empty()) return 0.0;
  if (dets.empty()) return 0.0;
  std::sort(dets.begin(), dets.end(), tagged_detection_order);
  std::vector<bool> gt_used(gt.size(), false);
  std::vector<int> is_tp(dets.size(), 0);
  for (std::size_t i = 0; i < dets.size(); ++i) {
    double best = 0.0;
    int best_gt = -1;
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (gt_used[g] || gt[g].scene_id != dets[i].scene_id) continue;
      const double v = iou(dets[i].box, gt[g].box);
      if (v > best) {
        best = v;
        best_gt = static_cast<int>(g);
      }
    }
    if (best_gt >= 0 && best >= iou_thr) {
      gt_used[best_gt] = true;
      is_tp[i] = 1;
    }
  }
  // All-points interpolation over the precision envelope.
  const double total = static_cast<double>(gt.size());
  std::vector<double> precision(dets.size()), recall(dets.size());
  int tp = 0;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    tp += is_tp[i];
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(tp) / total;
  }
  for (std::size_t i = dets.size() - 1; i > 0; --i)
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = recall[0] * precision[0];
  for (std::size_t i = 1; i < dets.size(); ++i)
    ap += (recall[i] - recall[i - 1]) * precision[i];
  return ap;
}

double recall_at_k(const std::vector<std::vector<Detection>>& dets_per_scene,
                   const std::vector<std::vector<GroundTruthBox>>& gt_per_scene,
                   std::size_t k, double iou_thr) {
  if (k < 1) throw DomainError("recall@k needs k >= 1");
  if (dets_per_scene.size() != gt_per_scene.size())
    throw DimensionError("recall@k: scene count mismatch");
  std::size_t total_gt = 0, matched = 0;
  for (std::size_t s = 0; s < gt_per_scene.size(); ++s) {
    total_gt += gt_per_scene[s].size();
    std::vector<Detection> dets = dets_per_scene[s];
    std::sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.class_id != b.class_id) return a.class_id < b.class_id;
      return a.box.x_min < b.box.x_min;
    });
    if (dets.size() > k) dets.resize(k);
    std::vector<bool> used(gt_per_scene[s].size(), false);
    for (const auto& det : dets) {
      double best = 0.0;
      int best_gt = -1;
      for (std::size_t g = 0; g < gt_per_scene[s].size(); ++g) {
        if (used[g] || gt_per_scene[s][g].class_id != det.class_id) continue;
        const double v = iou(det.box, gt_per_scene[s][g].box);
        if (v > best) {
          best = v;
          best_gt = static_cast<int>(g);
        }
      }
      if (best_gt >= 0 && best >= iou_thr) {
        used[best_gt] = true;
        ++matched;
      }
    }
  }
  return total_gt == 0 ? 0.0 : static_cast<double>(matched) / static_cast<double>(total_gt);
}

namespace {

std::vector<std::size_t> classes_for_mode(const SemanticMatrix& semantics,
                                          EvalMode mode) {
  const std::size_t F = semantics.few_shot_count();
  const std::size_t U = semantics.unseen_count();
  switch (mode) {
    case EvalMode::kZsd:
      if (U == 0) throw ModeMismatch("ZSD requires unseen classes");
      return semantics.ids_of(ClassGroup::kUnseen);
    case EvalMode::kFsd:
      if (F == 0) throw ModeMismatch("FSD requires few-shot classes");
      return semantics.ids_of(ClassGroup::kFewShot);
    case EvalMode::kAsd:
      if (F == 0 || U == 0) throw ModeMismatch("ASD requires few-shot and unseen classes");
      return semantics.novel_ids();
    case EvalMode::kGzsd:
      if (U == 0) throw ModeMismatch("GZSD requires unseen classes");
      return semantics.all_ids();
    case EvalMode::kGfsd:
      if (F == 0) throw ModeMismatch("GFSD requires few-shot classes");
      return semantics.all_ids();
    case EvalMode::kGasd:
      if (F == 0 || U == 0)
        throw ModeMismatch("GASD requires few-shot and unseen classes");
      return semantics.all_ids();
  }
  throw ModeMismatch("unhandled eval mode");
}

struct ScoredScenes {
  std::vector<std::vector<Detection>> dets_per_scene;   // post NMS
  std::vector<std::vector<GroundTruthBox>> gt_per_scene;  // restricted to scored classes
};

ScoredScenes run_detection(const AlignmentModel& model,
                           const std::vector<Scene>& test_scenes,
                           const SemanticMatrix& semantics,
                           const std::vector<std::size_t>& class_ids,
                           const EvalThresholds& thr) {
  ScoredScenes out;
  std::vector<bool> scored(semantics.total(), false);
  for (std::size_t c : class_ids) scored[c] = true;
  for (const Scene& scene : test_scenes) {
    auto dets = nms(predict(scene, model, semantics, class_ids, thr.score), thr.nms_iou);
    out.dets_per_scene.push_back(std::move(dets));
    std::vector<GroundTruthBox> gt;
    for (const auto& b : scene.boxes)
      if (scored[static_cast<std::size_t>(b.class_id)]) gt.push_back(b);
    out.gt_per_scene.push_back(std::move(gt));
  }
  return out;
}

}  // namespace

EvalReport evaluate(const AlignmentModel& model, const std::vector<Scene>& test_scenes,
                    const SemanticMatrix& semantics, EvalMode mode,
                    const EvalThresholds& thresholds) {
  const auto class_ids = classes_for_mode(semantics, mode);
  const auto scored = run_detection(model, test_scenes, semantics, class_ids, thresholds);

  EvalReport report;
  report.mode = mode;
  report.iou_threshold = thresholds.iou;

  // Per-class AP over the scored classes that have ground truth.
  std::map<ClassGroup, std::vector<double>> group_aps;
  for (std::size_t c : class_ids) {
    std::vector<TaggedDetection> dets;
    std::vector<TaggedBox> gt;
    for (std::size_t s = 0; s < test_scenes.size(); ++s) {
      for (const auto& det : scored.dets_per_scene[s])
        if (det.class_id == static_cast<int>(c))
          dets.push_back({static_cast<int>(s), det.box, det.score});
      for (const auto& b : scored.gt_per_scene[s])
        if (b.class_id == static_cast<int>(c))
          gt.push_back({static_cast<int>(s), b.box});
    }
    if (gt.empty()) continue;  // class absent from the test split
    const double ap = average_precision(std::move(dets), gt, thresholds.iou);
    report.per_class_ap[semantics.class_names()[c]] = ap;
    group_aps[semantics.group_of(c)].push_back(ap);
  }

  auto group_mean = [&group_aps](ClassGroup g) -> std::optional<double> {
    auto it = group_aps.find(g);
    if (it == group_aps.end() || it->second.empty()) return std::nullopt;
    double sum = 0.0;
    for (double ap : it->second) sum += ap;
    return sum / static_cast<double>(it->second.size());
  };
  report.map_seen = group_mean(ClassGroup::kSeen);
  report.map_few = group_mean(ClassGroup::kFewShot);
  report.map_unseen = group_mean(ClassGroup::kUnseen);

  std::vector<double> hm_args;
  switch (mode) {
    case EvalMode::kZsd:
      hm_args = {report.map_unseen.value_or(0.0)};
      break;
    case EvalMode::kFsd:
      hm_args = {report.map_few.value_or(0.0)};
      break;
    case EvalMode::kAsd:
      hm_args = {report.map_few.value_or(0.0), report.map_unseen.value_or(0.0)};
      break;
    case EvalMode::kGzsd:
      hm_args = {report.map_seen.value_or(0.0), report.map_unseen.value_or(0.0)};
      break;
    case EvalMode::kGfsd:
      hm_args = {report.map_seen.value_or(0.0), report.map_few.value_or(0.0)};
      break;
    case EvalMode::kGasd:
      hm_args = {report.map_seen.value_or(0.0), report.map_few.value_or(0.0),
                 report.map_unseen.value_or(0.0)};
      break;
  }
  report.hm = harmonic_mean(hm_args);
  report.recall_at_100 = recall_at_k(scored.dets_per_scene, scored.gt_per_scene,
                                     thresholds.recall_k, thresholds.iou);
  return report;
}

std::vector<std::pair<int, Detection>> detection_dump(
    const AlignmentModel& model, const std::vector<Scene>& test_scenes,
    const SemanticMatrix& semantics, EvalMode mode, const EvalThresholds& thresholds) {
  const auto class_ids = classes_for_mode(semantics, mode);
  const auto scored = run_detection(model, test_scenes, semantics, class_ids, thresholds);
  std::vector<std::pair<int, Detection>> out;
  for (std::size_t s = 0; s < scored.dets_per_scene.size(); ++s)
    for (const auto& det : scored.dets_per_scene[s])
      out.emplace_back(static_cast<int>(s), det);
  return out;
}

namespace {

double pct(double fraction) { return 100.0 * fraction; }

}  // namespace

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["mode"] = anyshot::to_string(mode);
  j["iou_threshold"] = iou_threshold;
  nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
  for (const auto& [name, ap] : per_class_ap) per_class[name] = pct(ap);
  j["per_class_ap"] = per_class;
  if (map_seen) j["map_seen"] = pct(*map_seen);
  if (map_few) j["map_few"] = pct(*map_few);
  if (map_unseen) j["map_unseen"] = pct(*map_unseen);
  j["harmonic_mean"] = pct(hm);
  j["recall_at_100"] = pct(recall_at_100);
  return j.dump(2) + "\n";
}

std::string EvalReport::csv_header() {
  return "mode,map_seen,map_few,map_unseen,hm,recall_at_100\n";
}

std::string EvalReport::to_csv_row() const {
  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string();
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", pct(*v));
    return std::string(buf);
  };
  char tail[64];
  std::snprintf(tail, sizeof(tail), "%.2f,%.2f", pct(hm), pct(recall_at_100));
  std::ostringstream os;
  os << anyshot::to_string(mode) << "," << cell(map_seen) << "," << cell(map_few)
     << "," << cell(map_unseen) << "," << tail << "\n";
  return os.str();
}

}  // namespace anyshot
