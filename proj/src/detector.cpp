#include "anyshot/detector.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "anyshot/errors.hpp"
#include "anyshot/synthdata.hpp"

namespace anyshot {

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<AnchorMatch> match_anchors(const std::vector<BoundingBox>& anchors,
                                       const std::vector<GroundTruthBox>& gt,
                                       double pos_thr, double neg_thr) {
  if (!(pos_thr > neg_thr)) throw DomainError("pos_thr must exceed neg_thr");
  std::vector<AnchorMatch> out(anchors.size());
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    double best = 0.0;
    int best_gt = -1;
    for (std::size_t g = 0; g < gt.size(); ++g) {
      const double v = iou(anchors[a], gt[g].box);
      if (v > best) {  // strict: ties keep the lowest gt index
        best = v;
        best_gt = static_cast<int>(g);
      }
    }
    if (best >= pos_thr) {
      out[a] = {MatchKind::kPositive, gt[best_gt].class_id, best_gt};
    } else if (best < neg_thr) {
      out[a] = {MatchKind::kNegative, -1, -1};
    } else {
      out[a] = {MatchKind::kIgnore, -1, -1};
    }
  }
  return out;
}

std::vector<Detection> predict(const Scene& scene, const AlignmentModel& model,
                               const SemanticMatrix& semantics,
                               const std::vector<std::size_t>& class_ids,
                               double score_threshold) {
  const Matrix prototypes = class_prototypes(model, semantics, class_ids);
  std::vector<Detection> dets;
  for (std::size_t a = 0; a < scene.anchor_features.size(); ++a) {
    const Vector scores =
        score_with_prototypes(scene.anchor_features[a], model, prototypes);
    for (std::size_t c = 0; c < scores.size(); ++c) {
      if (scores[c] > score_threshold)
        dets.push_back({scene.anchor_geometry[a],
                        static_cast<int>(class_ids[c]), scores[c]});
    }
  }
  return dets;
}

namespace {

bool detection_order(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.class_id != b.class_id) return a.class_id < b.class_id;
  if (a.box.x_min != b.box.x_min) return a.box.x_min < b.box.x_min;
  if (a.box.y_min != b.box.y_min) return a.box.y_min < b.box.y_min;
  if (a.box.x_max != b.box.x_max) return a.box.x_max < b.box.x_max;
  return a.box.y_max < b.box.y_max;
}

}  // namespace

std::vector<Detection> nms(std::vector<Detection> dets, double iou_thr) {
  std::sort(dets.begin(), dets.end(), detection_order);
  std::vector<Detection> kept;
  std::vector<bool> suppressed(dets.size(), false);
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (suppressed[i]) continue;
    kept.push_back(dets[i]);
    for (std::size_t j = i + 1; j < dets.size(); ++j) {
      if (suppressed[j] || dets[j].class_id != dets[i].class_id) continue;
      if (iou(dets[i].box, dets[j].box) > iou_thr) suppressed[j] = true;
    }
  }
  return kept;
}

std::string detections_csv(const std::vector<std::pair<int, Detection>>& scene_dets) {
  std::ostringstream os;
  os << "scene_id,class,score,x_min,y_min,x_max,y_max\n";
  char buf[256];
  for (const auto& [scene_id, d] : scene_dets) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.6f,%.6f,%.6f,%.6f,%.6f\n", scene_id,
                  d.class_id, d.score, d.box.x_min, d.box.y_min, d.box.x_max,
                  d.box.y_max);
    os << buf;
  }
  return os.str();
}

}  // namespace anyshot
