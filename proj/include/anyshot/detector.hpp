#pragma once

#include <string>
#include <vector>

#include "anyshot/alignment.hpp"
#include "anyshot/matrix.hpp"

namespace anyshot {

struct BoundingBox {
  double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  bool valid() const { return x_max > x_min && y_max > y_min; }

  bool operator==(const BoundingBox&) const = default;
};

struct GroundTruthBox {
  BoundingBox box;
  int class_id = -1;
};

struct Detection {
  BoundingBox box;
  int class_id = -1;
  double score = 0.0;
};

double iou(const BoundingBox& a, const BoundingBox& b);

enum class MatchKind { kPositive, kNegative, kIgnore };

struct AnchorMatch {
  MatchKind kind = MatchKind::kNegative;
  int class_id = -1;  // set for positives
  int gt_index = -1;  // set for positives
};

// Positive for the ground-truth box with the highest IoU when that IoU is at
// least pos_thr (ties broken by lowest gt index); negative when the best IoU
// is below neg_thr; ignore in between.
std::vector<AnchorMatch> match_anchors(const std::vector<BoundingBox>& anchors,
                                       const std::vector<GroundTruthBox>& gt,
                                       double pos_thr, double neg_thr);

struct Scene;  // synthdata

// One detection per (anchor, class) whose score exceeds score_threshold.
// Detection boxes are the anchor boxes.
std::vector<Detection> predict(const Scene& scene, const AlignmentModel& model,
                               const SemanticMatrix& semantics,
                               const std::vector<std::size_t>& class_ids,
                               double score_threshold);

// Greedy per-class suppression: keep the highest-scored detection, drop
// same-class overlaps with IoU > iou_thr. Output sorted by descending score,
// ties broken by class id then box coordinates.
std::vector<Detection> nms(std::vector<Detection> dets, double iou_thr);

// CSV rows: scene_id,class,score,x_min,y_min,x_max,y_max
std::string detections_csv(const std::vector<std::pair<int, Detection>>& scene_dets);

}  // namespace anyshot
