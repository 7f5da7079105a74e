#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "anyshot/detector.hpp"
#include "anyshot/synthdata.hpp"

namespace anyshot {

enum class EvalMode { kZsd, kFsd, kAsd, kGzsd, kGfsd, kGasd };

const char* to_string(EvalMode m);
EvalMode eval_mode_from_string(const std::string& s);
bool is_generalized(EvalMode m);

struct EvalThresholds {
  double iou = 0.5;
  double score = 0.3;
  double nms_iou = 0.5;
  std::size_t recall_k = 100;
};

// Metrics are stored as fractions in [0,1]; exports report percentages.
struct EvalReport {
  std::map<std::string, double> per_class_ap;
  std::optional<double> map_seen;
  std::optional<double> map_few;
  std::optional<double> map_unseen;
  double hm = 0.0;
  double recall_at_100 = 0.0;
  EvalMode mode = EvalMode::kGasd;
  double iou_threshold = 0.5;

  std::string to_json() const;
  std::string to_csv_row() const;  // summary row, percentages with 2 decimals
  static std::string csv_header();
};

// Detections of one class across scenes, scene-tagged.
struct TaggedDetection {
  int scene_id = 0;
  BoundingBox box;
  double score = 0.0;
};

struct TaggedBox {
  int scene_id = 0;
  BoundingBox box;
};

// PASCAL-style AP: greedy score-descending matching at IoU >= iou_thr, each
// ground-truth box matched at most once, all-points interpolation of the
// precision-recall curve.
double average_precision(std::vector<TaggedDetection> dets,
                         const std::vector<TaggedBox>& gt, double iou_thr);

// Fraction of ground-truth boxes matched by the top-k detections per scene
// (class-aware matching at IoU >= iou_thr).
double recall_at_k(const std::vector<std::vector<Detection>>& dets_per_scene,
                   const std::vector<std::vector<GroundTruthBox>>& gt_per_scene,
                   std::size_t k, double iou_thr);

// n / sum(1/v). Zero if any value is zero.
double harmonic_mean(const std::vector<double>& values);

// Runs detection over the test split and scores it. Non-generalized modes
// restrict scoring to the novel classes of the mode; generalized modes score
// every class.
EvalReport evaluate(const AlignmentModel& model, const std::vector<Scene>& test_scenes,
                    const SemanticMatrix& semantics, EvalMode mode,
                    const EvalThresholds& thresholds);

// Scene-tagged detections exactly as scored by evaluate (post NMS).
std::vector<std::pair<int, Detection>> detection_dump(
    const AlignmentModel& model, const std::vector<Scene>& test_scenes,
    const SemanticMatrix& semantics, EvalMode mode, const EvalThresholds& thresholds);

}  // namespace anyshot
