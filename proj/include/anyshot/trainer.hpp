#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "anyshot/alignment.hpp"
#include "anyshot/loss.hpp"
#include "anyshot/synthdata.hpp"

namespace anyshot {

// How fine-tuning aggregates anchor losses: the seen/novel group mix, or a
// plain focal pool over all anchors (the classic baseline recipe).
enum class FinetuneAggregation { kGroupMix, kPooledFocal };

struct TrainConfig {
  std::size_t epochs_base = 30;
  std::size_t epochs_ft = 10;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_scenes = 1;
  std::uint64_t seed = 7;
  LossConfig loss;
  FinetuneAggregation ft_aggregation = FinetuneAggregation::kGroupMix;

  void validate() const;
};

struct TrainReport {
  std::vector<double> epoch_mean_loss;
  std::string param_checksum;
  double wall_seconds = 0.0;

  std::string to_json() const;
};

// Adam with bias correction, one state per parameter matrix.
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(std::size_t size) : m_(size, 0.0), v_(size, 0.0) {}
  void step(std::vector<double>& params, const std::vector<double>& grad,
            const TrainConfig& cfg);

 private:
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

std::string parameter_checksum(const AlignmentModel& model);

// Stage 1: Adam on the focal loss over seen-class scores only. Batch loss is
// the per-anchor slot-loss sum normalized by the number of positive anchors
// in the batch.
TrainReport train_base(const std::vector<Scene>& d_tr, AlignmentModel& model,
                       const SemanticMatrix& semantics, const TrainConfig& cfg);

// Stage 2: all T classes are scored; seen-positive and background anchors
// take the focal path, novel-positive anchors the rebalanced path, mixed
// per batch as lambda * L(s) + (1 - lambda) * L(n). Parameter shapes are
// untouched.
TrainReport fine_tune(AlignmentModel& model, const std::vector<Scene>& d_ft,
                      const SemanticMatrix& semantics, const TrainConfig& cfg);

// ZSD variant of stage 2: a second pass over the base split where every
// seen-positive anchor is routed through the rebalanced path with dynamic p*.
TrainReport zsd_self_tune(AlignmentModel& model, const std::vector<Scene>& d_tr,
                          const SemanticMatrix& semantics, const TrainConfig& cfg);

}  // namespace anyshot
