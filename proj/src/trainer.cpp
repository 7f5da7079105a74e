#include "anyshot/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>

#include <json.hpp>

#include "anyshot/errors.hpp"
#include "anyshot/rng.hpp"

namespace anyshot {

void TrainConfig::validate() const {
  if (epochs_base < 1 || epochs_ft < 1) throw ConfigError("epochs must be >= 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be >= 0");
  if (batch_scenes < 1) throw ConfigError("batch_scenes must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw ConfigError("adam betas must lie in [0,1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam eps must be > 0");
  loss.validate();
}

void AdamState::step(std::vector<double>& params, const std::vector<double>& grad,
                     const TrainConfig& cfg) {
  if (params.size() != grad.size() || params.size() != m_.size())
    throw DimensionError("adam: size mismatch");
  ++t_;
  const double corr1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(t_));
  const double corr2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = cfg.adam_beta1 * m_[i] + (1.0 - cfg.adam_beta1) * grad[i];
    v_[i] = cfg.adam_beta2 * v_[i] + (1.0 - cfg.adam_beta2) * grad[i] * grad[i];
    const double mhat = m_[i] / corr1;
    const double vhat = v_[i] / corr2;
    params[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
  }
}

std::string parameter_checksum(const AlignmentModel& model) {
  // FNV-1a over the raw parameter bytes.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const std::vector<double>& data) {
    for (double x : data) {
      std::uint64_t bits;
      std::memcpy(&bits, &x, sizeof(bits));
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xffULL;
        h *= 0x100000001b3ULL;
      }
    }
  };
  mix(model.u.storage());
  mix(model.metric.metric.storage());
  mix(model.vocab.atoms().storage());
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string TrainReport::to_json() const {
  nlohmann::ordered_json j;
  j["epoch_mean_loss"] = epoch_mean_loss;
  j["param_checksum"] = param_checksum;
  j["wall_seconds"] = wall_seconds;
  return j.dump(2) + "\n";
}

namespace {

struct AnchorEntry {
  std::size_t scene = 0;
  std::size_t anchor = 0;
  int positive_slot = -1;  // index within the scored class subset, -1 for none
  AnchorGroup group = AnchorGroup::kBackground;
};

// Matches precomputed once per scene; ignore anchors are dropped here.
std::vector<std::vector<AnchorEntry>> collect_entries(
    const std::vector<Scene>& scenes, const SemanticMatrix& semantics,
    const std::vector<std::size_t>& class_ids, bool positives_as_novel) {
  std::vector<int> slot_of_class(semantics.total(), -1);
  for (std::size_t i = 0; i < class_ids.size(); ++i)
    slot_of_class[class_ids[i]] = static_cast<int>(i);
  std::vector<std::vector<AnchorEntry>> out(scenes.size());
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const auto matches = match_anchors(scenes[s].anchor_geometry, scenes[s].boxes,
                                       kPositiveIou, kNegativeIou);
    for (std::size_t a = 0; a < matches.size(); ++a) {
      const auto& m = matches[a];
      if (m.kind == MatchKind::kIgnore) continue;
      AnchorEntry entry{s, a, -1, AnchorGroup::kBackground};
      if (m.kind == MatchKind::kPositive) {
        const int slot = slot_of_class[static_cast<std::size_t>(m.class_id)];
        if (slot < 0) continue;  // class not scored in this stage
        entry.positive_slot = slot;
        const bool novel =
            semantics.group_of(static_cast<std::size_t>(m.class_id)) !=
            ClassGroup::kSeen;
        entry.group = (novel || positives_as_novel) ? AnchorGroup::kNovel
                                                    : AnchorGroup::kSeen;
      }
      out[s].push_back(entry);
    }
  }
  return out;
}

enum class StageLoss { kPooledFocal, kGroupMix };

struct EpochStats {
  double loss_sum = 0.0;
  std::size_t batches = 0;
};

TrainReport run_training(AlignmentModel& model, const std::vector<Scene>& scenes,
                         const SemanticMatrix& semantics,
                         const std::vector<std::size_t>& class_ids,
                         const TrainConfig& cfg, std::size_t epochs,
                         StageLoss stage, bool positives_as_novel,
                         bool force_dynamic_p_star) {
  const auto start = std::chrono::steady_clock::now();
  if (scenes.empty()) throw ConfigError("training split is empty");
  if (class_ids.empty()) throw ConfigError("training needs a non-empty class subset");

  LossConfig loss_cfg = cfg.loss;
  if (force_dynamic_p_star) loss_cfg.p_star_mode = PStarMode::kDynamic;

  const auto entries = collect_entries(scenes, semantics, class_ids, positives_as_novel);
  const bool trainable = model.semantics_mode == SemanticsMode::kTrainable;

  AdamState adam_u(model.u.size());
  AdamState adam_m(model.metric.metric.size());
  Rng rng(cfg.seed ^ 0x7261696e5f726e67ULL);

  std::vector<std::size_t> order(scenes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainReport report;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    EpochStats stats;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_scenes) {
      const std::size_t end = std::min(begin + cfg.batch_scenes, order.size());

      // Group sizes for this batch.
      std::size_t n_pos = 0, n_seen = 0, n_novel = 0;
      for (std::size_t i = begin; i < end; ++i)
        for (const auto& e : entries[order[i]]) {
          if (e.positive_slot >= 0) ++n_pos;
          if (e.group == AnchorGroup::kNovel) ++n_novel;
          else ++n_seen;  // seen positives and background
        }

      const Matrix prototypes = class_prototypes(model, semantics, class_ids);
      Matrix grad_u(model.u.rows(), model.u.cols());
      Matrix grad_m(model.metric.metric.rows(), model.metric.metric.cols());
      double batch_loss = 0.0;

      for (std::size_t i = begin; i < end; ++i) {
        const Scene& scene = scenes[order[i]];
        for (const auto& e : entries[order[i]]) {
          const Vector scores =
              score_with_prototypes(scene.anchor_features[e.anchor], model, prototypes);
          double weight;
          double slot_beta;
          if (stage == StageLoss::kPooledFocal) {
            weight = 1.0 / static_cast<double>(std::max<std::size_t>(n_pos, 1));
            slot_beta = 0.0;
          } else if (e.group == AnchorGroup::kNovel) {
            weight = (1.0 - loss_cfg.lambda_mix) / static_cast<double>(n_novel);
            slot_beta = loss_cfg.beta;
          } else {
            weight = loss_cfg.lambda_mix / static_cast<double>(n_seen);
            slot_beta = 0.0;
          }
          if (weight == 0.0) continue;
          const double p_star = loss_cfg.p_star_mode == PStarMode::kDynamic
                                    ? dynamic_p_star(scores)
                                    : loss_cfg.p_star_value;
          LossConfig slot_cfg = loss_cfg;
          Vector upstream(scores.size(), 0.0);
          for (std::size_t c = 0; c < scores.size(); ++c) {
            const int y = e.positive_slot == static_cast<int>(c) ? 1 : 0;
            slot_cfg.beta = y == 1 ? slot_beta : 0.0;
            batch_loss += weight * rebalanced_loss(scores[c], y, p_star, slot_cfg);
            upstream[c] = weight * loss_gradient(scores[c], p_star, slot_cfg, y);
          }
          accumulate_score_gradients(scene.anchor_features[e.anchor], model,
                                     semantics, class_ids, prototypes, upstream,
                                     grad_u, grad_m);
        }
      }

      if (!std::isfinite(batch_loss))
        throw TrainingDiverged("non-finite batch loss");
      adam_u.step(model.u.storage(), grad_u.storage(), cfg);
      if (trainable) adam_m.step(model.metric.metric.storage(), grad_m.storage(), cfg);
      stats.loss_sum += batch_loss;
      ++stats.batches;
    }
    model.check_finite();
    report.epoch_mean_loss.push_back(stats.loss_sum /
                                     static_cast<double>(stats.batches));
  }
  report.param_checksum = parameter_checksum(model);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace

TrainReport train_base(const std::vector<Scene>& d_tr, AlignmentModel& model,
                       const SemanticMatrix& semantics, const TrainConfig& cfg) {
  cfg.validate();
  return run_training(model, d_tr, semantics, semantics.seen_ids(), cfg,
                      cfg.epochs_base, StageLoss::kPooledFocal,
                      /*positives_as_novel=*/false,
                      /*force_dynamic_p_star=*/false);
}

TrainReport fine_tune(AlignmentModel& model, const std::vector<Scene>& d_ft,
                      const SemanticMatrix& semantics, const TrainConfig& cfg) {
  cfg.validate();
  if (semantics.few_shot_count() == 0)
    throw ConfigError("fine_tune requires few-shot classes; use zsd_self_tune");
  const StageLoss stage = cfg.ft_aggregation == FinetuneAggregation::kPooledFocal
                              ? StageLoss::kPooledFocal
                              : StageLoss::kGroupMix;
  return run_training(model, d_ft, semantics, semantics.all_ids(), cfg,
                      cfg.epochs_ft, stage, /*positives_as_novel=*/false,
                      /*force_dynamic_p_star=*/false);
}

TrainReport zsd_self_tune(AlignmentModel& model, const std::vector<Scene>& d_tr,
                          const SemanticMatrix& semantics, const TrainConfig& cfg) {
  cfg.validate();
  if (semantics.few_shot_count() != 0)
    throw ConfigError("zsd_self_tune applies only when no few-shot classes exist");
  return run_training(model, d_tr, semantics, semantics.seen_ids(), cfg,
                      cfg.epochs_ft, StageLoss::kGroupMix,
                      /*positives_as_novel=*/true,
                      /*force_dynamic_p_star=*/true);
}

}  // namespace anyshot
