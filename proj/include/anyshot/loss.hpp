#pragma once

#include <map>
#include <string>
#include <vector>

#include "anyshot/matrix.hpp"

namespace anyshot {

enum class PStarMode { kFixed, kDynamic };

// Hyper-parameters of the rebalanced loss. Fully determines the loss surface.
struct LossConfig {
  double alpha = 0.25;       // positive/negative balance
  double beta = 5.0;         // penalty strength
  double gamma = 2.0;        // focal modulation
  double lambda_mix = 0.1;   // weight of the seen-group term
  PStarMode p_star_mode = PStarMode::kDynamic;
  double p_star_value = 0.5;  // used in fixed mode
  double epsilon = 1e-7;      // probability clamp before logs

  void validate() const;

  // Flat key-value round trip (keys: alpha,beta,gamma,lambda,p_star_mode,
  // p_star_value,epsilon).
  std::map<std::string, std::string> to_kv() const;
  static LossConfig from_kv(const std::map<std::string, std::string>& kv);
};

enum class AnchorGroup { kSeen, kNovel, kBackground };

// One anchor's sigmoid scores over the class slots in play, plus its one-hot
// label (all zeros for background).
struct AnchorPrediction {
  Vector scores;
  std::vector<int> label;  // one-hot, same length as scores
  AnchorGroup group = AnchorGroup::kBackground;

  int positive_slot() const;  // -1 for background
};

// h(p, p*) = log(1 + p* - p). Negative iff p > p*, zero iff p = p*.
double penalty(double p, double p_star);

// max entry of a non-empty score vector.
double dynamic_p_star(const Vector& scores);

// p_t of the rebalanced loss: p / (1 + p* - p)^beta for positive slots,
// 1 - p for negative ones.
double rebalanced_pt(double p, double p_star, double beta, int y);

// max(0, -alpha_t (1 - p_t)^gamma log p_t), alpha_t = alpha for y=1 else
// 1 - alpha. p is clamped to [eps, 1-eps] before logs.
double rebalanced_loss(double p, int y, double p_star, const LossConfig& cfg);

// Standard focal loss, written out independently of the rebalanced path.
double focal_loss(double p, int y, const LossConfig& cfg);

// d rebalanced_loss / dp via direct chain rule; zero inside the clamped
// region. p* is held constant while differentiating.
double loss_gradient(double p, double p_star, const LossConfig& cfg, int y);

// Same derivative as a single factored closed-form expression; kept as an
// independent cross-check of loss_gradient.
double loss_gradient_closed_form(double p, double p_star, const LossConfig& cfg, int y);

// Central difference (L(p+h) - L(p-h)) / 2h of rebalanced_loss.
double finite_diff_gradient(double p, double p_star, const LossConfig& cfg, int y,
                            double h);

// Sum of per-slot losses for one anchor. The positive slot (if any) uses the
// rebalanced path with the given beta; negative slots use the shared 1-p
// path. In dynamic mode p* is the max of the anchor's scores.
double anchor_loss(const AnchorPrediction& pred, const LossConfig& cfg, double beta);

// lambda * L(s) + (1 - lambda) * L(n). L(s) is the mean focal anchor loss
// over seen-positive and background anchors; L(n) is the mean rebalanced
// anchor loss over novel-positive anchors. An empty group contributes 0.
double anchor_group_loss(const std::vector<AnchorPrediction>& preds,
                         const LossConfig& cfg);

struct LossCurvePoint {
  double p;
  double loss;
  double grad;
};

// Loss and gradient for the positive path over a uniform grid of
// p in [eps, 1-eps]; used for plotting.
std::vector<LossCurvePoint> loss_curve(const LossConfig& cfg, double p_star,
                                       std::size_t samples);

// CSV with header "p,loss,grad".
std::string loss_curve_csv(const std::vector<LossCurvePoint>& curve);

}  // namespace anyshot
