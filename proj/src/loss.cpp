#include "anyshot/loss.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "anyshot/errors.hpp"

namespace anyshot {

namespace {

void check_p(double p) {
  if (!(p > 0.0 && p <= 1.0)) throw DomainError("score p must lie in (0,1]");
}

void check_p_star(double p_star) {
  if (!(p_star > 0.0 && p_star <= 1.0)) throw DomainError("p* must lie in (0,1]");
}

double clamp_p(double p, double eps) {
  return std::min(std::max(p, eps), 1.0 - eps);
}

double alpha_t(const LossConfig& cfg, int y) {
  return y == 1 ? cfg.alpha : 1.0 - cfg.alpha;
}

}  // namespace

void LossConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in (0,1]");
  if (beta < 0.0) throw ConfigError("beta must be >= 0");
  if (gamma < 0.0) throw ConfigError("gamma must be >= 0");
  if (!(lambda_mix >= 0.0 && lambda_mix <= 1.0))
    throw ConfigError("lambda must lie in [0,1]");
  if (p_star_mode == PStarMode::kFixed && !(p_star_value > 0.0 && p_star_value <= 1.0))
    throw ConfigError("fixed p* must lie in (0,1]");
  if (!(epsilon > 0.0 && epsilon <= 1e-3))
    throw ConfigError("epsilon must lie in (0, 1e-3]");
}

std::map<std::string, std::string> LossConfig::to_kv() const {
  auto fmt = [](double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return std::string(buf);
  };
  return {
      {"alpha", fmt(alpha)},
      {"beta", fmt(beta)},
      {"gamma", fmt(gamma)},
      {"lambda", fmt(lambda_mix)},
      {"p_star_mode", p_star_mode == PStarMode::kFixed ? "fixed" : "dynamic"},
      {"p_star_value", fmt(p_star_value)},
      {"epsilon", fmt(epsilon)},
  };
}

LossConfig LossConfig::from_kv(const std::map<std::string, std::string>& kv) {
  LossConfig cfg;
  auto get = [&kv](const std::string& key, double fallback) {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : std::stod(it->second);
  };
  cfg.alpha = get("alpha", cfg.alpha);
  cfg.beta = get("beta", cfg.beta);
  cfg.gamma = get("gamma", cfg.gamma);
  cfg.lambda_mix = get("lambda", cfg.lambda_mix);
  cfg.p_star_value = get("p_star_value", cfg.p_star_value);
  cfg.epsilon = get("epsilon", cfg.epsilon);
  auto it = kv.find("p_star_mode");
  if (it != kv.end()) {
    if (it->second == "fixed") cfg.p_star_mode = PStarMode::kFixed;
    else if (it->second == "dynamic") cfg.p_star_mode = PStarMode::kDynamic;
    else throw ConfigError("p_star_mode must be 'fixed' or 'dynamic'");
  }
  cfg.validate();
  return cfg;
}

int AnchorPrediction::positive_slot() const {
  int slot = -1;
  for (std::size_t i = 0; i < label.size(); ++i) {
    if (label[i] == 1) {
      if (slot >= 0) throw DomainError("anchor label must be one-hot");
      slot = static_cast<int>(i);
    }
  }
  return slot;
}

double penalty(double p, double p_star) {
  check_p(p);
  check_p_star(p_star);
  return std::log(1.0 + p_star - p);
}

double dynamic_p_star(const Vector& scores) {
  if (scores.empty()) throw EmptyInput("dynamic p* needs a non-empty score vector");
  return *std::max_element(scores.begin(), scores.end());
}

double rebalanced_pt(double p, double p_star, double beta, int y) {
  check_p(p);
  check_p_star(p_star);
  if (beta < 0.0) throw DomainError("beta must be >= 0");
  if (y == 1) return p / std::pow(1.0 + p_star - p, beta);
  return 1.0 - p;
}

double rebalanced_loss(double p, int y, double p_star, const LossConfig& cfg) {
  check_p_star(p_star);
  const double pc = clamp_p(p, cfg.epsilon);
  const double at = alpha_t(cfg, y);
  double pt;
  if (y == 1) {
    pt = pc / std::pow(1.0 + p_star - pc, cfg.beta);
    // p_t >= 1 means log p_t >= 0: the raw value is non-positive and the
    // loss is clamped at zero. (1-p_t)^gamma is not evaluated there.
    if (pt >= 1.0) return 0.0;
  } else {
    pt = 1.0 - pc;
  }
  const double value = -at * std::pow(1.0 - pt, cfg.gamma) * std::log(pt);
  if (!std::isfinite(value)) throw NumericalError("rebalanced loss is non-finite");
  return std::max(0.0, value);
}

double focal_loss(double p, int y, const LossConfig& cfg) {
  const double pc = clamp_p(p, cfg.epsilon);
  const double pt = y == 1 ? pc : 1.0 - pc;
  const double value = -alpha_t(cfg, y) * std::pow(1.0 - pt, cfg.gamma) * std::log(pt);
  if (!std::isfinite(value)) throw NumericalError("focal loss is non-finite");
  return value;
}

double loss_gradient(double p, double p_star, const LossConfig& cfg, int y) {
  check_p_star(p_star);
  const double pc = clamp_p(p, cfg.epsilon);
  const double at = alpha_t(cfg, y);
  double grad;
  if (y == 1) {
    const double u = 1.0 + p_star - pc;
    const double t = pc / std::pow(u, cfg.beta);
    if (t >= 1.0) return 0.0;  // clamped region, loss is flat zero
    // t' = (u + beta p) / u^(beta+1)
    const double tp = (u + cfg.beta * pc) / std::pow(u, cfg.beta + 1.0);
    const double one_mt = 1.0 - t;
    double bracket = std::pow(one_mt, cfg.gamma) / t;
    if (cfg.gamma != 0.0)
      bracket -= cfg.gamma * std::pow(one_mt, cfg.gamma - 1.0) * std::log(t);
    grad = -at * tp * bracket;
  } else {
    // L = -alpha_t p^gamma log(1-p)
    const double log1mp = std::log(1.0 - pc);
    grad = at * std::pow(pc, cfg.gamma) / (1.0 - pc);
    if (cfg.gamma != 0.0)
      grad -= at * cfg.gamma * std::pow(pc, cfg.gamma - 1.0) * log1mp;
  }
  if (!std::isfinite(grad)) throw NumericalError("loss gradient is non-finite");
  return grad;
}

double loss_gradient_closed_form(double p, double p_star, const LossConfig& cfg, int y) {
  check_p_star(p_star);
  const double pc = clamp_p(p, cfg.epsilon);
  const double at = alpha_t(cfg, y);
  const double g = cfg.gamma;
  const double b = cfg.beta;
  if (y == 1) {
    const double u = 1.0 - pc + p_star;
    const double ub = std::pow(u, b);
    const double t = pc / ub;
    if (t >= 1.0) return 0.0;
    const double active = at * std::pow(1.0 - t, g) * (b * std::log(u) - std::log(pc));
    if (!(active > 0.0)) return 0.0;
    const double numer = at * ((b - 1.0) * pc + p_star + 1.0) * std::pow(1.0 - t, g) *
                         (g * pc * std::log(pc) +
                          (1.0 - b * g * std::log(u)) * pc - ub);
    const double denom = pc * (pc - p_star - 1.0) * (pc - ub);
    const double grad = numer / denom;
    if (!std::isfinite(grad)) throw NumericalError("closed-form gradient is non-finite");
    return grad;
  }
  const double active = at * std::pow(pc, g) * std::log(1.0 - pc);
  if (!(active < 0.0)) return 0.0;
  double grad = at * std::pow(pc, g) / (1.0 - pc);
  if (g != 0.0) grad -= at * g * std::log(1.0 - pc) * std::pow(pc, g - 1.0);
  if (!std::isfinite(grad)) throw NumericalError("closed-form gradient is non-finite");
  return grad;
}

double finite_diff_gradient(double p, double p_star, const LossConfig& cfg, int y,
                            double h) {
  if (h <= 0.0) throw DomainError("finite difference step must be positive");
  if (p + h == p) throw DomainError("finite difference step underflows");
  if (p - h < cfg.epsilon || p + h > 1.0 - cfg.epsilon)
    throw DomainError("p +/- h must stay inside the clamp interval");
  const double lo = rebalanced_loss(p - h, y, p_star, cfg);
  const double hi = rebalanced_loss(p + h, y, p_star, cfg);
  return (hi - lo) / (2.0 * h);
}

double anchor_loss(const AnchorPrediction& pred, const LossConfig& cfg, double beta) {
  if (pred.scores.size() != pred.label.size())
    throw DimensionError("anchor scores/label length mismatch");
  if (pred.scores.empty()) return 0.0;
  pred.positive_slot();  // enforces the one-hot invariant
  const double p_star = cfg.p_star_mode == PStarMode::kDynamic
                            ? dynamic_p_star(pred.scores)
                            : cfg.p_star_value;
  LossConfig slot_cfg = cfg;
  slot_cfg.beta = beta;
  double total = 0.0;
  for (std::size_t i = 0; i < pred.scores.size(); ++i)
    total += rebalanced_loss(pred.scores[i], pred.label[i], p_star, slot_cfg);
  return total;
}

double anchor_group_loss(const std::vector<AnchorPrediction>& preds,
                         const LossConfig& cfg) {
  double seen_sum = 0.0, novel_sum = 0.0;
  std::size_t seen_n = 0, novel_n = 0;
  for (const auto& pred : preds) {
    if (pred.group == AnchorGroup::kNovel) {
      novel_sum += anchor_loss(pred, cfg, cfg.beta);
      ++novel_n;
    } else {
      seen_sum += anchor_loss(pred, cfg, 0.0);
      ++seen_n;
    }
  }
  const double seen_mean = seen_n ? seen_sum / static_cast<double>(seen_n) : 0.0;
  const double novel_mean = novel_n ? novel_sum / static_cast<double>(novel_n) : 0.0;
  return cfg.lambda_mix * seen_mean + (1.0 - cfg.lambda_mix) * novel_mean;
}

std::vector<LossCurvePoint> loss_curve(const LossConfig& cfg, double p_star,
                                       std::size_t samples) {
  if (samples < 2) throw DomainError("loss curve needs at least two samples");
  std::vector<LossCurvePoint> out;
  out.reserve(samples);
  const double lo = cfg.epsilon;
  const double hi = 1.0 - cfg.epsilon;
  for (std::size_t i = 0; i < samples; ++i) {
    const double p = lo + (hi - lo) * static_cast<double>(i) /
                              static_cast<double>(samples - 1);
    out.push_back({p, rebalanced_loss(p, 1, p_star, cfg),
                   loss_gradient(p, p_star, cfg, 1)});
  }
  return out;
}

std::string loss_curve_csv(const std::vector<LossCurvePoint>& curve) {
  std::ostringstream os;
  os << "p,loss,grad\n";
  char buf[128];
  for (const auto& pt : curve) {
    std::snprintf(buf, sizeof(buf), "%.9f,%.9f,%.9f\n", pt.p, pt.loss, pt.grad);
    os << buf;
  }
  return os.str();
}

}  // namespace anyshot
