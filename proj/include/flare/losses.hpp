#pragma once
// FLARE loss family for a softmax head p = softmax(W h): weighted and
// influence-balanced cross-entropy and Brier losses, their gradients, and the
// composite loss with its warm-up switch.
//
// The generic routines take spans so they work for any class count; the
// HeadState overloads fix it to the four flare classes.

#include <flare/core.hpp>
#include <flare/matrix.hpp>

#include <cmath>
#include <span>
#include <vector>

namespace flare {

inline constexpr double kProbFloor = 1e-12;
inline constexpr double kInfluenceFloor = 1e-8;
inline constexpr double kDefaultLambdaBss = 3.0;

/// How the cross-entropy influence factor is formed.
enum class IbCeMode {
  Residual,  // ||p - y||_1 ||h||_1
  Literal,   // ||p||_1 ||h||_1, which is ||h||_1 for a softmax output
};

struct HeadState {
  std::vector<double> h;  // final hidden activations, length L
  Matrix w;               // K x L
  Vec4 z{};               // logits
  ProbDist p;

  static HeadState from(std::vector<double> hidden, Matrix weights) {
    if (weights.rows() != kNumClasses || weights.cols() != hidden.size())
      fail(ErrorKind::InvalidArgument, "head weight shape does not match hidden width");
    HeadState s;
    const auto logits = weights.apply(hidden);
    std::copy(logits.begin(), logits.end(), s.z.begin());
    s.p = ProbDist::softmax(s.z);
    s.h = std::move(hidden);
    s.w = std::move(weights);
    return s;
  }
};

inline double l1_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return s;
}

inline std::vector<double> residual(std::span<const double> p, std::span<const double> y) {
  if (p.size() != y.size()) fail(ErrorKind::InvalidArgument, "probability/label size mismatch");
  std::vector<double> d(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) d[k] = p[k] - y[k];
  return d;
}

inline double ce_loss(std::span<const double> y, std::span<const double> p) {
  double loss = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k)
    if (y[k] != 0.0) loss -= y[k] * std::log(std::max(p[k], kProbFloor));
  return loss;
}

inline double bss_loss(std::span<const double> y, std::span<const double> p) {
  double loss = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double d = p[k] - y[k];
    loss += d * d;
  }
  return loss;
}

/// d L_BSS / d z_k = 2 p_k (delta_k - delta . p)
inline std::vector<double> bss_grad_logits(std::span<const double> p, std::span<const double> y) {
  const auto d = residual(p, y);
  double dp = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) dp += d[j] * p[j];
  std::vector<double> g(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) g[k] = 2.0 * p[k] * (d[k] - dp);
  return g;
}

inline Matrix bss_grad_w(std::span<const double> h, std::span<const double> p, std::span<const double> y) {
  const auto gz = bss_grad_logits(p, y);
  Matrix g(p.size(), h.size());
  for (std::size_t k = 0; k < p.size(); ++k)
    for (std::size_t l = 0; l < h.size(); ++l) g(k, l) = gz[k] * h[l];
  return g;
}

/// 2 ||p (.) (delta - 1 (delta . p))||_1 ||h||_1, floored at kInfluenceFloor.
inline double ib_factor_bss(std::span<const double> h, std::span<const double> p, std::span<const double> y) {
  const double f = l1_norm(bss_grad_logits(p, y)) * l1_norm(h);
  return std::max(f, kInfluenceFloor);
}

inline double ib_factor_ce(std::span<const double> h, std::span<const double> p, std::span<const double> y,
                           IbCeMode mode = IbCeMode::Residual) {
  const double pn = mode == IbCeMode::Residual ? l1_norm(residual(p, y)) : l1_norm(p);
  return std::max(pn * l1_norm(h), kInfluenceFloor);
}

inline double ce_loss(const OneHotLabel& y, const ProbDist& p) { return ce_loss(y.values(), p.span()); }
inline double bss_loss(const OneHotLabel& y, const ProbDist& p) { return bss_loss(y.values(), p.span()); }

inline Matrix bss_grad_w(const HeadState& s, const OneHotLabel& y) { return bss_grad_w(s.h, s.p.span(), y.values()); }
inline double ib_factor_bss(const HeadState& s, const OneHotLabel& y) {
  return ib_factor_bss(s.h, s.p.span(), y.values());
}
inline double ib_factor_ce(const HeadState& s, const OneHotLabel& y, IbCeMode mode = IbCeMode::Residual) {
  return ib_factor_ce(s.h, s.p.span(), y.values(), mode);
}

/// What the composite loss needs from one sample: hidden activations, the
/// head's output and the label. The hidden span must outlive the call.
struct LossSample {
  std::span<const double> h;
  ProbDist p;
  OneHotLabel y;
};

inline LossSample as_loss_sample(const HeadState& s, const OneHotLabel& y) { return {s.h, s.p, y}; }

struct InfluenceFactors {
  double ce = 1.0;
  double bss = 1.0;
};

inline InfluenceFactors influence_factors(const LossSample& s, IbCeMode mode = IbCeMode::Residual) {
  const auto y = s.y.values();
  return {ib_factor_ce(s.h, s.p.span(), y, mode), ib_factor_bss(s.h, s.p.span(), y)};
}

struct LossBreakdown {
  double wce = 0.0;
  double ib_ce = 0.0;
  double wbss = 0.0;
  double ib_bss = 0.0;
  double total = 0.0;
  bool ib_active = false;
};

struct FlareLossConfig {
  ClassWeights gamma = ClassWeights::uniform();
  double lambda_bss = kDefaultLambdaBss;
  bool ib_active = true;
  IbCeMode ce_mode = IbCeMode::Residual;
};

namespace detail {
inline void check_batch(std::size_t n, double lambda_bss) {
  if (n == 0) fail(ErrorKind::InvalidArgument, "empty batch");
  if (!(lambda_bss >= 0.0)) fail(ErrorKind::InvalidArgument, "lambda_bss must be non-negative");
}
}  // namespace detail

/// Composite loss with caller-supplied (frozen) influence factors.
inline LossBreakdown flare_loss(std::span<const LossSample> batch, std::span<const InfluenceFactors> factors,
                                const FlareLossConfig& cfg) {
  detail::check_batch(batch.size(), cfg.lambda_bss);
  if (factors.size() != batch.size()) fail(ErrorKind::InvalidArgument, "one influence factor pair per sample");
  LossBreakdown out;
  out.ib_active = cfg.ib_active;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& s = batch[i];
    const double g = cfg.gamma[s.y.cls()];
    const double ce = ce_loss(s.y, s.p);
    const double bss = bss_loss(s.y, s.p);
    out.wce += g * ce;
    out.wbss += g * bss;
    if (cfg.ib_active) {
      out.ib_ce += g * ce / factors[i].ce;
      out.ib_bss += g * bss / factors[i].bss;
    }
  }
  const double n = static_cast<double>(batch.size());
  out.wce /= n;
  out.wbss /= n;
  out.ib_ce /= n;
  out.ib_bss /= n;
  out.total = (out.wce + out.ib_ce) + cfg.lambda_bss * (out.wbss + out.ib_bss);
  return out;
}

inline std::vector<InfluenceFactors> influence_factors(std::span<const LossSample> batch, IbCeMode mode) {
  std::vector<InfluenceFactors> f;
  f.reserve(batch.size());
  for (const auto& s : batch) f.push_back(influence_factors(s, mode));
  return f;
}

inline LossBreakdown flare_loss(std::span<const LossSample> batch, const FlareLossConfig& cfg) {
  detail::check_batch(batch.size(), cfg.lambda_bss);
  return flare_loss(batch, influence_factors(batch, cfg.ce_mode), cfg);
}

/// Gradient of the composite loss with respect to each sample's logits, with
/// the influence factors held constant.
inline std::vector<Vec4> flare_loss_grad(std::span<const LossSample> batch, std::span<const InfluenceFactors> factors,
                                         const FlareLossConfig& cfg) {
  detail::check_batch(batch.size(), cfg.lambda_bss);
  if (factors.size() != batch.size()) fail(ErrorKind::InvalidArgument, "one influence factor pair per sample");
  const double n = static_cast<double>(batch.size());
  std::vector<Vec4> grads(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& s = batch[i];
    const auto y = s.y.values();
    const double g = cfg.gamma[s.y.cls()] / n;
    double ce_scale = g;
    double bss_scale = cfg.lambda_bss * g;
    if (cfg.ib_active) {
      ce_scale += g / factors[i].ce;
      bss_scale += cfg.lambda_bss * g / factors[i].bss;
    }
    const auto gb = bss_grad_logits(s.p.span(), y);
    for (std::size_t k = 0; k < kNumClasses; ++k) grads[i][k] = ce_scale * (s.p[k] - y[k]) + bss_scale * gb[k];
  }
  return grads;
}

inline std::vector<Vec4> flare_loss_grad(std::span<const LossSample> batch, const FlareLossConfig& cfg) {
  detail::check_batch(batch.size(), cfg.lambda_bss);
  return flare_loss_grad(batch, influence_factors(batch, cfg.ce_mode), cfg);
}

}  // namespace flare
