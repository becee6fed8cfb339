#pragma once
// Finite-difference verification of the analytic loss gradients.

#include <flare/core.hpp>
#include <flare/losses.hpp>
#include <flare/matrix.hpp>

#include <random>
#include <string>
#include <vector>

namespace flare {

struct GradcheckOptions {
  std::uint64_t seed = 0;
  std::size_t trials = 100;
  double fd_step = 1e-6;
  double fd_tolerance = 1e-6;
  double identity_tolerance = 1e-10;
  // Test hook: scales every analytic gradient by (1 + corrupt) before comparing.
  double corrupt = 0.0;
};

struct GradcheckResult {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed() const noexcept { return max_rel_error <= tolerance; }
};

namespace detail {

/// ||a - b||_inf / max(||a||_inf, ||b||_inf, tiny)
inline double normwise_rel_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  }
  return diff / std::max(scale, 1e-300);
}

struct RandomHead {
  std::vector<double> h;
  Matrix w;
  OneHotLabel y{FlareClass::O};
};

inline RandomHead random_head(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> width(1, 16);
  std::uniform_int_distribution<std::size_t> cls(0, kNumClasses - 1);
  std::uniform_real_distribution<double> hu(-1.0, 1.0);
  std::normal_distribution<double> wn(0.0, 1.0);
  RandomHead r;
  r.h.resize(width(rng));
  for (auto& v : r.h) v = hu(rng);
  r.w = Matrix(kNumClasses, r.h.size());
  for (auto& v : r.w.data()) v = wn(rng);
  r.y = OneHotLabel(class_from_rank(cls(rng)));
  return r;
}

}  // namespace detail

/// d L_BSS / d W against central differences of bss_loss(softmax(W h)).
inline GradcheckResult check_bss_grad_w(const GradcheckOptions& opt) {
  std::mt19937_64 rng(opt.seed);
  GradcheckResult res{"bss_grad_w vs finite differences", 0.0, opt.fd_tolerance};
  for (std::size_t t = 0; t < opt.trials; ++t) {
    auto r = detail::random_head(rng);
    const auto state = HeadState::from(r.h, r.w);
    auto analytic = bss_grad_w(state, r.y).data();
    for (auto& v : analytic) v *= 1.0 + opt.corrupt;
    std::vector<double> numeric(analytic.size());
    Matrix w = r.w;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w.data()[i];
      w.data()[i] = orig + opt.fd_step;
      const double up = bss_loss(r.y, HeadState::from(r.h, w).p);
      w.data()[i] = orig - opt.fd_step;
      const double down = bss_loss(r.y, HeadState::from(r.h, w).p);
      w.data()[i] = orig;
      numeric[i] = (up - down) / (2.0 * opt.fd_step);
    }
    res.max_rel_error = std::max(res.max_rel_error, detail::normwise_rel_error(analytic, numeric));
  }
  return res;
}

/// ib_factor_bss against the entrywise absolute sum of bss_grad_w.
inline GradcheckResult check_ib_factor_identity(const GradcheckOptions& opt) {
  std::mt19937_64 rng(opt.seed + 1);
  GradcheckResult res{"ib_factor_bss == sum |dL_BSS/dW|", 0.0, opt.identity_tolerance};
  for (std::size_t t = 0; t < opt.trials; ++t) {
    auto r = detail::random_head(rng);
    const auto state = HeadState::from(r.h, r.w);
    double abs_sum = 0.0;
    const auto grad = bss_grad_w(state, r.y);
    for (double g : grad.data()) abs_sum += std::abs(g);
    abs_sum *= 1.0 + opt.corrupt;
    if (abs_sum < kInfluenceFloor) continue;
    const double f = ib_factor_bss(state, r.y);
    res.max_rel_error = std::max(res.max_rel_error, std::abs(f - abs_sum) / abs_sum);
  }
  return res;
}

/// flare_loss_grad against central differences of flare_loss in the logits,
/// influence factors frozen, IB terms active.
inline GradcheckResult check_flare_loss_grad(const GradcheckOptions& opt) {
  std::mt19937_64 rng(opt.seed + 2);
  std::uniform_int_distribution<std::size_t> batch_size(1, 8);
  std::uniform_real_distribution<double> gu(0.2, 5.0);
  GradcheckResult res{"flare_loss_grad vs finite differences", 0.0, opt.fd_tolerance};
  for (std::size_t t = 0; t < opt.trials; ++t) {
    const std::size_t n = batch_size(rng);
    std::vector<detail::RandomHead> heads;
    std::vector<Vec4> logits;
    for (std::size_t i = 0; i < n; ++i) {
      heads.push_back(detail::random_head(rng));
      const auto s = HeadState::from(heads.back().h, heads.back().w);
      logits.push_back(s.z);
    }
    const auto gamma = class_weights({static_cast<std::uint64_t>(gu(rng) * 100), static_cast<std::uint64_t>(gu(rng) * 100),
                                      static_cast<std::uint64_t>(gu(rng) * 100), static_cast<std::uint64_t>(gu(rng) * 100)});
    const FlareLossConfig cfg{gamma, kDefaultLambdaBss, true, IbCeMode::Residual};

    auto make_batch = [&](const std::vector<Vec4>& z) {
      std::vector<LossSample> b;
      for (std::size_t i = 0; i < n; ++i) b.push_back({heads[i].h, ProbDist::softmax(z[i]), heads[i].y});
      return b;
    };
    const auto base = make_batch(logits);
    const auto factors = influence_factors(base, cfg.ce_mode);
    const auto grads = flare_loss_grad(base, factors, cfg);

    std::vector<double> analytic, numeric;
    auto z = logits;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < kNumClasses; ++k) {
        analytic.push_back(grads[i][k] * (1.0 + opt.corrupt));
        const double orig = z[i][k];
        z[i][k] = orig + opt.fd_step;
        const double up = flare_loss(make_batch(z), factors, cfg).total;
        z[i][k] = orig - opt.fd_step;
        const double down = flare_loss(make_batch(z), factors, cfg).total;
        z[i][k] = orig;
        numeric.push_back((up - down) / (2.0 * opt.fd_step));
      }
    }
    res.max_rel_error = std::max(res.max_rel_error, detail::normwise_rel_error(analytic, numeric));
  }
  return res;
}

inline std::vector<GradcheckResult> run_gradcheck(const GradcheckOptions& opt) {
  return {check_bss_grad_w(opt), check_ib_factor_identity(opt), check_flare_loss_grad(opt)};
}

}  // namespace flare
