#pragma once
// Desk-scale classifier: tanh MLP over sample features, the solar-cycle
// phase appended to the final hidden layer, and a bias-free softmax head.
// Trained with AdamW on the FLARE loss; the checkpoint with the highest
// validation GMGS is kept.

#include <flare/core.hpp>
#include <flare/cycle.hpp>
#include <flare/losses.hpp>
#include <flare/matrix.hpp>
#include <flare/metrics.hpp>
#include <flare/pipeline.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace flare {

enum class LossKind {
  Flare,         // weighted CE + IB CE + lambda (weighted BSS + IB BSS)
  CrossEntropy,  // plain unweighted CE baseline
};

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  double learning_rate = 4.0e-5;
  double weight_decay = 5.0e-2;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double adam_epsilon = 1e-8;
  double lambda_bss = kDefaultLambdaBss;
  std::size_t warmup_epochs = 5;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden_widths{64, 64};
  bool use_cycle_embedding = true;
  LossKind loss = LossKind::Flare;
  IbCeMode ib_ce_mode = IbCeMode::Residual;
  // Finite-difference check of the parameter gradient on the first batch.
  bool verify_gradients = false;
  double verify_tolerance = 1e-5;
  CycleConfig cycle{};

  void validate() const {
    if (epochs == 0) fail(ErrorKind::InvalidArgument, "epochs must be positive");
    if (batch_size == 0) fail(ErrorKind::InvalidArgument, "batch_size must be positive");
    if (warmup_epochs > epochs) fail(ErrorKind::InvalidArgument, "warmup_epochs must not exceed epochs");
    if (!(learning_rate > 0.0) || !(weight_decay >= 0.0) || !(adam_epsilon > 0.0))
      fail(ErrorKind::InvalidArgument, "learning rate and epsilon must be positive, weight decay non-negative");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
      fail(ErrorKind::InvalidArgument, "AdamW betas must lie in [0,1)");
    if (!(lambda_bss >= 0.0)) fail(ErrorKind::InvalidArgument, "lambda_bss must be non-negative");
    if (hidden_widths.empty()) fail(ErrorKind::InvalidArgument, "at least one hidden layer is required");
    for (auto w : hidden_widths)
      if (w == 0) fail(ErrorKind::InvalidArgument, "hidden widths must be positive");
    cycle.validate();
  }
};

/// Flat parameter tensors. Hidden layer i owns tensors 2i (weights, out x in)
/// and 2i+1 (bias); the last tensor is the 4 x (width + 1) head, whose last
/// column multiplies the cycle phase.
struct Params {
  struct Shape {
    std::size_t rows = 0;
    std::size_t cols = 0;
  };
  std::vector<Shape> shapes;
  std::vector<std::vector<double>> tensors;

  std::size_t hidden_layers() const noexcept { return (tensors.size() - 1) / 2; }
  std::size_t input_dim() const noexcept { return shapes.front().cols; }
  std::size_t head_width() const noexcept { return shapes.back().cols; }

  Params zeros_like() const {
    Params p;
    p.shapes = shapes;
    for (const auto& t : tensors) p.tensors.emplace_back(t.size(), 0.0);
    return p;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
  }

  friend bool operator==(const Params& a, const Params& b) {
    if (a.tensors != b.tensors || a.shapes.size() != b.shapes.size()) return false;
    for (std::size_t i = 0; i < a.shapes.size(); ++i)
      if (a.shapes[i].rows != b.shapes[i].rows || a.shapes[i].cols != b.shapes[i].cols) return false;
    return true;
  }
};

inline Params init_params(std::size_t input_dim, std::span<const std::size_t> widths, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Params p;
  std::size_t fan_in = input_dim;
  auto add_uniform = [&](std::size_t rows, std::size_t cols) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    std::uniform_real_distribution<double> u(-bound, bound);
    std::vector<double> t(rows * cols);
    for (auto& v : t) v = u(rng);
    p.shapes.push_back({rows, cols});
    p.tensors.push_back(std::move(t));
  };
  for (auto w : widths) {
    add_uniform(w, fan_in);
    p.shapes.push_back({w, 1});
    p.tensors.emplace_back(w, 0.0);
    fan_in = w;
  }
  add_uniform(kNumClasses, fan_in + 1);
  return p;
}

/// Activations kept for the backward pass.
struct ForwardCache {
  std::vector<std::vector<double>> activations;  // input, then each hidden layer output
  std::vector<double> h;                         // final hidden + phase
  Vec4 z{};
  ProbDist p;
};

inline ForwardCache forward_cached(std::span<const double> features, double phase, const Params& params) {
  if (features.size() != params.input_dim())
    fail(ErrorKind::InvalidArgument, "feature dimension " + std::to_string(features.size()) +
                                         " does not match network input " + std::to_string(params.input_dim()));
  ForwardCache c;
  c.activations.emplace_back(features.begin(), features.end());
  for (std::size_t layer = 0; layer < params.hidden_layers(); ++layer) {
    const auto& shape = params.shapes[2 * layer];
    const auto& w = params.tensors[2 * layer];
    const auto& b = params.tensors[2 * layer + 1];
    const auto& in = c.activations.back();
    std::vector<double> out(shape.rows);
    for (std::size_t r = 0; r < shape.rows; ++r) {
      double acc = b[r];
      const double* wr = w.data() + r * shape.cols;
      for (std::size_t k = 0; k < shape.cols; ++k) acc += wr[k] * in[k];
      out[r] = std::tanh(acc);
    }
    c.activations.push_back(std::move(out));
  }
  c.h = c.activations.back();
  c.h.push_back(phase);
  const auto& head = params.tensors.back();
  const std::size_t width = params.head_width();
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    double acc = 0.0;
    for (std::size_t l = 0; l < width; ++l) acc += head[k * width + l] * c.h[l];
    c.z[k] = acc;
  }
  c.p = ProbDist::softmax(c.z);
  return c;
}

inline double sample_phase(const Sample& s, const TrainConfig& cfg) {
  return cfg.use_cycle_embedding ? cycle_phase(s.timestamp, cfg.cycle) : 0.0;
}

inline HeadState forward(const Sample& s, const Params& params, const TrainConfig& cfg) {
  auto c = forward_cached(s.features, sample_phase(s, cfg), params);
  Matrix head(kNumClasses, params.head_width());
  head.data() = params.tensors.back();
  HeadState st;
  st.h = std::move(c.h);
  st.w = std::move(head);
  st.z = c.z;
  st.p = c.p;
  return st;
}

/// Accumulates d loss / d params given d loss / d logits for one sample.
inline void backward(const ForwardCache& c, const Vec4& dz, const Params& params, Params& grads) {
  const std::size_t width = params.head_width();
  auto& ghead = grads.tensors.back();
  const auto& head = params.tensors.back();
  std::vector<double> da(width - 1, 0.0);  // phase input has no upstream parameters
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    for (std::size_t l = 0; l < width; ++l) ghead[k * width + l] += dz[k] * c.h[l];
    for (std::size_t l = 0; l + 1 < width; ++l) da[l] += head[k * width + l] * dz[k];
  }
  for (std::size_t layer = params.hidden_layers(); layer-- > 0;) {
    const auto& shape = params.shapes[2 * layer];
    const auto& w = params.tensors[2 * layer];
    auto& gw = grads.tensors[2 * layer];
    auto& gb = grads.tensors[2 * layer + 1];
    const auto& out = c.activations[layer + 1];
    const auto& in = c.activations[layer];
    std::vector<double> din(shape.cols, 0.0);
    for (std::size_t r = 0; r < shape.rows; ++r) {
      const double dpre = da[r] * (1.0 - out[r] * out[r]);
      gb[r] += dpre;
      double* gwr = gw.data() + r * shape.cols;
      const double* wr = w.data() + r * shape.cols;
      for (std::size_t k = 0; k < shape.cols; ++k) {
        gwr[k] += dpre * in[k];
        din[k] += wr[k] * dpre;
      }
    }
    da = std::move(din);
  }
}

struct AdamState {
  Params m;
  Params v;
};

inline AdamState adam_init(const Params& p) { return {p.zeros_like(), p.zeros_like()}; }

/// Decoupled weight decay: theta <- theta (1 - lr wd) - lr m_hat / (sqrt(v_hat) + eps).
inline void adamw_step(Params& params, const Params& grads, AdamState& state, const TrainConfig& cfg,
                       std::size_t step_index) {
  if (step_index == 0) fail(ErrorKind::InvalidArgument, "AdamW step index starts at 1");
  if (grads.tensors.size() != params.tensors.size()) fail(ErrorKind::InvalidArgument, "gradient shape mismatch");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_index));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_index));
  const double decay = 1.0 - cfg.learning_rate * cfg.weight_decay;
  for (std::size_t t = 0; t < params.tensors.size(); ++t) {
    auto& theta = params.tensors[t];
    const auto& g = grads.tensors[t];
    if (g.size() != theta.size()) fail(ErrorKind::InvalidArgument, "gradient shape mismatch");
    auto& m = state.m.tensors[t];
    auto& v = state.v.tensors[t];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      if (!std::isfinite(g[i])) fail(ErrorKind::Numeric, "diverged");
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      theta[i] = theta[i] * decay - cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_epsilon);
    }
  }
}

inline FlareLossConfig loss_config(const TrainConfig& cfg, const ClassWeights& gamma, bool ib_active) {
  if (cfg.loss == LossKind::CrossEntropy) return {ClassWeights::uniform(), 0.0, false, cfg.ib_ce_mode};
  return {gamma, cfg.lambda_bss, ib_active, cfg.ib_ce_mode};
}

struct BatchResult {
  LossBreakdown loss;
  Params grads;
  std::vector<InfluenceFactors> factors;
};

/// Loss and parameter gradient over one batch. When `frozen` is given those
/// influence factors are used instead of ones computed from this pass.
inline BatchResult batch_loss_and_grad(std::span<const Sample* const> batch, const Params& params,
                                       const TrainConfig& cfg, const FlareLossConfig& lcfg,
                                       std::span<const InfluenceFactors> frozen = {}) {
  std::vector<ForwardCache> caches;
  caches.reserve(batch.size());
  for (const Sample* s : batch) caches.push_back(forward_cached(s->features, sample_phase(*s, cfg), params));
  std::vector<LossSample> ls;
  ls.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) ls.push_back({caches[i].h, caches[i].p, OneHotLabel(*batch[i]->label)});

  BatchResult r;
  r.factors = frozen.empty() ? influence_factors(ls, lcfg.ce_mode)
                             : std::vector<InfluenceFactors>(frozen.begin(), frozen.end());
  r.loss = flare_loss(ls, r.factors, lcfg);
  const auto dz = flare_loss_grad(ls, r.factors, lcfg);
  r.grads = params.zeros_like();
  for (std::size_t i = 0; i < batch.size(); ++i) backward(caches[i], dz[i], params, r.grads);
  return r;
}

struct GradientCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Central differences on a strided subset of coordinates with influence
/// factors frozen. Relative error uses a floor of 1e-3 x the largest checked
/// analytic magnitude so near-zero coordinates do not dominate.
inline GradientCheck check_batch_gradient(std::span<const Sample* const> batch, const Params& params,
                                          const TrainConfig& cfg, const FlareLossConfig& lcfg,
                                          std::size_t max_coords = 256, double step = 1e-6) {
  const auto base = batch_loss_and_grad(batch, params, cfg, lcfg);
  const std::size_t total = params.parameter_count();
  const std::size_t stride = std::max<std::size_t>(1, total / max_coords);
  std::vector<std::pair<double, double>> pairs;
  Params probe = params;
  std::size_t flat = 0;
  for (std::size_t t = 0; t < probe.tensors.size(); ++t) {
    for (std::size_t i = 0; i < probe.tensors[t].size(); ++i, ++flat) {
      if (flat % stride != 0) continue;
      const double orig = probe.tensors[t][i];
      probe.tensors[t][i] = orig + step;
      const double up = batch_loss_and_grad(batch, probe, cfg, lcfg, base.factors).loss.total;
      probe.tensors[t][i] = orig - step;
      const double down = batch_loss_and_grad(batch, probe, cfg, lcfg, base.factors).loss.total;
      probe.tensors[t][i] = orig;
      pairs.emplace_back(base.grads.tensors[t][i], (up - down) / (2.0 * step));
    }
  }
  double scale = 0.0;
  for (const auto& [a, n] : pairs) scale = std::max(scale, std::abs(a));
  GradientCheck out;
  out.checked = pairs.size();
  for (const auto& [a, n] : pairs) {
    const double denom = std::max({std::abs(a), std::abs(n), 1e-3 * scale, 1e-12});
    out.max_rel_error = std::max(out.max_rel_error, std::abs(a - n) / denom);
  }
  return out;
}

inline std::vector<ProbDist> predict(std::span<const Sample> samples, const Params& params, const TrainConfig& cfg) {
  std::vector<ProbDist> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(forward_cached(s.features, sample_phase(s, cfg), params).p);
  return out;
}

/// Report for labeled samples using argmax class predictions.
inline MetricReport evaluate_model(std::span<const Sample> samples, const Params& params, const TrainConfig& cfg) {
  const auto probs = predict(samples, params, cfg);
  std::vector<FlareClass> obs, pred;
  obs.reserve(samples.size());
  pred.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!samples[i].label) fail(ErrorKind::Data, "sample '" + samples[i].id + "' has no label");
    obs.push_back(*samples[i].label);
    pred.push_back(probs[i].argmax());
  }
  return evaluate(obs, pred, probs);
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  LossBreakdown loss;     // sample-weighted mean over the epoch's batches
  double val_gmgs = 0.0;
  std::optional<double> val_tss;
  std::optional<double> val_bss;
};

struct Checkpoint {
  std::size_t epoch = 0;
  Params params;
  double val_gmgs = 0.0;
  MetricReport val_report;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochRecord> history;
  std::optional<GradientCheck> gradient_check;
};

/// Index of the largest value, earliest on ties.
inline std::size_t select_best(std::span<const double> scores) {
  if (scores.empty()) fail(ErrorKind::InvalidArgument, "no scores to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

inline std::array<std::uint64_t, kNumClasses> class_counts(std::span<const Sample> samples) {
  std::array<std::uint64_t, kNumClasses> n{};
  for (const auto& s : samples) {
    if (!s.label) fail(ErrorKind::Data, "sample '" + s.id + "' has no label");
    ++n[rank(*s.label)];
  }
  return n;
}

inline std::vector<Sample> slice(std::span<const Sample> samples, const IndexRange& r) {
  return {samples.begin() + static_cast<std::ptrdiff_t>(r.begin), samples.begin() + static_cast<std::ptrdiff_t>(r.end)};
}

inline TrainResult train(std::span<const Sample> samples, const Fold& fold, const TrainConfig& cfg) {
  cfg.validate();
  if (fold.train.end > fold.validation.begin || fold.validation.end > samples.size() || fold.train.empty() ||
      fold.validation.empty())
    fail(ErrorKind::InvalidArgument, "fold ranges do not fit the dataset");
  const auto train_set = slice(samples, fold.train);
  const auto val_set = slice(samples, fold.validation);
  const auto train_counts = class_counts(train_set);
  const auto val_counts = class_counts(val_set);
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    if (train_counts[k] == 0)
      fail(ErrorKind::Data, "degenerate split: no " + std::string(name(class_from_rank(k))) + " samples in training set");
    if (val_counts[k] == 0)
      fail(ErrorKind::Data, "degenerate split: no " + std::string(name(class_from_rank(k))) + " samples in validation set");
  }
  const auto gamma = class_weights(train_counts);
  const std::size_t dim = train_set.front().features.size();

  TrainResult result;
  Params params = init_params(dim, cfg.hidden_widths, cfg.seed);
  AdamState adam = adam_init(params);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;
  std::vector<double> val_scores;

  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const bool ib_active = e >= cfg.warmup_epochs;
    const auto lcfg = loss_config(cfg, gamma, ib_active);
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec;
    rec.epoch = e + 1;
    rec.loss.ib_active = lcfg.ib_active;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const Sample*> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train_set[order[i]]);
      if (cfg.verify_gradients && step == 0) {
        // Check with IB terms on so every loss piece is exercised.
        auto check_cfg = lcfg;
        if (cfg.loss == LossKind::Flare) check_cfg.ib_active = true;
        result.gradient_check = check_batch_gradient(batch, params, cfg, check_cfg);
        if (!(result.gradient_check->max_rel_error <= cfg.verify_tolerance))
          fail(ErrorKind::Numeric, "gradient check failed: max relative error " +
                                       format_real(result.gradient_check->max_rel_error, 10));
      }
      auto br = batch_loss_and_grad(batch, params, cfg, lcfg);
      if (!std::isfinite(br.loss.total)) fail(ErrorKind::Numeric, "diverged");
      adamw_step(params, br.grads, adam, cfg, ++step);
      const double w = static_cast<double>(batch.size()) / static_cast<double>(order.size());
      rec.loss.wce += w * br.loss.wce;
      rec.loss.ib_ce += w * br.loss.ib_ce;
      rec.loss.wbss += w * br.loss.wbss;
      rec.loss.ib_bss += w * br.loss.ib_bss;
      rec.loss.total += w * br.loss.total;
    }
    auto report = evaluate_model(val_set, params, cfg);
    if (!std::isfinite(report.gmgs)) fail(ErrorKind::Numeric, "diverged: non-finite validation GMGS");
    rec.val_gmgs = report.gmgs;
    rec.val_tss = report.tss_ge_m;
    rec.val_bss = report.bss_ge_m;
    val_scores.push_back(report.gmgs);
    if (select_best(val_scores) == e) result.best = {e + 1, params, report.gmgs, std::move(report)};
    result.history.push_back(rec);
  }
  return result;
}

inline std::string format_history(std::span<const EpochRecord> history) {
  std::ostringstream os;
  os << "epoch,wce,ib_ce,wbss,ib_bss,total,val_gmgs,val_tss,val_bss\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_real(*v, 10) : std::string("nan"); };
  for (const auto& r : history) {
    os << r.epoch << ',' << format_real(r.loss.wce, 10) << ',' << format_real(r.loss.ib_ce, 10) << ','
       << format_real(r.loss.wbss, 10) << ',' << format_real(r.loss.ib_bss, 10) << ',' << format_real(r.loss.total, 10)
       << ',' << format_real(r.val_gmgs, 10) << ',' << opt(r.val_tss) << ',' << opt(r.val_bss) << '\n';
  }
  return os.str();
}

// Checkpoint text format, version 1:
//   flare-checkpoint 1
//   config_hash <16 hex digits>
//   epoch <n>
//   val_gmgs <real>
//   tensors <count>
//   then per tensor: "tensor <rows> <cols>" followed by rows lines of cols values.
// Values use shortest round-trip decimal form.
inline std::string format_checkpoint(const Checkpoint& ck, std::string_view config_hash) {
  std::ostringstream os;
  os.precision(17);
  os << "flare-checkpoint 1\n"
     << "config_hash " << config_hash << '\n'
     << "epoch " << ck.epoch << '\n'
     << "val_gmgs " << ck.val_gmgs << '\n'
     << "tensors " << ck.params.tensors.size() << '\n';
  for (std::size_t t = 0; t < ck.params.tensors.size(); ++t) {
    const auto& sh = ck.params.shapes[t];
    os << "tensor " << sh.rows << ' ' << sh.cols << '\n';
    for (std::size_t r = 0; r < sh.rows; ++r) {
      for (std::size_t c = 0; c < sh.cols; ++c) {
        char buf[64];
        const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, ck.params.tensors[t][r * sh.cols + c]);
        os << (c ? " " : "") << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
      }
      os << '\n';
    }
  }
  return os.str();
}

struct LoadedCheckpoint {
  std::string config_hash;
  std::size_t epoch = 0;
  double val_gmgs = 0.0;
  Params params;
};

inline LoadedCheckpoint parse_checkpoint(std::istream& in) {
  auto expect = [&](const std::string& key) {
    std::string got;
    if (!(in >> got) || got != key) fail(ErrorKind::Data, "checkpoint: expected '" + key + "'");
  };
  LoadedCheckpoint ck;
  expect("flare-checkpoint");
  int version = 0;
  if (!(in >> version) || version != 1) fail(ErrorKind::Data, "checkpoint: unsupported version");
  expect("config_hash");
  in >> ck.config_hash;
  expect("epoch");
  in >> ck.epoch;
  expect("val_gmgs");
  in >> ck.val_gmgs;
  expect("tensors");
  std::size_t count = 0;
  in >> count;
  for (std::size_t t = 0; t < count; ++t) {
    expect("tensor");
    Params::Shape sh;
    in >> sh.rows >> sh.cols;
    std::vector<double> values(sh.rows * sh.cols);
    for (auto& v : values) {
      std::string tok;
      in >> tok;
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc{} || ptr != tok.data() + tok.size()) fail(ErrorKind::Data, "checkpoint: bad value '" + tok + "'");
    }
    ck.params.shapes.push_back(sh);
    ck.params.tensors.push_back(std::move(values));
  }
  if (!in) fail(ErrorKind::Data, "checkpoint: truncated");
  if (count < 3 || count % 2 == 0) fail(ErrorKind::Data, "checkpoint: unexpected tensor count");
  return ck;
}

}  // namespace flare
