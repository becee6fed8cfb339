#include <flare/trainer.hpp>

#include <gtest/gtest.h>

#include <sstream>

using namespace flare;

namespace {

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.warmup_epochs = 2;
  cfg.batch_size = 32;
  cfg.learning_rate = 3e-3;
  cfg.hidden_widths = {8, 8};
  cfg.seed = 1;
  return cfg;
}

struct Fixture {
  std::vector<Sample> samples;
  Fold fold;
};

Fixture fixture(std::size_t n = 400, std::uint64_t seed = 2) {
  SyntheticOptions opt;
  opt.stratified = true;
  opt.partial_missing_rate = 0.0;
  opt.excluded_missing_rate = 0.0;
  opt.class_separation = 1.5;
  auto d = gen_synthetic(n, {0.4, 0.3, 0.2, 0.1}, seed, 6, opt);
  Fixture f;
  f.samples = std::move(d.samples);
  f.fold = split_timeseries(f.samples, SplitSpec{1, 0.25, 0.1}).front();
  return f;
}

}  // namespace

TEST(Forward, ZeroHeadGivesUniform) {
  auto p = init_params(5, std::vector<std::size_t>{4}, 3);
  std::fill(p.tensors.back().begin(), p.tensors.back().end(), 0.0);
  Sample s;
  s.features = {1, 2, 3, 4, 5};
  const auto st = forward(s, p, TrainConfig{});
  for (double v : st.p.values()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Forward, ShapesAndDimensionMismatch) {
  const auto p = init_params(5, std::vector<std::size_t>{7, 3}, 3);
  EXPECT_EQ(p.hidden_layers(), 2u);
  EXPECT_EQ(p.head_width(), 4u);
  EXPECT_EQ(p.parameter_count(), 7u * 5 + 7 + 3 * 7 + 3 + 4 * 4);
  Sample s;
  s.features = {1, 2, 3};
  EXPECT_THROW(forward(s, p, TrainConfig{}), Error);
}

TEST(Forward, CycleAblationOnlyChangesPhaseInput) {
  const auto p = init_params(3, std::vector<std::size_t>{4}, 9);
  Sample s;
  s.features = {0.1, -0.2, 0.3};
  s.timestamp = TrainConfig{}.cycle.t_base;
  TrainConfig on, off;
  off.use_cycle_embedding = false;
  const auto a = forward(s, p, on);
  const auto b = forward(s, p, off);
  ASSERT_EQ(a.h.size(), b.h.size());
  for (std::size_t l = 0; l + 1 < a.h.size(); ++l) EXPECT_EQ(a.h[l], b.h[l]);
  EXPECT_DOUBLE_EQ(a.h.back(), -1.0);
  EXPECT_DOUBLE_EQ(b.h.back(), 0.0);
}

TEST(Forward, DeterministicInit) {
  const std::vector<std::size_t> w{8, 8};
  EXPECT_EQ(init_params(4, w, 5), init_params(4, w, 5));
  EXPECT_FALSE(init_params(4, w, 5) == init_params(4, w, 6));
}

namespace {

Params scalar_param(double v) {
  Params p;
  p.shapes.push_back({1, 1});
  p.tensors.push_back({v});
  return p;
}

}  // namespace

TEST(AdamW, DecayOnlyWhenGradientIsZero) {
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.05;
  auto p = scalar_param(2.0);
  auto st = adam_init(p);
  adamw_step(p, scalar_param(0.0), st, cfg, 1);
  EXPECT_DOUBLE_EQ(p.tensors[0][0], 2.0 * (1.0 - 0.1 * 0.05));
}

TEST(AdamW, TwoStepTrace) {
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.05;
  cfg.beta1 = 0.9;
  cfg.beta2 = 0.95;
  cfg.adam_epsilon = 1e-8;
  auto p = scalar_param(1.0);
  auto st = adam_init(p);
  const auto g = scalar_param(0.5);
  // With a constant gradient the bias-corrected moments are exactly g and g^2.
  const double step = 0.1 * 0.5 / (0.5 + 1e-8);
  adamw_step(p, g, st, cfg, 1);
  const double theta1 = 0.995 - step;
  EXPECT_NEAR(p.tensors[0][0], theta1, 1e-15);
  adamw_step(p, g, st, cfg, 2);
  EXPECT_NEAR(p.tensors[0][0], theta1 * 0.995 - step, 1e-15);
}

TEST(AdamW, NonFiniteGradientDiverges) {
  TrainConfig cfg;
  auto p = scalar_param(1.0);
  auto st = adam_init(p);
  try {
    adamw_step(p, scalar_param(std::nan("")), st, cfg, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Numeric);
    EXPECT_STREQ(e.what(), "diverged");
  }
  EXPECT_THROW(adamw_step(p, scalar_param(0.0), st, cfg, 0), Error);
}

TEST(Backward, MatchesFiniteDifferences) {
  const auto f = fixture(120);
  const auto p = init_params(6, std::vector<std::size_t>{5, 4}, 4);
  std::vector<const Sample*> batch;
  for (std::size_t i = 0; i < 16; ++i) batch.push_back(&f.samples[i]);
  const auto gamma = class_weights(class_counts(f.samples));
  TrainConfig cfg;
  for (bool ib : {false, true}) {
    for (auto mode : {IbCeMode::Residual, IbCeMode::Literal}) {
      cfg.ib_ce_mode = mode;
      const auto chk = check_batch_gradient(batch, p, cfg, loss_config(cfg, gamma, ib));
      EXPECT_GT(chk.checked, 50u);
      EXPECT_LT(chk.max_rel_error, 1e-5) << ib;
    }
  }
  cfg.loss = LossKind::CrossEntropy;
  EXPECT_LT(check_batch_gradient(batch, p, cfg, loss_config(cfg, gamma, true)).max_rel_error, 1e-5);
}

TEST(Backward, CrossEntropyBaselineIsUnweighted) {
  TrainConfig cfg;
  cfg.loss = LossKind::CrossEntropy;
  const auto lcfg = loss_config(cfg, ClassWeights::from_values({1, 2, 3, 4}), true);
  EXPECT_FALSE(lcfg.ib_active);
  EXPECT_EQ(lcfg.lambda_bss, 0.0);
  EXPECT_EQ(lcfg.gamma.values(), (Vec4{1, 1, 1, 1}));
}

TEST(SelectBest, EarliestMaximum) {
  const std::vector<double> s{0.1, 0.4, 0.4, 0.3};
  EXPECT_EQ(select_best(s), 1u);
  std::vector<double> t;
  for (double v : s) t.push_back(std::exp(3.0 * v) - 7.0);
  EXPECT_EQ(select_best(t), 1u);
  EXPECT_THROW(select_best(std::vector<double>{}), Error);
}

TEST(Train, WarmupCoveringAllEpochsZeroesIbTerms) {
  const auto f = fixture();
  auto cfg = small_config();
  cfg.warmup_epochs = cfg.epochs;
  const auto r = train(f.samples, f.fold, cfg);
  for (const auto& e : r.history) {
    EXPECT_EQ(e.loss.ib_ce, 0.0);
    EXPECT_EQ(e.loss.ib_bss, 0.0);
    EXPECT_FALSE(e.loss.ib_active);
  }
}

TEST(Train, IbSwitchesOnOnceAfterWarmup) {
  const auto f = fixture();
  const auto cfg = small_config();
  const auto r = train(f.samples, f.fold, cfg);
  ASSERT_EQ(r.history.size(), cfg.epochs);
  for (std::size_t e = 0; e < r.history.size(); ++e) {
    EXPECT_EQ(r.history[e].epoch, e + 1);
    EXPECT_EQ(r.history[e].loss.ib_active, e >= cfg.warmup_epochs);
    if (e < cfg.warmup_epochs) {
      EXPECT_EQ(r.history[e].loss.ib_ce, 0.0);
      EXPECT_EQ(r.history[e].loss.ib_bss, 0.0);
    } else {
      EXPECT_GT(r.history[e].loss.ib_ce, 0.0);
      EXPECT_GT(r.history[e].loss.ib_bss, 0.0);
    }
  }
}

TEST(Train, BestCheckpointIsArgmaxOfValidationGmgs) {
  const auto f = fixture();
  const auto r = train(f.samples, f.fold, small_config());
  std::vector<double> scores;
  for (const auto& e : r.history) scores.push_back(e.val_gmgs);
  EXPECT_EQ(r.best.epoch, select_best(scores) + 1);
  EXPECT_EQ(r.best.val_gmgs, scores[r.best.epoch - 1]);
  const auto val = slice(f.samples, f.fold.validation);
  EXPECT_EQ(evaluate_model(val, r.best.params, small_config()).gmgs, r.best.val_gmgs);
}

TEST(Train, Deterministic) {
  const auto f = fixture();
  const auto a = train(f.samples, f.fold, small_config());
  const auto b = train(f.samples, f.fold, small_config());
  EXPECT_EQ(format_history(a.history), format_history(b.history));
  EXPECT_EQ(a.best.params, b.best.params);
}

TEST(Train, VerifyGradientsRecordsCheck) {
  const auto f = fixture();
  auto cfg = small_config();
  cfg.epochs = 1;
  cfg.warmup_epochs = 1;
  cfg.verify_gradients = true;
  const auto r = train(f.samples, f.fold, cfg);
  ASSERT_TRUE(r.gradient_check);
  EXPECT_LE(r.gradient_check->max_rel_error, cfg.verify_tolerance);
}

TEST(Train, DegenerateSplitIsError) {
  auto f = fixture();
  for (auto i : f.fold.validation.indices())
    if (*f.samples[i].label == FlareClass::X) f.samples[i].label = FlareClass::M;
  try {
    train(f.samples, f.fold, small_config());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Data);
    EXPECT_NE(std::string(e.what()).find("degenerate split"), std::string::npos);
  }
}

TEST(Train, InvalidConfig) {
  const auto f = fixture();
  auto cfg = small_config();
  cfg.warmup_epochs = cfg.epochs + 1;
  EXPECT_THROW(train(f.samples, f.fold, cfg), Error);
}

TEST(Checkpoint, RoundTrip) {
  Checkpoint ck;
  ck.epoch = 3;
  ck.val_gmgs = 0.1234567890123;
  ck.params = init_params(3, std::vector<std::size_t>{4, 2}, 8);
  const auto text = format_checkpoint(ck, "0123456789abcdef");
  std::istringstream in(text);
  const auto back = parse_checkpoint(in);
  EXPECT_EQ(back.config_hash, "0123456789abcdef");
  EXPECT_EQ(back.epoch, 3u);
  EXPECT_EQ(back.val_gmgs, ck.val_gmgs);
  EXPECT_EQ(back.params, ck.params);

  std::istringstream bad(text.substr(0, text.size() / 2));
  EXPECT_THROW(parse_checkpoint(bad), Error);
}
