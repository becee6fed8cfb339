#include <flare/core.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace flare;

namespace {

std::vector<std::pair<FlareClass, FlareClass>> reference_pairs() {
  const std::uint64_t c[4][4] = {{5336, 471, 92, 69}, {807, 748, 105, 183}, {139, 130, 85, 64}, {1, 33, 12, 31}};
  std::vector<std::pair<FlareClass, FlareClass>> pairs;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::uint64_t n = 0; n < c[i][j]; ++n) pairs.emplace_back(class_from_rank(i), class_from_rank(j));
  return pairs;
}

}  // namespace

TEST(FlareClass, OrderAndNames) {
  EXPECT_LT(rank(FlareClass::O), rank(FlareClass::C));
  EXPECT_LT(rank(FlareClass::C), rank(FlareClass::M));
  EXPECT_LT(rank(FlareClass::M), rank(FlareClass::X));
  for (auto c : kAllClasses) {
    EXPECT_EQ(class_from_rank(rank(c)), c);
    EXPECT_EQ(parse_class(name(c)), c);
  }
  EXPECT_FALSE(parse_class("B").has_value());
  EXPECT_THROW(class_from_rank(4), Error);
}

TEST(FlareClass, GoesThresholds) {
  EXPECT_EQ(class_from_peak_flux(2e-4), FlareClass::X);
  EXPECT_EQ(class_from_peak_flux(1e-4), FlareClass::X);
  EXPECT_EQ(class_from_peak_flux(9.9e-5), FlareClass::M);
  EXPECT_EQ(class_from_peak_flux(1e-6), FlareClass::C);
  EXPECT_EQ(class_from_peak_flux(5e-7), FlareClass::O);
}

TEST(ProbDist, RejectsInvalid) {
  EXPECT_THROW(ProbDist(Vec4{0.5, 0.5, 0.5, 0.0}), Error);
  EXPECT_THROW(ProbDist(Vec4{-0.1, 0.6, 0.3, 0.2}), Error);
  EXPECT_NO_THROW(ProbDist(Vec4{0.1, 0.2, 0.6, 0.1}));
}

TEST(ProbDist, SoftmaxStable) {
  const Vec4 z{1000.0, 999.0, -1000.0, 0.0};
  const auto p = ProbDist::softmax(z);
  double sum = 0.0;
  for (double v : p.values()) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_EQ(p.argmax(), FlareClass::O);
}

TEST(OneHotLabel, RoundTrip) {
  for (auto c : kAllClasses) {
    OneHotLabel y(c);
    EXPECT_EQ(OneHotLabel::from_vector(y.values()).cls(), c);
  }
  EXPECT_THROW(OneHotLabel::from_vector(Vec4{1, 1, 0, 0}), Error);
  EXPECT_THROW(OneHotLabel::from_vector(Vec4{0, 0, 0, 0}), Error);
  EXPECT_THROW(OneHotLabel::from_vector(Vec4{0.5, 0.5, 0, 0}), Error);
}

TEST(Timestamps, Iso8601RoundTrip) {
  const auto t = parse_iso8601("2011-09-06T02:00:00Z");
  ASSERT_TRUE(t);
  EXPECT_EQ(format_iso8601(*t), "2011-09-06T02:00:00Z");
  EXPECT_TRUE(parse_iso8601("2011-09-06 02:00"));
  EXPECT_FALSE(parse_iso8601("2011-02-30T00:00:00Z"));
  EXPECT_FALSE(parse_iso8601("yesterday"));
  EXPECT_FALSE(parse_iso8601("2011-09-06T02:00:00+09"));
}

TEST(BuildConfusion, SingleDiagonal) {
  const std::vector<std::pair<FlareClass, FlareClass>> pairs{{FlareClass::O, FlareClass::O}};
  const auto cm = build_confusion(pairs);
  EXPECT_EQ(cm(0, 0), 1u);
  EXPECT_EQ(cm.total(), 1u);
}

TEST(BuildConfusion, RepeatedOffDiagonal) {
  const std::vector<std::pair<FlareClass, FlareClass>> pairs{{FlareClass::X, FlareClass::C},
                                                             {FlareClass::X, FlareClass::C}};
  const auto cm = build_confusion(pairs);
  EXPECT_EQ(cm(3, 1), 2u);
  EXPECT_EQ(cm.total(), 2u);
}

TEST(BuildConfusion, ReferenceMatrix) {
  const auto cm = build_confusion(reference_pairs());
  EXPECT_EQ(cm.total(), 8306u);
  EXPECT_EQ(cm(FlareClass::O, FlareClass::O), 5336u);
  EXPECT_EQ(cm(FlareClass::O, FlareClass::C), 471u);
  EXPECT_EQ(cm(FlareClass::O, FlareClass::M), 92u);
  EXPECT_EQ(cm(FlareClass::O, FlareClass::X), 69u);
  EXPECT_EQ(cm(FlareClass::X, FlareClass::X), 31u);
}

TEST(BuildConfusion, EmptyIsError) {
  try {
    build_confusion({});
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "empty evaluation set");
  }
}

TEST(BuildConfusion, MarginalsMatchCounts) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> cls(0, 3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::pair<FlareClass, FlareClass>> pairs;
    std::array<std::uint64_t, 4> obs{}, pred{};
    const std::size_t n = 1 + trial * 7;
    for (std::size_t i = 0; i < n; ++i) {
      const auto o = cls(rng), p = cls(rng);
      pairs.emplace_back(class_from_rank(o), class_from_rank(p));
      ++obs[o];
      ++pred[p];
    }
    const auto cm = build_confusion(pairs);
    EXPECT_EQ(cm.observed_counts(), obs);
    EXPECT_EQ(cm.predicted_counts(), pred);
    EXPECT_EQ(cm.total(), n);
  }
}

TEST(ClassWeights, Balanced) {
  const auto g = class_weights({1, 1, 1, 1});
  for (std::size_t k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(g[k], 1.0);
}

TEST(ClassWeights, ImbalancedCounts) {
  // (N/4)/n_k with N = 47895, evaluated at 40 digits.
  const auto g = class_weights({18170, 16608, 10986, 2131});
  EXPECT_NEAR(g[FlareClass::O], 0.65898458998348926802, 1e-14);
  EXPECT_NEAR(g[FlareClass::C], 0.72096278901734104046, 1e-14);
  EXPECT_NEAR(g[FlareClass::M], 1.0899098853085745494, 1e-14);
  EXPECT_NEAR(g[FlareClass::X], 5.6188409197559831065, 1e-13);
}

TEST(ClassWeights, ExactProportionality) {
  const auto g = class_weights({2, 1, 1, 1});
  EXPECT_DOUBLE_EQ(g[0] / g[1], 0.5);
}

TEST(ClassWeights, ZeroCountIsError) {
  try {
    class_weights({5, 0, 1, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "empty class");
  }
}

TEST(ClassWeights, InvariantsOnRandomCounts) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::uint64_t> cnt(1, 100000);
  for (int trial = 0; trial < 200; ++trial) {
    const std::array<std::uint64_t, 4> n{cnt(rng), cnt(rng), cnt(rng), cnt(rng)};
    const auto g = class_weights(n);
    const auto g2 = class_weights({2 * n[0], 2 * n[1], 2 * n[2], 2 * n[3]});
    const double total = static_cast<double>(n[0] + n[1] + n[2] + n[3]);
    double mean = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
      EXPECT_GT(g[k], 0.0);
      EXPECT_NEAR(g[k] * static_cast<double>(n[k]), g[0] * static_cast<double>(n[0]), 1e-9 * total);
      EXPECT_NEAR(g[k], g2[k], 1e-12 * g[k]);
      mean += static_cast<double>(n[k]) / total * g[k];
    }
    EXPECT_NEAR(mean, 1.0, 1e-12);
  }
}
