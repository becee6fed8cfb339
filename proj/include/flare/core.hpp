#pragma once
// Domain types shared by the loss, metric, pipeline and trainer headers.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace flare {

inline constexpr std::size_t kNumClasses = 4;
inline constexpr std::size_t kNumChannels = 10;

enum class ErrorKind { InvalidArgument, Data, Numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

/// Ordinal flare category, ascending severity.
enum class FlareClass : std::uint8_t { O = 0, C = 1, M = 2, X = 3 };

inline constexpr std::array<FlareClass, kNumClasses> kAllClasses{FlareClass::O, FlareClass::C,
                                                                 FlareClass::M, FlareClass::X};

constexpr std::size_t rank(FlareClass c) noexcept { return static_cast<std::size_t>(c); }

inline FlareClass class_from_rank(std::size_t r) {
  if (r >= kNumClasses) fail(ErrorKind::InvalidArgument, "flare class rank out of range: " + std::to_string(r));
  return static_cast<FlareClass>(r);
}

constexpr std::string_view name(FlareClass c) noexcept {
  constexpr std::array<std::string_view, kNumClasses> names{"O", "C", "M", "X"};
  return names[rank(c)];
}

inline std::optional<FlareClass> parse_class(std::string_view s) {
  for (auto c : kAllClasses)
    if (s == name(c)) return c;
  return std::nullopt;
}

/// GOES 1-8 A peak flux thresholds in W/m^2.
inline FlareClass class_from_peak_flux(double flux_w_m2) {
  if (flux_w_m2 >= 1e-4) return FlareClass::X;
  if (flux_w_m2 >= 1e-5) return FlareClass::M;
  if (flux_w_m2 >= 1e-6) return FlareClass::C;
  return FlareClass::O;
}

constexpr bool at_least_m(FlareClass c) noexcept { return rank(c) >= rank(FlareClass::M); }

using Vec4 = std::array<double, kNumClasses>;

/// Probability vector over flare classes.
class ProbDist {
 public:
  static constexpr double kSumTolerance = 1e-9;

  ProbDist() : p_{0.25, 0.25, 0.25, 0.25} {}

  explicit ProbDist(const Vec4& p) : p_(p) {
    double sum = 0.0;
    for (double v : p_) {
      if (!(v >= 0.0 && v <= 1.0)) fail(ErrorKind::InvalidArgument, "probability component outside [0,1]");
      sum += v;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) fail(ErrorKind::InvalidArgument, "probabilities do not sum to 1");
  }

  static ProbDist softmax(std::span<const double> logits) {
    if (logits.size() != kNumClasses) fail(ErrorKind::InvalidArgument, "softmax expects 4 logits");
    const double zmax = *std::max_element(logits.begin(), logits.end());
    Vec4 p{};
    double sum = 0.0;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      p[k] = std::exp(logits[k] - zmax);
      sum += p[k];
    }
    for (double& v : p) v /= sum;
    return ProbDist(p);
  }

  double operator[](std::size_t k) const { return p_[k]; }
  double operator[](FlareClass c) const { return p_[rank(c)]; }
  const Vec4& values() const noexcept { return p_; }
  std::span<const double> span() const noexcept { return p_; }

  FlareClass argmax() const {
    return class_from_rank(static_cast<std::size_t>(std::max_element(p_.begin(), p_.end()) - p_.begin()));
  }
  /// Probability of an event at or above M class.
  double prob_ge_m() const noexcept { return p_[2] + p_[3]; }

 private:
  Vec4 p_;
};

class OneHotLabel {
 public:
  explicit OneHotLabel(FlareClass c) : cls_(c) {}

  static OneHotLabel from_vector(std::span<const double> y) {
    if (y.size() != kNumClasses) fail(ErrorKind::InvalidArgument, "one-hot label needs 4 entries");
    std::optional<std::size_t> hot;
    for (std::size_t k = 0; k < y.size(); ++k) {
      if (y[k] == 1.0) {
        if (hot) fail(ErrorKind::InvalidArgument, "one-hot label has more than one hot entry");
        hot = k;
      } else if (y[k] != 0.0) {
        fail(ErrorKind::InvalidArgument, "one-hot label entries must be 0 or 1");
      }
    }
    if (!hot) fail(ErrorKind::InvalidArgument, "one-hot label has no hot entry");
    return OneHotLabel(class_from_rank(*hot));
  }

  FlareClass cls() const noexcept { return cls_; }
  Vec4 values() const noexcept {
    Vec4 y{};
    y[rank(cls_)] = 1.0;
    return y;
  }
  double operator[](std::size_t k) const noexcept { return k == rank(cls_) ? 1.0 : 0.0; }

 private:
  FlareClass cls_;
};

using Instant = std::chrono::sys_seconds;

/// Parses "YYYY-MM-DDTHH:MM:SSZ" (seconds and trailing Z optional, space separator accepted).
inline std::optional<Instant> parse_iso8601(std::string_view s) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  char sep = 0;
  int consumed = 0;
  const std::string str(s);
  int n = std::sscanf(str.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d%n", &y, &mo, &d, &sep, &h, &mi, &sec, &consumed);
  if (n < 7) {
    sec = 0;
    n = std::sscanf(str.c_str(), "%4d-%2d-%2d%c%2d:%2d%n", &y, &mo, &d, &sep, &h, &mi, &consumed);
    if (n < 6) return std::nullopt;
  }
  if (sep != 'T' && sep != ' ') return std::nullopt;
  std::string_view rest = s.substr(static_cast<std::size_t>(consumed));
  if (!(rest.empty() || rest == "Z")) return std::nullopt;
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || sec < 0 || sec > 59) return std::nullopt;
  return sys_days{ymd} + hours{h} + minutes{mi} + seconds{sec};
}

inline std::string format_iso8601(Instant t) {
  using namespace std::chrono;
  const auto day_point = floor<days>(t);
  const year_month_day ymd{day_point};
  const hh_mm_ss hms{t - day_point};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

inline double hours_between(Instant from, Instant to) {
  return std::chrono::duration<double, std::ratio<3600>>(to - from).count();
}

using ChannelMask = std::array<bool, kNumChannels>;

struct Sample {
  std::string id;
  Instant timestamp{};
  std::vector<double> features;
  ChannelMask channel_mask{true, true, true, true, true, true, true, true, true, true};
  std::optional<FlareClass> label;

  std::size_t missing_channels() const noexcept {
    return static_cast<std::size_t>(std::count(channel_mask.begin(), channel_mask.end(), false));
  }
};

/// Rows are observed class, columns predicted class, both in O,C,M,X order.
class ConfusionMatrix {
 public:
  using Counts = std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses>;

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(const Counts& c) : c_(c) {
    for (const auto& row : c_)
      for (auto v : row) n_ += v;
  }

  void add(FlareClass observed, FlareClass predicted, std::uint64_t count = 1) {
    c_[rank(observed)][rank(predicted)] += count;
    n_ += count;
  }

  std::uint64_t operator()(std::size_t obs, std::size_t pred) const { return c_[obs][pred]; }
  std::uint64_t operator()(FlareClass obs, FlareClass pred) const { return c_[rank(obs)][rank(pred)]; }
  std::uint64_t total() const noexcept { return n_; }
  const Counts& counts() const noexcept { return c_; }

  std::array<std::uint64_t, kNumClasses> observed_counts() const {
    std::array<std::uint64_t, kNumClasses> r{};
    for (std::size_t i = 0; i < kNumClasses; ++i)
      for (std::size_t j = 0; j < kNumClasses; ++j) r[i] += c_[i][j];
    return r;
  }

  std::array<std::uint64_t, kNumClasses> predicted_counts() const {
    std::array<std::uint64_t, kNumClasses> r{};
    for (std::size_t i = 0; i < kNumClasses; ++i)
      for (std::size_t j = 0; j < kNumClasses; ++j) r[j] += c_[i][j];
    return r;
  }

  /// Observed (row-sum) class frequencies.
  Vec4 observed_climatology() const {
    if (n_ == 0) fail(ErrorKind::Data, "empty evaluation set");
    const auto rows = observed_counts();
    Vec4 p{};
    for (std::size_t i = 0; i < kNumClasses; ++i) p[i] = static_cast<double>(rows[i]) / static_cast<double>(n_);
    return p;
  }

  /// Recall of a single observed class; NaN when the class is absent.
  double recall(FlareClass c) const {
    const auto rows = observed_counts();
    if (rows[rank(c)] == 0) return std::nan("");
    return static_cast<double>(c_[rank(c)][rank(c)]) / static_cast<double>(rows[rank(c)]);
  }

 private:
  Counts c_{};
  std::uint64_t n_ = 0;
};

inline ConfusionMatrix build_confusion(std::span<const std::pair<FlareClass, FlareClass>> pairs) {
  if (pairs.empty()) fail(ErrorKind::Data, "empty evaluation set");
  ConfusionMatrix cm;
  for (const auto& [obs, pred] : pairs) cm.add(obs, pred);
  return cm;
}

/// Inverse-frequency class weights, normalized to mean one over the counted samples.
class ClassWeights {
 public:
  static ClassWeights uniform() { return ClassWeights(Vec4{1.0, 1.0, 1.0, 1.0}); }

  /// Caller-chosen positive weights, no normalization.
  static ClassWeights from_values(const Vec4& g) {
    for (double v : g)
      if (!(v > 0.0) || !std::isfinite(v)) fail(ErrorKind::InvalidArgument, "class weights must be positive");
    return ClassWeights(g);
  }

  static ClassWeights from_counts(const std::array<std::uint64_t, kNumClasses>& counts) {
    double total = 0.0;
    for (auto n : counts) {
      if (n == 0) fail(ErrorKind::Data, "empty class");
      total += static_cast<double>(n);
    }
    Vec4 g{};
    for (std::size_t k = 0; k < kNumClasses; ++k)
      g[k] = (total / static_cast<double>(kNumClasses)) / static_cast<double>(counts[k]);
    return ClassWeights(g);
  }

  double operator[](FlareClass c) const noexcept { return gamma_[rank(c)]; }
  double operator[](std::size_t k) const noexcept { return gamma_[k]; }
  const Vec4& values() const noexcept { return gamma_; }

 private:
  explicit ClassWeights(const Vec4& g) : gamma_(g) {}
  Vec4 gamma_;
};

inline ClassWeights class_weights(const std::array<std::uint64_t, kNumClasses>& counts) {
  return ClassWeights::from_counts(counts);
}

}  // namespace flare
