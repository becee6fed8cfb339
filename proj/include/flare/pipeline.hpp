#pragma once
// Event-window labeling, missing-channel policy, chronological splits and
// the synthetic imbalanced data generator.

#include <flare/core.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace flare {

inline constexpr double kDefaultHorizonHours = 72.0;
inline constexpr auto kCadence = std::chrono::hours{2};
// At least 25% of ten channels missing means three or more.
inline constexpr std::size_t kMaxMissingChannels = 2;

struct FlareEvent {
  Instant peak_time{};
  FlareClass flare_class = FlareClass::O;
};

/// Largest event class with peak in (t, t + horizon]; O for an empty window.
inline FlareClass label_max_class(Instant t, std::span<const FlareEvent> events,
                                  double horizon_hours = kDefaultHorizonHours) {
  const auto end = t + std::chrono::duration_cast<std::chrono::seconds>(
                           std::chrono::duration<double, std::ratio<3600>>(horizon_hours));
  FlareClass best = FlareClass::O;
  for (const auto& e : events)
    if (e.peak_time > t && e.peak_time <= end && rank(e.flare_class) > rank(best)) best = e.flare_class;
  return best;
}

/// Labels many instants against one catalog; events need not be sorted.
inline std::vector<FlareClass> label_all(std::span<const Instant> times, std::vector<FlareEvent> events,
                                         double horizon_hours = kDefaultHorizonHours) {
  std::sort(events.begin(), events.end(), [](const auto& a, const auto& b) { return a.peak_time < b.peak_time; });
  const auto horizon = std::chrono::duration_cast<std::chrono::seconds>(
      std::chrono::duration<double, std::ratio<3600>>(horizon_hours));
  std::vector<FlareClass> out;
  out.reserve(times.size());
  for (Instant t : times) {
    auto first = std::upper_bound(events.begin(), events.end(), t,
                                  [](Instant v, const FlareEvent& e) { return v < e.peak_time; });
    FlareClass best = FlareClass::O;
    for (auto it = first; it != events.end() && it->peak_time <= t + horizon; ++it)
      if (rank(it->flare_class) > rank(best)) best = it->flare_class;
    out.push_back(best);
  }
  return out;
}

/// Feature indices [begin, end) standing in for one image channel.
inline std::pair<std::size_t, std::size_t> channel_block(std::size_t channel, std::size_t feature_dim) {
  return {channel * feature_dim / kNumChannels, (channel + 1) * feature_dim / kNumChannels};
}

struct ChannelPolicyResult {
  std::vector<Sample> kept;
  std::size_t excluded_count = 0;
};

inline ChannelPolicyResult apply_channel_policy(std::span<const Sample> samples) {
  ChannelPolicyResult r;
  for (const auto& s : samples) {
    if (!s.label || s.missing_channels() > kMaxMissingChannels) {
      ++r.excluded_count;
      continue;
    }
    Sample kept = s;
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      if (kept.channel_mask[c]) continue;
      const auto [b, e] = channel_block(c, kept.features.size());
      std::fill(kept.features.begin() + static_cast<std::ptrdiff_t>(b),
                kept.features.begin() + static_cast<std::ptrdiff_t>(e), 0.0);
    }
    r.kept.push_back(std::move(kept));
  }
  return r;
}

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end - begin; }
  bool empty() const noexcept { return end == begin; }
  std::vector<std::size_t> indices() const {
    std::vector<std::size_t> v(size());
    std::iota(v.begin(), v.end(), begin);
    return v;
  }
};

struct Fold {
  IndexRange train;
  IndexRange validation;
  IndexRange test;
};

/// Expanding-window time-series cross-validation. Fold f uses the first
/// (f+1)/fold_count of the data, split train -> validation -> test.
struct SplitSpec {
  std::size_t fold_count = 3;
  double validation_ratio = 0.1;
  double test_ratio = 0.2;

  void validate() const {
    if (fold_count == 0) fail(ErrorKind::InvalidArgument, "fold_count must be positive");
    if (!(validation_ratio > 0.0) || !(test_ratio > 0.0) || validation_ratio + test_ratio >= 1.0)
      fail(ErrorKind::InvalidArgument, "split ratios must be positive and leave room for training data");
  }
};

inline std::vector<Fold> split_timeseries(std::size_t n, const SplitSpec& spec) {
  spec.validate();
  std::vector<Fold> folds;
  folds.reserve(spec.fold_count);
  for (std::size_t f = 0; f < spec.fold_count; ++f) {
    const std::size_t span = n * (f + 1) / spec.fold_count;
    const auto test = static_cast<std::size_t>(std::llround(static_cast<double>(span) * spec.test_ratio));
    const auto val = static_cast<std::size_t>(std::llround(static_cast<double>(span) * spec.validation_ratio));
    if (test == 0 || val == 0 || test + val >= span)
      fail(ErrorKind::Data, "too few samples for " + std::to_string(spec.fold_count) + " folds");
    const std::size_t train_end = span - val - test;
    folds.push_back({{0, train_end}, {train_end, train_end + val}, {train_end + val, span}});
  }
  return folds;
}

/// Checks input is sorted before splitting; returns per-fold ranges.
inline std::vector<Fold> split_timeseries(std::span<const Sample> samples, const SplitSpec& spec) {
  if (!std::is_sorted(samples.begin(), samples.end(),
                      [](const Sample& a, const Sample& b) { return a.timestamp < b.timestamp; }))
    fail(ErrorKind::InvalidArgument, "samples must be sorted by timestamp");
  return split_timeseries(samples.size(), spec);
}

struct SyntheticOptions {
  bool stratified = false;
  Instant start = std::chrono::sys_days{std::chrono::year{2011} / 6 / 1};
  // 36 two-hour steps between samples keeps each 72 h window to one sample,
  // so the emitted events relabel to exactly the generated labels.
  std::size_t stride_steps = 36;
  double class_separation = 0.8;
  double partial_missing_rate = 0.05;
  double excluded_missing_rate = 0.02;
};

struct SyntheticData {
  std::vector<Sample> samples;
  std::vector<FlareEvent> events;
};

namespace detail {

inline std::vector<FlareClass> stratified_labels(std::size_t n, const Vec4& probs, std::mt19937_64& rng) {
  // Largest-remainder apportionment, then a seeded shuffle.
  std::array<std::size_t, kNumClasses> counts{};
  std::array<std::pair<double, std::size_t>, kNumClasses> rem{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    const double exact = probs[k] * static_cast<double>(n);
    counts[k] = static_cast<std::size_t>(std::floor(exact));
    rem[k] = {exact - static_cast<double>(counts[k]), k};
    assigned += counts[k];
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++counts[rem[i % kNumClasses].second];
  std::vector<FlareClass> labels;
  labels.reserve(n);
  for (std::size_t k = 0; k < kNumClasses; ++k) labels.insert(labels.end(), counts[k], class_from_rank(k));
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

}  // namespace detail

/// Seeded class-imbalanced data. Features are Gaussian around class means
/// that step along a fixed direction with severity, so neighboring classes
/// overlap.
inline SyntheticData gen_synthetic(std::size_t n, const Vec4& class_probs, std::uint64_t seed, std::size_t feature_dim,
                                   const SyntheticOptions& opt = {}) {
  if (n == 0) fail(ErrorKind::InvalidArgument, "n must be positive");
  if (feature_dim == 0) fail(ErrorKind::InvalidArgument, "feature_dim must be positive");
  double total = 0.0;
  for (double p : class_probs) {
    if (!(p >= 0.0)) fail(ErrorKind::InvalidArgument, "class probabilities must be non-negative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) fail(ErrorKind::InvalidArgument, "class probabilities must sum to 1");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Class means: severity rank times a per-feature loading, plus a small
  // class-specific jitter so classes are not collinear.
  std::vector<double> loading(feature_dim);
  for (auto& a : loading) a = 0.3 + 0.7 * unit(rng);
  std::vector<std::vector<double>> means(kNumClasses, std::vector<double>(feature_dim));
  for (std::size_t k = 0; k < kNumClasses; ++k)
    for (std::size_t j = 0; j < feature_dim; ++j)
      means[k][j] = opt.class_separation * (static_cast<double>(k) * loading[j] + 0.3 * normal(rng));

  std::vector<FlareClass> labels;
  if (opt.stratified) {
    labels = detail::stratified_labels(n, class_probs, rng);
  } else {
    std::discrete_distribution<std::size_t> pick(class_probs.begin(), class_probs.end());
    labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) labels.push_back(class_from_rank(pick(rng)));
  }

  SyntheticData out;
  out.samples.reserve(n);
  const auto stride = kCadence * static_cast<long>(std::max<std::size_t>(opt.stride_steps, 1));
  const auto window = stride < std::chrono::hours{72} ? stride : std::chrono::hours{72};
  const int digits = static_cast<int>(std::to_string(n - 1).size());
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    char id[32];
    std::snprintf(id, sizeof id, "s%0*zu", digits, i);
    s.id = id;
    s.timestamp = opt.start + stride * static_cast<long>(i);
    s.label = labels[i];
    s.features.resize(feature_dim);
    const auto& mu = means[rank(labels[i])];
    for (std::size_t j = 0; j < feature_dim; ++j) s.features[j] = mu[j] + normal(rng);

    const double u = unit(rng);
    std::size_t missing = 0;
    if (u < opt.excluded_missing_rate) missing = 3 + static_cast<std::size_t>(unit(rng) * 3.0);
    else if (u < opt.excluded_missing_rate + opt.partial_missing_rate) missing = 1 + static_cast<std::size_t>(unit(rng) * 2.0);
    for (std::size_t m = 0; m < missing;) {
      const auto c = static_cast<std::size_t>(unit(rng) * kNumChannels) % kNumChannels;
      if (s.channel_mask[c]) {
        s.channel_mask[c] = false;
        ++m;
      }
    }

    // Catalog entries inside this sample's window reproduce its label: one
    // event of the label's class, sometimes preceded by a weaker one.
    const auto window_s = std::chrono::duration_cast<std::chrono::seconds>(window).count();
    auto offset = [&] { return std::chrono::seconds{1 + static_cast<long>(unit(rng) * static_cast<double>(window_s - 1))}; };
    if (labels[i] != FlareClass::O) {
      out.events.push_back({s.timestamp + offset(), labels[i]});
      if (rank(labels[i]) > rank(FlareClass::C) && unit(rng) < 0.5) {
        const auto weaker = class_from_rank(1 + static_cast<std::size_t>(unit(rng) * static_cast<double>(rank(labels[i]) - 1)));
        out.events.push_back({s.timestamp + offset(), weaker});
      }
    }
    out.samples.push_back(std::move(s));
  }
  std::stable_sort(out.events.begin(), out.events.end(),
                   [](const auto& a, const auto& b) { return a.peak_time < b.peak_time; });
  return out;
}

}  // namespace flare
