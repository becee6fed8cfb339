#pragma once
// Categorical and probabilistic forecast verification: Gerrity scoring
// matrix, GMGS, TSS and BSS for the >=M event, GMGS-Influence.

#include <flare/core.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace flare {

/// Gerrity scores for an arbitrary number of ordinal categories, row-major K*K.
inline std::vector<double> gerrity_scores(std::span<const double> climatology) {
  const std::size_t k = climatology.size();
  if (k < 2) fail(ErrorKind::InvalidArgument, "Gerrity matrix needs at least two categories");
  double sum = 0.0;
  for (double p : climatology) {
    if (!(p > 0.0)) fail(ErrorKind::Data, "degenerate climatology");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) fail(ErrorKind::Data, "degenerate climatology: probabilities do not sum to 1");

  // Odds ratios of the cumulative distribution, one per category boundary.
  std::vector<double> a(k - 1);
  double cum = 0.0;
  for (std::size_t r = 0; r + 1 < k; ++r) {
    cum += climatology[r];
    if (cum >= 1.0) fail(ErrorKind::Data, "degenerate climatology: cumulative probability reaches 1 early");
    a[r] = (1.0 - cum) / cum;
  }

  const double b = 1.0 / static_cast<double>(k - 1);
  std::vector<double> s(k * k);
  for (std::size_t i = 0; i < k; ++i) {
    double below = 0.0;
    for (std::size_t r = 0; r < i; ++r) below += 1.0 / a[r];
    for (std::size_t j = i; j < k; ++j) {
      double above = 0.0;
      for (std::size_t r = j; r + 1 < k; ++r) above += a[r];
      const double v = b * (below - static_cast<double>(j - i) + above);
      s[i * k + j] = v;
      s[j * k + i] = v;
    }
  }
  return s;
}

class ScoringMatrix {
 public:
  explicit ScoringMatrix(const Vec4& climatology) : climatology_(climatology) {
    const auto s = gerrity_scores(climatology_);
    for (std::size_t i = 0; i < kNumClasses; ++i)
      for (std::size_t j = 0; j < kNumClasses; ++j) s_[i][j] = s[i * kNumClasses + j];
  }

  double operator()(std::size_t i, std::size_t j) const { return s_[i][j]; }
  double operator()(FlareClass i, FlareClass j) const { return s_[rank(i)][rank(j)]; }
  const Vec4& climatology() const noexcept { return climatology_; }

 private:
  std::array<Vec4, kNumClasses> s_{};
  Vec4 climatology_;
};

inline ScoringMatrix gerrity_matrix(const Vec4& climatology) { return ScoringMatrix(climatology); }

/// Which climatology anchors the Gerrity matrix.
struct Climatology {
  std::optional<Vec4> probabilities;  // empty: observed row sums of the evaluated matrix

  static Climatology from_matrix_rows() { return {}; }
  static Climatology explicit_probs(const Vec4& p) { return {p}; }

  Vec4 resolve(const ConfusionMatrix& cm) const { return probabilities ? *probabilities : cm.observed_climatology(); }
};

inline double gmgs(const ConfusionMatrix& cm, const ScoringMatrix& s) {
  if (cm.total() == 0) fail(ErrorKind::Data, "empty evaluation set");
  double acc = 0.0;
  for (std::size_t i = 0; i < kNumClasses; ++i)
    for (std::size_t j = 0; j < kNumClasses; ++j) acc += static_cast<double>(cm(i, j)) * s(i, j);
  return acc / static_cast<double>(cm.total());
}

inline double gmgs(const ConfusionMatrix& cm, const Climatology& source = Climatology::from_matrix_rows()) {
  return gmgs(cm, gerrity_matrix(source.resolve(cm)));
}

/// True skill statistic after collapsing to the >=M / <M dichotomy.
inline double tss_ge_m(const ConfusionMatrix& cm) {
  double tp = 0, fn = 0, fp = 0, tn = 0;
  for (auto obs : kAllClasses) {
    for (auto pred : kAllClasses) {
      const auto n = static_cast<double>(cm(obs, pred));
      if (at_least_m(obs)) (at_least_m(pred) ? tp : fn) += n;
      else (at_least_m(pred) ? fp : tn) += n;
    }
  }
  if (tp + fn == 0.0 || fp + tn == 0.0) fail(ErrorKind::Data, "undefined TSS");
  return tp / (tp + fn) - fp / (fp + tn);
}

struct ProbForecast {
  ProbDist forecast;
  FlareClass observed;
};

/// Brier skill score of the >=M event against the sequence's own base rate.
inline double bss_ge_m(std::span<const ProbForecast> forecasts) {
  if (forecasts.empty()) fail(ErrorKind::Data, "empty evaluation set");
  double bs = 0.0;
  double events = 0.0;
  for (const auto& f : forecasts) {
    const double o = at_least_m(f.observed) ? 1.0 : 0.0;
    const double d = f.forecast.prob_ge_m() - o;
    bs += d * d;
    events += o;
  }
  const double n = static_cast<double>(forecasts.size());
  bs /= n;
  const double r = events / n;
  if (r == 0.0 || r == 1.0) fail(ErrorKind::Data, "degenerate climatology for BSS");
  return 1.0 - bs / (r * (1.0 - r));
}

struct InfluenceEntry {
  FlareClass observed;
  FlareClass predicted;
  double influence;
};

/// Off-diagonal cells ranked by how much each degrades GMGS, largest first.
inline std::vector<InfluenceEntry> gmgs_influence(const ConfusionMatrix& cm, const ScoringMatrix& s) {
  if (cm.total() == 0) fail(ErrorKind::Data, "empty evaluation set");
  const double n = static_cast<double>(cm.total());
  std::vector<InfluenceEntry> table;
  table.reserve(kNumClasses * (kNumClasses - 1));
  for (auto i : kAllClasses) {
    for (auto j : kAllClasses) {
      if (i == j) continue;
      table.push_back({i, j, static_cast<double>(cm(i, j)) * (s(i, i) - s(i, j)) / n});
    }
  }
  // Stable so equal influences keep row-major cell order.
  std::stable_sort(table.begin(), table.end(),
                   [](const InfluenceEntry& a, const InfluenceEntry& b) { return a.influence > b.influence; });
  return table;
}

inline double harmonic_mean(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) fail(ErrorKind::Numeric, "harmonic mean undefined");
  return 2.0 * a * b / (a + b);
}

struct MetricReport {
  double gmgs = 0.0;
  std::optional<double> tss_ge_m;
  std::optional<double> bss_ge_m;
  std::optional<double> hm;
  ConfusionMatrix confusion;
  std::vector<InfluenceEntry> influence_table;
};

/// Builds a report from observed classes and either probabilistic or hard forecasts.
/// TSS and BSS are left empty when undefined for the sample (single-sided observations).
inline MetricReport evaluate(std::span<const FlareClass> observed, std::span<const FlareClass> predicted,
                             std::span<const ProbDist> probabilities = {},
                             const Climatology& climatology = Climatology::from_matrix_rows()) {
  if (observed.size() != predicted.size()) fail(ErrorKind::InvalidArgument, "observed/predicted length mismatch");
  if (!probabilities.empty() && probabilities.size() != observed.size())
    fail(ErrorKind::InvalidArgument, "observed/probability length mismatch");
  if (observed.empty()) fail(ErrorKind::Data, "empty evaluation set");

  MetricReport report;
  for (std::size_t i = 0; i < observed.size(); ++i) report.confusion.add(observed[i], predicted[i]);
  const ScoringMatrix s = gerrity_matrix(climatology.resolve(report.confusion));
  report.gmgs = gmgs(report.confusion, s);
  report.influence_table = gmgs_influence(report.confusion, s);

  const auto rows = report.confusion.observed_counts();
  const bool has_pos = rows[2] + rows[3] > 0;
  const bool has_neg = rows[0] + rows[1] > 0;
  if (has_pos && has_neg) {
    report.tss_ge_m = tss_ge_m(report.confusion);
    if (!probabilities.empty()) {
      std::vector<ProbForecast> f;
      f.reserve(observed.size());
      for (std::size_t i = 0; i < observed.size(); ++i) f.push_back({probabilities[i], observed[i]});
      report.bss_ge_m = bss_ge_m(f);
    }
  }
  if (report.bss_ge_m && report.gmgs > 0.0 && *report.bss_ge_m > 0.0)
    report.hm = harmonic_mean(report.gmgs, *report.bss_ge_m);
  return report;
}

inline std::string format_real(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string format_opt(const std::optional<double>& v, int digits = 6) {
  return v ? format_real(*v, digits) : std::string("n/a");
}

/// Human-readable table; top_n limits the influence rows.
inline std::string to_text(const MetricReport& r, std::size_t top_n = 5) {
  std::ostringstream os;
  os << "GMGS      " << format_real(r.gmgs) << '\n'
     << "TSS>=M    " << format_opt(r.tss_ge_m) << '\n'
     << "BSS>=M    " << format_opt(r.bss_ge_m) << '\n'
     << "HM        " << format_opt(r.hm) << '\n'
     << '\n'
     << "Confusion matrix (rows observed, columns predicted), N=" << r.confusion.total() << '\n'
     << "      O        C        M        X\n";
  for (auto obs : kAllClasses) {
    os << name(obs);
    for (auto pred : kAllClasses) {
      char buf[32];
      std::snprintf(buf, sizeof buf, " %8llu", static_cast<unsigned long long>(r.confusion(obs, pred)));
      os << buf;
    }
    os << '\n';
  }
  os << "\nGMGS-Influence (top " << std::min(top_n, r.influence_table.size()) << ")\n"
     << "observed predicted influence\n";
  for (std::size_t i = 0; i < std::min(top_n, r.influence_table.size()); ++i) {
    const auto& e = r.influence_table[i];
    os << name(e.observed) << "        " << name(e.predicted) << "         " << format_real(e.influence) << '\n';
  }
  return os.str();
}

/// Machine-readable companion with a metric,value header.
inline std::string to_csv(const MetricReport& r, std::size_t top_n = 5) {
  std::ostringstream os;
  os << "metric,value\n"
     << "gmgs," << format_real(r.gmgs, 10) << '\n'
     << "tss_ge_m," << format_opt(r.tss_ge_m, 10) << '\n'
     << "bss_ge_m," << format_opt(r.bss_ge_m, 10) << '\n'
     << "hm," << format_opt(r.hm, 10) << '\n'
     << "n," << r.confusion.total() << '\n';
  for (auto obs : kAllClasses)
    for (auto pred : kAllClasses) os << "confusion_" << name(obs) << '_' << name(pred) << ',' << r.confusion(obs, pred) << '\n';
  for (std::size_t i = 0; i < std::min(top_n, r.influence_table.size()); ++i) {
    const auto& e = r.influence_table[i];
    os << "influence_" << name(e.observed) << '_' << name(e.predicted) << ',' << format_real(e.influence, 10) << '\n';
  }
  return os.str();
}

}  // namespace flare
