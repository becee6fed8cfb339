#pragma once
// key=value run configuration with '#' comments. Precedence, lowest first:
// built-in defaults, config file, FLARE_<KEY> environment variables, flags.

#include <flare/core.hpp>
#include <flare/cycle.hpp>
#include <flare/pipeline.hpp>
#include <flare/trainer.hpp>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace flare {

class RunConfig {
 public:
  RunConfig() : values_(defaults()) {}

  static const std::map<std::string, std::string>& defaults() {
    static const std::map<std::string, std::string> d{
        {"adam_epsilon", "1e-08"},
        {"batch_size", "64"},
        {"beta1", "0.9"},
        {"beta2", "0.95"},
        {"epochs", "20"},
        {"fold", "0"},
        {"fold_count", "3"},
        {"hidden_widths", "64,64"},
        {"horizon_hours", "72"},
        {"ib_ce_mode", "residual"},
        {"lambda_bss", "3.0"},
        {"learning_rate", "4.0e-05"},
        {"loss", "flare"},
        {"period_hours", "96408"},
        {"seed", "0"},
        {"t_base", "2008-12-01T00:00:00Z"},
        {"test_ratio", "0.2"},
        {"use_cycle_embedding", "true"},
        {"validation_ratio", "0.1"},
        {"verify_gradients", "false"},
        {"verify_tolerance", "1e-05"},
        {"warmup_epochs", "5"},
        {"weight_decay", "5.0e-02"},
    };
    return d;
  }

  void set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) fail(ErrorKind::InvalidArgument, "unknown config key '" + key + "'");
    it->second = value;
  }

  /// Parses "key=value" (used by files and --set flags).
  void set_assignment(std::string_view line, const std::string& where) {
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(ErrorKind::InvalidArgument, where + ": expected key=value");
    auto trim = [](std::string_view s) {
      while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
      while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
      return std::string(s);
    };
    const auto key = trim(line.substr(0, eq));
    try {
      set(key, trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      fail(ErrorKind::InvalidArgument, where + ": " + e.what());
    }
  }

  void load_stream(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      set_assignment(line, source + ":" + std::to_string(lineno));
    }
  }

  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Data, "cannot open config " + path);
    load_stream(in, path);
  }

  /// Applies FLARE_<UPPERCASE KEY> overrides for every known key.
  void apply_env() {
    for (auto& [key, value] : values_) {
      std::string var = "FLARE_";
      for (char c : key) var += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      if (const char* v = std::getenv(var.c_str())) value = v;
    }
  }

  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) fail(ErrorKind::InvalidArgument, "unknown config key '" + key + "'");
    return it->second;
  }

  /// Canonical sorted key=value text; what gets echoed into output directories.
  std::string to_text() const {
    std::string s;
    for (const auto& [k, v] : values_) s += k + "=" + v + "\n";
    return s;
  }

  /// FNV-1a 64 of the canonical text, as 16 hex digits.
  std::string hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : to_text()) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

  double get_double(const std::string& key) const {
    const auto& s = get(key);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) fail(ErrorKind::InvalidArgument, key + ": not a number: " + s);
    return v;
  }

  std::uint64_t get_uint(const std::string& key) const {
    const auto& s = get(key);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
      fail(ErrorKind::InvalidArgument, key + ": not a non-negative integer: " + s);
    return v;
  }

  bool get_bool(const std::string& key) const {
    const auto& s = get(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    fail(ErrorKind::InvalidArgument, key + ": not a boolean: " + s);
  }

 private:
  std::map<std::string, std::string> values_;
};

struct TrainSettings {
  TrainConfig train;
  SplitSpec split;
  std::size_t fold = 0;
  double horizon_hours = kDefaultHorizonHours;
};

inline TrainSettings resolve(const RunConfig& rc) {
  TrainSettings s;
  auto& t = s.train;
  t.epochs = rc.get_uint("epochs");
  t.batch_size = rc.get_uint("batch_size");
  t.learning_rate = rc.get_double("learning_rate");
  t.weight_decay = rc.get_double("weight_decay");
  t.beta1 = rc.get_double("beta1");
  t.beta2 = rc.get_double("beta2");
  t.adam_epsilon = rc.get_double("adam_epsilon");
  t.lambda_bss = rc.get_double("lambda_bss");
  t.warmup_epochs = rc.get_uint("warmup_epochs");
  t.seed = rc.get_uint("seed");
  t.use_cycle_embedding = rc.get_bool("use_cycle_embedding");
  t.verify_gradients = rc.get_bool("verify_gradients");
  t.verify_tolerance = rc.get_double("verify_tolerance");

  t.hidden_widths.clear();
  std::stringstream widths(rc.get("hidden_widths"));
  for (std::string tok; std::getline(widths, tok, ',');) {
    std::size_t w = 0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), w);
    if (ec != std::errc{} || ptr != tok.data() + tok.size())
      fail(ErrorKind::InvalidArgument, "hidden_widths: bad width '" + tok + "'");
    t.hidden_widths.push_back(w);
  }

  const auto& loss = rc.get("loss");
  if (loss == "flare") t.loss = LossKind::Flare;
  else if (loss == "ce") t.loss = LossKind::CrossEntropy;
  else fail(ErrorKind::InvalidArgument, "loss: expected 'flare' or 'ce', got '" + loss + "'");

  const auto& mode = rc.get("ib_ce_mode");
  if (mode == "residual") t.ib_ce_mode = IbCeMode::Residual;
  else if (mode == "literal") t.ib_ce_mode = IbCeMode::Literal;
  else fail(ErrorKind::InvalidArgument, "ib_ce_mode: expected 'residual' or 'literal', got '" + mode + "'");

  const auto base = parse_iso8601(rc.get("t_base"));
  if (!base) fail(ErrorKind::InvalidArgument, "t_base: bad timestamp '" + rc.get("t_base") + "'");
  t.cycle.t_base = *base;
  t.cycle.period_hours = rc.get_double("period_hours");

  s.split.fold_count = rc.get_uint("fold_count");
  s.split.validation_ratio = rc.get_double("validation_ratio");
  s.split.test_ratio = rc.get_double("test_ratio");
  s.fold = rc.get_uint("fold");
  s.horizon_hours = rc.get_double("horizon_hours");

  t.validate();
  s.split.validate();
  if (s.fold >= s.split.fold_count) fail(ErrorKind::InvalidArgument, "fold must be below fold_count");
  if (!(s.horizon_hours > 0.0)) fail(ErrorKind::InvalidArgument, "horizon_hours must be positive");
  return s;
}

}  // namespace flare
