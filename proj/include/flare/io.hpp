#pragma once
// Comma-separated file formats:
//   events   peak_time,class
//   samples  id,timestamp,mask,f0..f{D-1}   (mask: ten 0/1 characters, 1 = present)
//   labels   id,label
//   preds    id,label  or  id,p_O,p_C,p_M,p_X

#include <flare/core.hpp>
#include <flare/pipeline.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

namespace flare::io {

inline std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    std::string_view field = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\r')) field.remove_suffix(1);
    while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
    out.emplace_back(field);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

/// Reads non-empty lines; each carries its 1-based line number.
struct CsvFile {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;

  [[noreturn]] void error(std::size_t line, const std::string& what) const {
    fail(ErrorKind::Data, path + ":" + std::to_string(line) + ": " + what);
  }
};

inline CsvFile read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Data, "cannot open " + path);
  CsvFile f;
  f.path = path;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    if (!have_header) {
      f.header = split_csv(line);
      have_header = true;
    } else {
      f.rows.emplace_back(lineno, split_csv(line));
    }
  }
  if (!have_header) fail(ErrorKind::Data, path + ": missing header");
  return f;
}

inline void expect_header(const CsvFile& f, const std::vector<std::string>& expected) {
  if (f.header != expected) {
    std::string want;
    for (const auto& h : expected) want += (want.empty() ? "" : ",") + h;
    f.error(1, "expected header '" + want + "'");
  }
}

inline double parse_double(const CsvFile& f, std::size_t line, const std::string& s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end) f.error(line, "not a number: '" + s + "'");
  return v;
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Data, "cannot write " + path);
  out << content;
  if (!out) fail(ErrorKind::Data, "write failed: " + path);
}

/// Shortest text that round-trips the double.
inline std::string format_exact(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

// events ---------------------------------------------------------------------

inline std::vector<FlareEvent> read_events(const std::string& path) {
  const auto f = read_csv(path);
  expect_header(f, {"peak_time", "class"});
  std::vector<FlareEvent> events;
  for (const auto& [line, row] : f.rows) {
    if (row.size() != 2) f.error(line, "expected 2 fields");
    const auto t = parse_iso8601(row[0]);
    if (!t) f.error(line, "bad timestamp '" + row[0] + "'");
    const auto c = parse_class(row[1]);
    if (!c) f.error(line, "bad flare class '" + row[1] + "'");
    events.push_back({*t, *c});
  }
  return events;
}

inline std::string format_events(std::span<const FlareEvent> events) {
  std::string s = "peak_time,class\n";
  for (const auto& e : events) s += format_iso8601(e.peak_time) + "," + std::string(name(e.flare_class)) + "\n";
  return s;
}

// samples --------------------------------------------------------------------

inline std::vector<Sample> read_samples(const std::string& path) {
  const auto f = read_csv(path);
  if (f.header.size() < 3 || f.header[0] != "id" || f.header[1] != "timestamp" || f.header[2] != "mask")
    f.error(1, "expected header 'id,timestamp,mask,f0..'");
  const std::size_t dim = f.header.size() - 3;
  for (std::size_t j = 0; j < dim; ++j)
    if (f.header[3 + j] != "f" + std::to_string(j)) f.error(1, "feature columns must be f0..f" + std::to_string(dim - 1));
  std::vector<Sample> samples;
  samples.reserve(f.rows.size());
  for (const auto& [line, row] : f.rows) {
    if (row.size() != f.header.size()) f.error(line, "expected " + std::to_string(f.header.size()) + " fields");
    Sample s;
    s.id = row[0];
    if (s.id.empty()) f.error(line, "empty id");
    const auto t = parse_iso8601(row[1]);
    if (!t) f.error(line, "bad timestamp '" + row[1] + "'");
    s.timestamp = *t;
    if (row[2].size() != kNumChannels) f.error(line, "mask must have 10 characters");
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      if (row[2][c] != '0' && row[2][c] != '1') f.error(line, "mask characters must be 0 or 1");
      s.channel_mask[c] = row[2][c] == '1';
    }
    s.features.reserve(dim);
    for (std::size_t j = 0; j < dim; ++j) s.features.push_back(parse_double(f, line, row[3 + j]));
    samples.push_back(std::move(s));
  }
  return samples;
}

inline std::string format_samples(std::span<const Sample> samples) {
  const std::size_t dim = samples.empty() ? 0 : samples.front().features.size();
  std::string s = "id,timestamp,mask";
  for (std::size_t j = 0; j < dim; ++j) s += ",f" + std::to_string(j);
  s += '\n';
  for (const auto& smp : samples) {
    if (smp.features.size() != dim) fail(ErrorKind::InvalidArgument, "samples have differing feature widths");
    s += smp.id + "," + format_iso8601(smp.timestamp) + ",";
    for (bool present : smp.channel_mask) s += present ? '1' : '0';
    for (double v : smp.features) s += "," + format_exact(v);
    s += '\n';
  }
  return s;
}

// labels ---------------------------------------------------------------------

struct LabelRow {
  std::string id;
  FlareClass label;
};

inline std::vector<LabelRow> read_labels(const std::string& path) {
  const auto f = read_csv(path);
  expect_header(f, {"id", "label"});
  std::vector<LabelRow> out;
  for (const auto& [line, row] : f.rows) {
    if (row.size() != 2) f.error(line, "expected 2 fields");
    const auto c = parse_class(row[1]);
    if (!c) f.error(line, "bad flare class '" + row[1] + "'");
    out.push_back({row[0], *c});
  }
  return out;
}

inline std::string format_labels(std::span<const LabelRow> labels) {
  std::string s = "id,label\n";
  for (const auto& l : labels) s += l.id + "," + std::string(name(l.label)) + "\n";
  return s;
}

/// Attaches labels by id; unknown ids in the labels file are an error.
inline void attach_labels(std::vector<Sample>& samples, std::span<const LabelRow> labels) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < samples.size(); ++i) index.emplace(samples[i].id, i);
  for (const auto& l : labels) {
    auto it = index.find(l.id);
    if (it == index.end()) fail(ErrorKind::Data, "label for unknown sample id '" + l.id + "'");
    samples[it->second].label = l.label;
  }
}

// predictions ----------------------------------------------------------------

struct PredictionRow {
  std::string id;
  std::variant<FlareClass, ProbDist> value;

  FlareClass predicted() const {
    return std::holds_alternative<FlareClass>(value) ? std::get<FlareClass>(value) : std::get<ProbDist>(value).argmax();
  }
};

inline std::vector<PredictionRow> read_predictions(const std::string& path) {
  const auto f = read_csv(path);
  const bool hard = f.header == std::vector<std::string>{"id", "label"};
  if (!hard && f.header != std::vector<std::string>{"id", "p_O", "p_C", "p_M", "p_X"})
    f.error(1, "expected header 'id,label' or 'id,p_O,p_C,p_M,p_X'");
  std::vector<PredictionRow> out;
  for (const auto& [line, row] : f.rows) {
    if (row.size() != f.header.size()) f.error(line, "expected " + std::to_string(f.header.size()) + " fields");
    if (hard) {
      const auto c = parse_class(row[1]);
      if (!c) f.error(line, "bad flare class '" + row[1] + "'");
      out.push_back({row[0], *c});
    } else {
      Vec4 p{};
      for (std::size_t k = 0; k < kNumClasses; ++k) p[k] = parse_double(f, line, row[1 + k]);
      try {
        out.push_back({row[0], ProbDist(p)});
      } catch (const Error& e) {
        f.error(line, e.what());
      }
    }
  }
  return out;
}

inline std::string format_predictions(std::span<const std::string> ids, std::span<const ProbDist> probs) {
  std::string s = "id,p_O,p_C,p_M,p_X\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    s += ids[i];
    for (double v : probs[i].values()) s += "," + format_exact(v);
    s += '\n';
  }
  return s;
}

}  // namespace flare::io
