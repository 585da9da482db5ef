// Copyright 2026 The RGD Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Per-evaluation training records and their CSV / JSON encodings.
//
// CSV columns: step,split,objective,<metric columns>,w_min,w_mean,w_max,
// w_sat_frac. Doubles are written with 17 significant digits so both
// formats round-trip exactly.

#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "rgd/errors.hpp"

namespace rgd {

enum class Split { Train, Holdout, Test };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Holdout: return "holdout";
    case Split::Test: return "test";
  }
  return "?";
}

inline Split split_from_string(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "holdout") return Split::Holdout;
  if (s == "test") return Split::Test;
  throw InputError("unknown split '" + std::string(s) + "'");
}

struct WeightStats {
  double min = 1.0;
  double mean = 1.0;
  double max = 1.0;
  double sat_frac = 0.0;  // fraction of samples whose weight hit the clip

  bool operator==(const WeightStats&) const = default;
};

struct TraceRecord {
  std::size_t step = 0;
  Split split = Split::Train;
  double objective = 0.0;
  std::vector<double> metrics;  // aligned with Trace::metric_names()
  WeightStats weights;

  bool operator==(const TraceRecord&) const = default;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Append-only sequence of records; steps strictly increase within a split.
class Trace {
 public:
  Trace() = default;
  explicit Trace(std::vector<std::string> metric_names)
      : metric_names_(std::move(metric_names)) {}

  const std::vector<std::string>& metric_names() const noexcept {
    return metric_names_;
  }
  const std::vector<TraceRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }

  void append(TraceRecord r) {
    if (r.metrics.size() != metric_names_.size())
      throw InputError("Trace: record has " + std::to_string(r.metrics.size()) +
                       " metrics, trace expects " +
                       std::to_string(metric_names_.size()));
    auto it = last_step_.find(r.split);
    if (it != last_step_.end() && r.step <= it->second)
      throw InputError("Trace: step " + std::to_string(r.step) +
                       " does not increase for split " +
                       std::string(to_string(r.split)));
    last_step_[r.split] = r.step;
    records_.push_back(std::move(r));
  }

  /// Index of a metric column, or -1.
  std::ptrdiff_t metric_index(std::string_view name) const {
    for (std::size_t i = 0; i < metric_names_.size(); ++i)
      if (metric_names_[i] == name) return static_cast<std::ptrdiff_t>(i);
    return -1;
  }

  /// Last record for a split, or nullptr.
  const TraceRecord* last(Split s) const {
    for (auto it = records_.rbegin(); it != records_.rend(); ++it)
      if (it->split == s) return &*it;
    return nullptr;
  }

  bool operator==(const Trace& o) const {
    return metric_names_ == o.metric_names_ && records_ == o.records_;
  }

 private:
  std::vector<std::string> metric_names_;
  std::vector<TraceRecord> records_;
  std::map<Split, std::size_t> last_step_;
};

enum class TraceFormat { Csv, Json };

inline TraceFormat trace_format_from_string(std::string_view s) {
  if (s == "csv") return TraceFormat::Csv;
  if (s == "json") return TraceFormat::Json;
  throw InputError("unknown trace format '" + std::string(s) + "'");
}

/// Format implied by a file extension (.json, otherwise CSV).
inline TraceFormat trace_format_for(const std::filesystem::path& p) {
  return p.extension() == ".json" ? TraceFormat::Json : TraceFormat::Csv;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string trace_to_csv(const Trace& t) {
  std::ostringstream out;
  out << "step,split,objective";
  for (const auto& m : t.metric_names()) out << ',' << m;
  out << ",w_min,w_mean,w_max,w_sat_frac\n";
  for (const auto& r : t.records()) {
    out << r.step << ',' << to_string(r.split) << ',' << format_double(r.objective);
    for (double v : r.metrics) out << ',' << format_double(v);
    out << ',' << format_double(r.weights.min) << ','
        << format_double(r.weights.mean) << ',' << format_double(r.weights.max)
        << ',' << format_double(r.weights.sat_frac) << '\n';
  }
  return out.str();
}

inline nlohmann::ordered_json trace_to_json(const Trace& t) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : t.records()) {
    nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < r.metrics.size(); ++i)
      metrics[t.metric_names()[i]] = r.metrics[i];
    arr.push_back({{"step", r.step},
                   {"split", to_string(r.split)},
                   {"objective", r.objective},
                   {"metrics", metrics},
                   {"w_min", r.weights.min},
                   {"w_mean", r.weights.mean},
                   {"w_max", r.weights.max},
                   {"w_sat_frac", r.weights.sat_frac}});
  }
  return arr;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline double parse_double(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError("trace line " + std::to_string(line) + ": bad number '" + s + "'");
  }
}

}  // namespace detail

inline Trace trace_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError("trace CSV: missing header");
  auto header = detail::split_csv_line(line);
  constexpr std::size_t fixed_front = 3, fixed_back = 4;
  if (header.size() < fixed_front + fixed_back || header[0] != "step" ||
      header[1] != "split" || header[2] != "objective" ||
      header[header.size() - 4] != "w_min" || header.back() != "w_sat_frac")
    throw IoError("trace CSV: unexpected header '" + line + "'");
  std::vector<std::string> metrics(header.begin() + fixed_front,
                                   header.end() - fixed_back);
  Trace t(metrics);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw IoError("trace line " + std::to_string(lineno) + ": expected " +
                    std::to_string(header.size()) + " columns");
    TraceRecord r;
    r.step = static_cast<std::size_t>(detail::parse_double(cells[0], lineno));
    r.split = split_from_string(cells[1]);
    r.objective = detail::parse_double(cells[2], lineno);
    for (std::size_t i = 0; i < metrics.size(); ++i)
      r.metrics.push_back(detail::parse_double(cells[fixed_front + i], lineno));
    const std::size_t w = fixed_front + metrics.size();
    r.weights = {detail::parse_double(cells[w], lineno),
                 detail::parse_double(cells[w + 1], lineno),
                 detail::parse_double(cells[w + 2], lineno),
                 detail::parse_double(cells[w + 3], lineno)};
    t.append(std::move(r));
  }
  return t;
}

inline Trace trace_from_json(const nlohmann::ordered_json& arr) {
  if (!arr.is_array()) throw IoError("trace JSON: expected an array of records");
  std::vector<std::string> names;
  if (!arr.empty())
    for (const auto& [k, v] : arr.front().at("metrics").items()) names.push_back(k);
  Trace t(names);
  for (const auto& o : arr) {
    TraceRecord r;
    r.step = o.at("step").get<std::size_t>();
    r.split = split_from_string(o.at("split").get<std::string>());
    r.objective = o.at("objective").get<double>();
    for (const auto& n : names) r.metrics.push_back(o.at("metrics").at(n).get<double>());
    r.weights = {o.at("w_min").get<double>(), o.at("w_mean").get<double>(),
                 o.at("w_max").get<double>(), o.at("w_sat_frac").get<double>()};
    t.append(std::move(r));
  }
  return t;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

inline void export_trace(const Trace& t, const std::filesystem::path& path,
                         TraceFormat format) {
  write_text_file(path, format == TraceFormat::Csv
                            ? trace_to_csv(t)
                            : trace_to_json(t).dump(2) + "\n");
}

inline Trace import_trace(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  if (trace_format_for(path) == TraceFormat::Json) {
    try {
      return trace_from_json(nlohmann::ordered_json::parse(text));
    } catch (const nlohmann::json::exception& e) {
      throw IoError("trace '" + path.string() + "': " + e.what());
    }
  }
  return trace_from_csv(text);
}

}  // namespace rgd
