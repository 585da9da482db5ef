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

// Strict-schema JSON reading: unknown keys and type mismatches are errors
// that name the JSON path and, where it can be located, the source line.

#include <cstddef>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "rgd/errors.hpp"

namespace rgd {

class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

using Json = nlohmann::ordered_json;

/// Raw configuration text, kept for mapping keys back to line numbers.
class ConfigSource {
 public:
  ConfigSource(std::string name, std::string text)
      : name_(std::move(name)), text_(std::move(text)) {}

  const std::string& name() const noexcept { return name_; }
  const std::string& text() const noexcept { return text_; }

  std::size_t line_of_offset(std::size_t offset) const {
    std::size_t line = 1;
    for (std::size_t i = 0; i < offset && i < text_.size(); ++i)
      if (text_[i] == '\n') ++line;
    return line;
  }

  /// Line of the first occurrence of "key", or 0 when absent.
  std::size_t line_of_key(std::string_view key) const {
    const std::string quoted = "\"" + std::string(key) + "\"";
    const auto pos = text_.find(quoted);
    return pos == std::string::npos ? 0 : line_of_offset(pos);
  }

  Json parse() const {
    try {
      return Json::parse(text_);
    } catch (const Json::parse_error& e) {
      throw ConfigError(name_ + ":" + std::to_string(line_of_offset(e.byte)) +
                        ": malformed JSON: " + e.what());
    }
  }

 private:
  std::string name_;
  std::string text_;
};

/// Reads one JSON object field by field, then rejects anything unread.
class ObjectReader {
 public:
  ObjectReader(const Json& obj, std::string path,
               std::shared_ptr<const ConfigSource> src)
      : obj_(obj), path_(std::move(path)), src_(std::move(src)) {
    if (!obj_.is_object()) fail(path_, "expected an object");
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  template <class T>
  T required(const std::string& key) {
    if (!obj_.contains(key)) fail(key, "missing required key");
    return get<T>(key);
  }

  template <class T>
  T optional(const std::string& key, T fallback) {
    if (!obj_.contains(key)) return fallback;
    return get<T>(key);
  }

  ObjectReader child(const std::string& key) {
    if (!obj_.contains(key)) fail(key, "missing required section");
    seen_.insert(key);
    return ObjectReader(obj_.at(key), join(key), src_);
  }

  const Json& raw(const std::string& key) {
    seen_.insert(key);
    return obj_.at(key);
  }

  void finish() const {
    for (const auto& [k, v] : obj_.items())
      if (!seen_.count(k)) fail(k, "unknown key");
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    std::string where = src_ ? src_->name() : "config";
    const std::size_t line = src_ ? src_->line_of_key(key) : 0;
    if (line) where += ":" + std::to_string(line);
    throw ConfigError(where + ": " + join(key) + ": " + what);
  }

  const std::string& path() const noexcept { return path_; }

 private:
  std::string join(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  template <class T>
  T get(const std::string& key) {
    seen_.insert(key);
    const Json& v = obj_.at(key);
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) fail(key, "expected a number");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) fail(key, "expected a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<long long>() < 0))
          fail(key, "expected a non-negative integer");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) fail(key, "expected a string");
      }
      return v.get<T>();
    } catch (const Json::exception& e) {
      fail(key, e.what());
    }
  }

  Json obj_;
  std::string path_;
  std::shared_ptr<const ConfigSource> src_;
  std::set<std::string> seen_;
};

}  // namespace rgd
