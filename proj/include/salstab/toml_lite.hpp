#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace salstab::toml {

// Small TOML subset: [table] headers, key = value with strings, integers,
// floats, booleans, and flat arrays of those; # comments. Enough for the
// experiment config schema; no nested tables or multi-line values.
struct Value {
  std::variant<std::int64_t, double, bool, std::string,
               std::vector<std::int64_t>, std::vector<double>,
               std::vector<std::string>>
      data;

  std::int64_t as_int() const;
  double as_double() const;  // accepts integer values too
  bool as_bool() const;
  const std::string& as_string() const;
  std::vector<double> as_double_array() const;
  std::vector<std::int64_t> as_int_array() const;
  std::vector<std::string> as_string_array() const;
};

class Document {
 public:
  static Document parse(const std::string& text);
  static Document parse_file(const std::string& path);

  bool contains(const std::string& dotted_key) const;
  const Value& at(const std::string& dotted_key) const;

  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_string(const std::string& key,
                         const std::string& fallback) const;

 private:
  std::map<std::string, Value> entries_;  // "table.key" -> value
};

}  // namespace salstab::toml
