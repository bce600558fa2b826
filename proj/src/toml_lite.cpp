#include "salstab/toml_lite.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace salstab::toml {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// strips a trailing comment that is not inside a string literal
std::string strip_comment(const std::string& s) {
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') in_str = !in_str;
    if (s[i] == '#' && !in_str) return s.substr(0, i);
  }
  return s;
}

bool looks_like_int(const std::string& s) {
  if (s.empty()) return false;
  std::size_t i = (s[0] == '+' || s[0] == '-') ? 1 : 0;
  if (i == s.size()) return false;
  for (; i < s.size(); ++i)
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  return true;
}

Value parse_scalar(const std::string& raw, int lineno) {
  std::string s = trim(raw);
  if (s.empty())
    throw std::runtime_error("line " + std::to_string(lineno) + ": empty value");
  if (s.front() == '"') {
    if (s.size() < 2 || s.back() != '"')
      throw std::runtime_error("line " + std::to_string(lineno) +
                               ": unterminated string");
    return Value{s.substr(1, s.size() - 2)};
  }
  if (s == "true") return Value{true};
  if (s == "false") return Value{false};
  if (looks_like_int(s)) return Value{static_cast<std::int64_t>(std::stoll(s))};
  try {
    std::size_t used = 0;
    double d = std::stod(s, &used);
    if (used == s.size()) return Value{d};
  } catch (const std::exception&) {
  }
  throw std::runtime_error("line " + std::to_string(lineno) +
                           ": cannot parse value '" + s + "'");
}

Value parse_array(const std::string& inner, int lineno) {
  std::vector<std::string> parts;
  std::string cur;
  bool in_str = false;
  for (char ch : inner) {
    if (ch == '"') in_str = !in_str;
    if (ch == ',' && !in_str) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!trim(cur).empty()) parts.push_back(cur);

  std::vector<Value> scalars;
  for (const auto& p : parts) scalars.push_back(parse_scalar(p, lineno));
  if (scalars.empty()) return Value{std::vector<double>{}};

  if (std::holds_alternative<std::string>(scalars[0].data)) {
    std::vector<std::string> out;
    for (auto& v : scalars) out.push_back(v.as_string());
    return Value{out};
  }
  bool all_int = true;
  for (auto& v : scalars)
    if (!std::holds_alternative<std::int64_t>(v.data)) all_int = false;
  if (all_int) {
    std::vector<std::int64_t> out;
    for (auto& v : scalars) out.push_back(v.as_int());
    return Value{out};
  }
  std::vector<double> out;
  for (auto& v : scalars) out.push_back(v.as_double());
  return Value{out};
}

}  // namespace

std::int64_t Value::as_int() const {
  if (auto* p = std::get_if<std::int64_t>(&data)) return *p;
  throw std::runtime_error("TOML value is not an integer");
}

double Value::as_double() const {
  if (auto* p = std::get_if<double>(&data)) return *p;
  if (auto* p = std::get_if<std::int64_t>(&data))
    return static_cast<double>(*p);
  throw std::runtime_error("TOML value is not a number");
}

bool Value::as_bool() const {
  if (auto* p = std::get_if<bool>(&data)) return *p;
  throw std::runtime_error("TOML value is not a boolean");
}

const std::string& Value::as_string() const {
  if (auto* p = std::get_if<std::string>(&data)) return *p;
  throw std::runtime_error("TOML value is not a string");
}

std::vector<double> Value::as_double_array() const {
  if (auto* p = std::get_if<std::vector<double>>(&data)) return *p;
  if (auto* p = std::get_if<std::vector<std::int64_t>>(&data))
    return std::vector<double>(p->begin(), p->end());
  throw std::runtime_error("TOML value is not a numeric array");
}

std::vector<std::int64_t> Value::as_int_array() const {
  if (auto* p = std::get_if<std::vector<std::int64_t>>(&data)) return *p;
  throw std::runtime_error("TOML value is not an integer array");
}

std::vector<std::string> Value::as_string_array() const {
  if (auto* p = std::get_if<std::vector<std::string>>(&data)) return *p;
  throw std::runtime_error("TOML value is not a string array");
}

Document Document::parse(const std::string& text) {
  Document doc;
  std::istringstream in(text);
  std::string line;
  std::string table;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::runtime_error("line " + std::to_string(lineno) +
                                 ": malformed table header");
      table = trim(line.substr(1, line.size() - 2));
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("line " + std::to_string(lineno) +
                               ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    std::string full = table.empty() ? key : table + "." + key;
    if (value.size() >= 2 && value.front() == '[' && value.back() == ']') {
      doc.entries_[full] = parse_array(value.substr(1, value.size() - 2), lineno);
    } else {
      doc.entries_[full] = parse_scalar(value, lineno);
    }
  }
  return doc;
}

Document Document::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

bool Document::contains(const std::string& key) const {
  return entries_.count(key) > 0;
}

const Value& Document::at(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end())
    throw std::runtime_error("missing config key: " + key);
  return it->second;
}

std::int64_t Document::get_int(const std::string& key,
                               std::int64_t fallback) const {
  return contains(key) ? at(key).as_int() : fallback;
}

double Document::get_double(const std::string& key, double fallback) const {
  return contains(key) ? at(key).as_double() : fallback;
}

bool Document::get_bool(const std::string& key, bool fallback) const {
  return contains(key) ? at(key).as_bool() : fallback;
}

std::string Document::get_string(const std::string& key,
                                 const std::string& fallback) const {
  return contains(key) ? at(key).as_string() : fallback;
}

}  // namespace salstab::toml
