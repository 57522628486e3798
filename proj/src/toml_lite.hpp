#pragma once

// Just enough TOML for scenario files: [table] headers, `key = value` with
// integers, floats, booleans, basic strings and flat numeric arrays, and
// '#' comments. Keys inside a table are stored as "table.key".

#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace cme::toml_lite {

using Value = std::variant<bool, long long, double, std::string, std::vector<double>>;

class Document {
 public:
  static Document parse(std::string_view text);

  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  bool has_table(const std::string& name) const;

  // Throw FormatError naming `key` when absent or of the wrong type.
  double number(const std::string& key) const;
  long long integer(const std::string& key) const;
  bool boolean(const std::string& key) const;
  std::vector<double> array(const std::string& key) const;

  double number_or(const std::string& key, double fallback) const {
    return contains(key) ? number(key) : fallback;
  }
  long long integer_or(const std::string& key, long long fallback) const {
    return contains(key) ? integer(key) : fallback;
  }

  const std::map<std::string, Value>& values() const { return values_; }

 private:
  const Value& get(const std::string& key) const;

  std::map<std::string, Value> values_;
  std::vector<std::string> tables_;
};

}  // namespace cme::toml_lite
