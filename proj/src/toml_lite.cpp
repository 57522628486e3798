#include "toml_lite.hpp"

#include <algorithm>
#include <charconv>
#include <string>

#include "cme/errors.hpp"

namespace cme::toml_lite {
namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::string_view strip_comment(std::string_view line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

bool parse_number(std::string_view t, Value& out) {
  std::string cleaned;
  for (char ch : t) {
    if (ch != '_') cleaned += ch;
  }
  if (!cleaned.empty() && cleaned.front() == '+') cleaned.erase(0, 1);
  const char* b = cleaned.data();
  const char* e = b + cleaned.size();
  if (cleaned.find_first_of(".eE") == std::string::npos) {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec == std::errc() && ptr == e && !cleaned.empty()) {
      out = v;
      return true;
    }
    return false;
  }
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec == std::errc() && ptr == e) {
    out = v;
    return true;
  }
  return false;
}

Value parse_value(std::string_view raw, const std::string& key) {
  const std::string_view t = trim(raw);
  if (t.empty()) throw FormatError(key, "missing value");
  if (t == "true") return true;
  if (t == "false") return false;
  if (t.front() == '"') {
    if (t.size() < 2 || t.back() != '"') throw FormatError(key, "unterminated string");
    return std::string(t.substr(1, t.size() - 2));
  }
  if (t.front() == '[') {
    if (t.back() != ']') throw FormatError(key, "unterminated array");
    std::vector<double> arr;
    std::string_view body = t.substr(1, t.size() - 2);
    while (!trim(body).empty()) {
      const auto comma = body.find(',');
      const std::string_view item = trim(body.substr(0, comma));
      if (!item.empty()) {
        Value v;
        if (!parse_number(item, v)) throw FormatError(key, "array items must be numbers");
        arr.push_back(std::holds_alternative<long long>(v)
                          ? static_cast<double>(std::get<long long>(v))
                          : std::get<double>(v));
      }
      if (comma == std::string_view::npos) break;
      body = body.substr(comma + 1);
    }
    return arr;
  }
  Value v;
  if (!parse_number(t, v)) throw FormatError(key, "unrecognized value '" + std::string(t) + "'");
  return v;
}

}  // namespace

Document Document::parse(std::string_view text) {
  Document doc;
  std::string table;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string_view raw =
        text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    const std::string_view line = trim(strip_comment(raw));
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw FormatError(where, "malformed table header");
      table = std::string(trim(line.substr(1, line.size() - 2)));
      if (table.empty()) throw FormatError(where, "empty table name");
      doc.tables_.push_back(table);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw FormatError(where, "expected 'key = value'");
    const std::string bare(trim(line.substr(0, eq)));
    if (bare.empty()) throw FormatError(where, "empty key");
    const std::string key = table.empty() ? bare : table + "." + bare;
    if (doc.values_.count(key)) throw FormatError(key, "duplicate key");
    doc.values_[key] = parse_value(line.substr(eq + 1), key);
  }
  return doc;
}

bool Document::has_table(const std::string& name) const {
  return std::find(tables_.begin(), tables_.end(), name) != tables_.end();
}

const Value& Document::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw FormatError(key, "missing required key");
  return it->second;
}

double Document::number(const std::string& key) const {
  const Value& v = get(key);
  if (auto* d = std::get_if<double>(&v)) return *d;
  if (auto* i = std::get_if<long long>(&v)) return static_cast<double>(*i);
  throw FormatError(key, "expected a number");
}

long long Document::integer(const std::string& key) const {
  const Value& v = get(key);
  if (auto* i = std::get_if<long long>(&v)) return *i;
  throw FormatError(key, "expected an integer");
}

bool Document::boolean(const std::string& key) const {
  const Value& v = get(key);
  if (auto* b = std::get_if<bool>(&v)) return *b;
  throw FormatError(key, "expected true or false");
}

std::vector<double> Document::array(const std::string& key) const {
  const Value& v = get(key);
  if (auto* a = std::get_if<std::vector<double>>(&v)) return *a;
  throw FormatError(key, "expected an array of numbers");
}

}  // namespace cme::toml_lite
