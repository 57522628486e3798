#include "cme/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>

#include "cme/errors.hpp"

namespace cme {
namespace {

class Tokenizer {
 public:
  explicit Tokenizer(std::string_view text) : text_(text) {}

  // Next whitespace-delimited token, or empty at end of input.
  std::string_view next() {
    while (pos_ < text_.size() && is_space(text_[pos_])) ++pos_;
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !is_space(text_[pos_])) ++pos_;
    return text_.substr(start, pos_ - start);
  }

  // Like next(), but skips PGM '#' comments.
  std::string_view next_skipping_comments() {
    for (;;) {
      while (pos_ < text_.size() && is_space(text_[pos_])) ++pos_;
      if (pos_ < text_.size() && text_[pos_] == '#') {
        while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
        continue;
      }
      return next();
    }
  }

 private:
  static bool is_space(char ch) {
    return ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '\f' || ch == '\v';
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

std::size_t parse_count(std::string_view tok, const std::string& field) {
  std::size_t value = 0;
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, value);
  if (tok.empty() || ec != std::errc() || ptr != end) {
    throw FormatError(field, "expected a non-negative integer, got '" + std::string(tok) + "'");
  }
  return value;
}

void append_double(std::string& out, double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

}  // namespace

FeatureMap parse_feature_map(std::string_view text) {
  // The header must sit alone on the first line.
  const std::size_t eol = std::min(text.find('\n'), text.size());
  Tokenizer head(text.substr(0, eol));
  const std::size_t h = parse_count(head.next(), "header.h");
  const std::size_t w = parse_count(head.next(), "header.w");
  const std::size_t c = parse_count(head.next(), "header.c");
  if (h == 0 || w == 0 || c == 0) {
    throw FormatError("header", "dimensions must be positive");
  }
  if (!head.next().empty()) throw FormatError("header", "trailing tokens after 'h w c'");
  Tokenizer tok(text.substr(eol));

  FeatureMap fm(h, w, c);
  const std::size_t n = fm.data.size();
  for (std::size_t k = 0; k < n; ++k) {
    const std::string where = "value " + std::to_string(k + 1);
    const std::string_view t = tok.next();
    if (t.empty()) {
      throw FormatError(where, "missing; header declares " + std::to_string(n) + " values");
    }
    double v = 0.0;
    const auto* end = t.data() + t.size();
    auto [ptr, ec] = std::from_chars(t.data(), end, v);
    if (ec != std::errc() || ptr != end) {
      throw FormatError(where, "not a decimal number: '" + std::string(t) + "'");
    }
    if (!std::isfinite(v)) throw FormatError(where, "non-finite value");
    fm.data[k] = v;
  }
  if (!tok.next().empty()) {
    throw FormatError("value " + std::to_string(n + 1),
                      "extra data beyond the declared " + std::to_string(n) + " values");
  }
  return fm;
}

std::string format_feature_map(const FeatureMap& fm) {
  fm.validate();
  std::string out;
  out.reserve(fm.data.size() * 24 + 32);
  out += std::to_string(fm.height) + ' ' + std::to_string(fm.width) + ' ' +
         std::to_string(fm.channels) + '\n';
  for (std::size_t i = 0; i < fm.pixels(); ++i) {
    auto px = fm.pixel(i);
    for (std::size_t k = 0; k < px.size(); ++k) {
      if (k) out += ' ';
      append_double(out, px[k]);
    }
    out += '\n';
  }
  return out;
}

FeatureMap load_feature_map(const std::filesystem::path& path) {
  return parse_feature_map(read_text_file(path));
}

void save_feature_map(const FeatureMap& fm, const std::filesystem::path& path) {
  write_file_atomic(path, format_feature_map(fm));
}

std::string format_mask_pgm(const Mask& mask) {
  mask.validate();
  std::string out = "P2\n" + std::to_string(mask.width) + ' ' + std::to_string(mask.height) +
                    "\n255\n";
  for (std::size_t y = 0; y < mask.height; ++y) {
    for (std::size_t x = 0; x < mask.width; ++x) {
      if (x) out += ' ';
      const auto level = static_cast<int>(std::floor(255.0 * mask.at(y, x) + 0.5));
      out += std::to_string(level);
    }
    out += '\n';
  }
  return out;
}

void save_mask_pgm(const Mask& mask, const std::filesystem::path& path) {
  write_file_atomic(path, format_mask_pgm(mask));
}

Mask parse_mask_pgm(std::string_view text) {
  Tokenizer tok(text);
  if (tok.next_skipping_comments() != "P2") throw FormatError("magic", "expected 'P2'");
  const std::size_t w = parse_count(tok.next_skipping_comments(), "width");
  const std::size_t h = parse_count(tok.next_skipping_comments(), "height");
  const std::size_t maxval = parse_count(tok.next_skipping_comments(), "maxval");
  if (maxval == 0) throw FormatError("maxval", "must be positive");

  Mask m(h, w);
  for (std::size_t k = 0; k < m.data.size(); ++k) {
    const std::string where = "pixel " + std::to_string(k + 1);
    const std::string_view t = tok.next_skipping_comments();
    if (t.empty()) throw FormatError(where, "missing");
    const std::size_t level = parse_count(t, where);
    if (level > maxval) throw FormatError(where, "exceeds maxval");
    m.data[k] = static_cast<double>(level) / static_cast<double>(maxval);
  }
  return m;
}

Mask load_mask_pgm(const std::filesystem::path& path) {
  return parse_mask_pgm(read_text_file(path));
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename onto '" + path.string() + "'");
  }
}

}  // namespace cme
