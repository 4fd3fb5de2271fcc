#pragma once

// Reader for the small TOML subset used by codebook files: top-level
// `key = value` pairs, `[[name]]` array-of-table headers, basic strings with
// escapes, triple-quoted multi-line strings, integers, booleans, and arrays of
// strings. Anything else is rejected with a line number.

#include <cctype>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pstcode/error.hpp"
#include "pstcode/text.hpp"

namespace pstcode::kv {

using Value =
    std::variant<std::string, long long, bool, std::vector<std::string>>;

struct Table {
  std::map<std::string, Value> values;
  std::size_t line = 0;

  bool has(const std::string& key) const { return values.count(key) != 0; }

  template <class T>
  const T& get(const std::string& key) const {
    auto it = values.find(key);
    if (it == values.end())
      throw ParseError(line, "missing key '" + key + "'");
    if (auto* v = std::get_if<T>(&it->second)) return *v;
    throw ParseError(line, "key '" + key + "' has the wrong type");
  }

  template <class T>
  T get_or(const std::string& key, T fallback) const {
    return has(key) ? get<T>(key) : fallback;
  }
};

struct Document {
  Table root;
  std::map<std::string, std::vector<Table>> arrays;
};

namespace detail {

class Parser {
public:
  explicit Parser(std::string_view src) : src_(src) {}

  Document parse() {
    Document doc;
    Table* current = &doc.root;
    while (true) {
      skip_blank_and_comments();
      if (eof()) break;
      if (peek() == '[') {
        if (!match("[[")) fail("plain [table] headers are not supported");
        std::string name = bare_key();
        if (!match("]]")) fail("expected ']]'");
        end_of_line();
        auto& vec = doc.arrays[name];
        vec.push_back(Table{{}, line_});
        current = &vec.back();
        continue;
      }
      std::size_t key_line = line_;
      std::string key = bare_key();
      skip_inline_space();
      if (!match("=")) fail("expected '=' after key '" + key + "'");
      skip_inline_space();
      Value v = value();
      end_of_line();
      if (!current->values.emplace(key, std::move(v)).second)
        throw ParseError(key_line, "duplicate key '" + key + "'");
    }
    return doc;
  }

private:
  bool eof() const { return pos_ >= src_.size(); }
  char peek() const { return src_[pos_]; }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(line_, what);
  }

  bool match(std::string_view tok) {
    if (src_.substr(pos_, tok.size()) == tok) {
      for (char c : tok)
        if (c == '\n') ++line_;
      pos_ += tok.size();
      return true;
    }
    return false;
  }

  void advance() {
    if (src_[pos_] == '\n') ++line_;
    ++pos_;
  }

  void skip_inline_space() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) ++pos_;
  }

  void skip_comment() {
    if (!eof() && peek() == '#')
      while (!eof() && peek() != '\n') ++pos_;
  }

  void skip_blank_and_comments() {
    while (!eof()) {
      char c = peek();
      if (c == '#') {
        skip_comment();
      } else if (text::is_space(c)) {
        advance();
      } else {
        break;
      }
    }
  }

  void end_of_line() {
    skip_inline_space();
    skip_comment();
    if (!eof() && peek() == '\r') ++pos_;
    if (!eof() && peek() != '\n') fail("unexpected trailing characters");
  }

  std::string bare_key() {
    skip_inline_space();
    std::string key;
    while (!eof()) {
      char c = peek();
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-') {
        key.push_back(c);
        ++pos_;
      } else {
        break;
      }
    }
    if (key.empty()) fail("expected a key");
    return key;
  }

  Value value() {
    if (eof()) fail("expected a value");
    if (match("\"\"\"")) return multiline_string();
    if (peek() == '"') return basic_string();
    if (peek() == '[') return string_array();
    if (match("true")) return true;
    if (match("false")) return false;
    return integer();
  }

  std::string multiline_string() {
    // A newline immediately after the opening delimiter is trimmed.
    if (match("\r\n") || match("\n")) {
    }
    std::string out;
    while (true) {
      if (eof()) fail("unterminated multi-line string");
      if (match("\"\"\"")) return out;
      if (peek() == '\\') {
        out.push_back(escape());
        continue;
      }
      out.push_back(peek());
      advance();
    }
  }

  std::string basic_string() {
    ++pos_;  // opening quote
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') fail("unterminated string");
      char c = peek();
      if (c == '"') {
        ++pos_;
        return out;
      }
      if (c == '\\') {
        out.push_back(escape());
        continue;
      }
      out.push_back(c);
      ++pos_;
    }
  }

  char escape() {
    ++pos_;  // backslash
    if (eof()) fail("dangling escape");
    char c = peek();
    ++pos_;
    switch (c) {
      case 'n': return '\n';
      case 't': return '\t';
      case 'r': return '\r';
      case '"': return '"';
      case '\\': return '\\';
      default: fail(std::string("unsupported escape \\") + c);
    }
  }

  std::vector<std::string> string_array() {
    ++pos_;  // '['
    std::vector<std::string> out;
    while (true) {
      skip_blank_and_comments();
      if (eof()) fail("unterminated array");
      if (peek() == ']') {
        ++pos_;
        return out;
      }
      if (peek() != '"') fail("arrays may only contain strings");
      out.push_back(basic_string());
      skip_blank_and_comments();
      if (!eof() && peek() == ',') ++pos_;
    }
  }

  long long integer() {
    std::size_t start = pos_;
    if (!eof() && (peek() == '-' || peek() == '+')) ++pos_;
    while (!eof() && std::isdigit(static_cast<unsigned char>(peek()))) ++pos_;
    if (pos_ == start) fail("unsupported value");
    try {
      return std::stoll(std::string(src_.substr(start, pos_ - start)));
    } catch (const std::exception&) {
      fail("bad integer");
    }
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

}  // namespace detail

inline Document parse(std::string_view src) {
  return detail::Parser(src).parse();
}

}  // namespace pstcode::kv
