// Copyright 2026 The Lithe Authors
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

#include "lithe/schema.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

namespace lithe::schema {

namespace {

constexpr std::array<std::pair<std::string_view, ScalarType>, 8> kScalars{{
    {"u8", ScalarType::u8},
    {"u16", ScalarType::u16},
    {"u32", ScalarType::u32},
    {"u64", ScalarType::u64},
    {"i32", ScalarType::i32},
    {"i64", ScalarType::i64},
    {"f32", ScalarType::f32},
    {"f64", ScalarType::f64},
}};

enum class TokenKind { identifier, number, punct, newline, end };

struct Token {
  TokenKind kind;
  std::string text;
  std::size_t line;
  std::size_t column;
};

std::string describe(const Token& tok) {
  switch (tok.kind) {
    case TokenKind::newline:
      return "end of line";
    case TokenKind::end:
      return "end of input";
    default:
      return "'" + tok.text + "'";
  }
}

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t line = 1;
  std::size_t col = 1;
  std::size_t i = 0;
  auto is_ident_start = [](char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
  };
  auto is_ident = [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
  };
  while (i < text.size()) {
    const char c = text[i];
    if (c == '\n') {
      out.push_back({TokenKind::newline, "\n", line, col});
      ++i;
      ++line;
      col = 1;
    } else if (c == '#') {
      while (i < text.size() && text[i] != '\n') {
        ++i;
        ++col;
      }
    } else if (c == ' ' || c == '\t' || c == '\r') {
      ++i;
      ++col;
    } else if (is_ident_start(c)) {
      const std::size_t start = i;
      const std::size_t start_col = col;
      while (i < text.size() && is_ident(text[i])) {
        ++i;
        ++col;
      }
      out.push_back({TokenKind::identifier, std::string(text.substr(start, i - start)), line,
                     start_col});
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      const std::size_t start = i;
      const std::size_t start_col = col;
      while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
        ++i;
        ++col;
      }
      out.push_back(
          {TokenKind::number, std::string(text.substr(start, i - start)), line, start_col});
    } else if (c == '{' || c == '}' || c == ':' || c == ',' || c == '[' || c == ']') {
      out.push_back({TokenKind::punct, std::string(1, c), line, col});
      ++i;
      ++col;
    } else {
      throw SchemaError(std::string("unexpected character '") + c + "'", line, col);
    }
  }
  out.push_back({TokenKind::end, "", line, col});
  return out;
}

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : tokens_(std::move(tokens)) {}

  SchemaDef run() {
    SchemaDef def;
    bool seen_segment = false;
    bool seen_entity = false;
    for (;;) {
      skip_newlines();
      const Token& tok = peek();
      if (tok.kind == TokenKind::end) {
        break;
      }
      if (tok.kind != TokenKind::identifier) {
        fail("expected a declaration keyword, found " + describe(tok), tok);
      }
      if (tok.text == "segment") {
        if (seen_segment || seen_entity) {
          fail("'segment' must appear once, before any declaration", tok);
        }
        seen_segment = true;
        parse_segment(def);
      } else if (tok.text == "record") {
        seen_entity = true;
        parse_record(def);
      } else if (tok.text == "cell") {
        seen_entity = true;
        parse_cell(def);
      } else if (tok.text == "ring") {
        seen_entity = true;
        parse_ring(def);
      } else if (tok.text == "block") {
        seen_entity = true;
        parse_block(def);
      } else {
        fail("unknown declaration '" + tok.text + "'", tok);
      }
      end_statement();
    }
    return def;
  }

 private:
  const Token& peek() const { return tokens_[pos_]; }

  const Token& next() {
    const Token& tok = tokens_[pos_];
    if (tok.kind != TokenKind::end) {
      ++pos_;
    }
    return tok;
  }

  [[noreturn]] static void fail(const std::string& msg, const Token& at) {
    throw SchemaError(msg, at.line, at.column);
  }

  void skip_newlines() {
    while (peek().kind == TokenKind::newline) {
      ++pos_;
    }
  }

  void end_statement() {
    const Token& tok = peek();
    if (tok.kind != TokenKind::newline && tok.kind != TokenKind::end) {
      fail("expected end of line, found " + describe(tok), tok);
    }
  }

  const Token& expect_identifier(std::string_view what) {
    const Token& tok = next();
    if (tok.kind != TokenKind::identifier) {
      fail("expected " + std::string(what) + ", found " + describe(tok), tok);
    }
    return tok;
  }

  void expect_keyword(std::string_view word) {
    const Token& tok = next();
    if (tok.kind != TokenKind::identifier || tok.text != word) {
      fail("expected '" + std::string(word) + "', found " + describe(tok), tok);
    }
  }

  void expect_punct(char c) {
    const Token& tok = next();
    if (tok.kind != TokenKind::punct || tok.text[0] != c) {
      fail(std::string("expected '") + c + "', found " + describe(tok), tok);
    }
  }

  std::uint32_t expect_number(std::string_view what) {
    const Token& tok = next();
    if (tok.kind != TokenKind::number) {
      fail("expected " + std::string(what) + ", found " + describe(tok), tok);
    }
    return to_u32(tok.text, tok);
  }

  static std::uint32_t to_u32(std::string_view digits, const Token& at) {
    std::uint32_t value = 0;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
    if (ec != std::errc{} || ptr != digits.data() + digits.size()) {
      fail("number out of range: " + std::string(digits), at);
    }
    return value;
  }

  ScalarType expect_scalar() {
    const Token& tok = next();
    if (tok.kind != TokenKind::identifier) {
      fail("expected a scalar type, found " + describe(tok), tok);
    }
    const auto type = parse_scalar(tok.text);
    if (!type) {
      fail("unknown scalar type '" + tok.text + "'", tok);
    }
    return *type;
  }

  void claim_entity_name(const Token& tok) {
    if (!entity_names_.insert(tok.text).second) {
      fail("duplicate name '" + tok.text + "'", tok);
    }
  }

  const RecordDef& resolve_record(const SchemaDef& def, const Token& tok) {
    const RecordDef* rec = def.find_record(tok.text);
    if (rec == nullptr) {
      fail("unknown record '" + tok.text + "'", tok);
    }
    return *rec;
  }

  void parse_segment(SchemaDef& def) {
    next();
    def.segment_name = expect_identifier("segment name").text;
    const Token& ver = expect_identifier("version (v<number>)");
    if (ver.text.size() < 2 || ver.text[0] != 'v') {
      fail("expected version of the form v<number>, found " + describe(ver), ver);
    }
    for (std::size_t i = 1; i < ver.text.size(); ++i) {
      if (!std::isdigit(static_cast<unsigned char>(ver.text[i]))) {
        fail("expected version of the form v<number>, found " + describe(ver), ver);
      }
    }
    def.version = to_u32(std::string_view(ver.text).substr(1), ver);
  }

  void parse_record(SchemaDef& def) {
    next();
    const Token& name = expect_identifier("record name");
    if (!record_names_.insert(name.text).second) {
      fail("duplicate name '" + name.text + "'", name);
    }
    RecordDef rec{name.text, {}};
    std::set<std::string, std::less<>> field_names;
    expect_punct('{');
    skip_newlines();
    if (peek().kind == TokenKind::punct && peek().text == "}") {
      fail("record '" + rec.name + "' has no fields", peek());
    }
    for (;;) {
      skip_newlines();
      const Token& field = expect_identifier("field name");
      if (!field_names.insert(field.text).second) {
        fail("duplicate name '" + field.text + "' in record '" + rec.name + "'", field);
      }
      expect_punct(':');
      FieldDef fd{field.text, expect_scalar(), {}};
      if (peek().kind == TokenKind::identifier) {
        fd.unit = next().text;
      }
      rec.fields.push_back(std::move(fd));
      skip_newlines();
      const Token& sep = next();
      if (sep.kind == TokenKind::punct && sep.text == ",") {
        continue;
      }
      if (sep.kind == TokenKind::punct && sep.text == "}") {
        break;
      }
      fail("expected ',' or '}', found " + describe(sep), sep);
    }
    def.records.push_back(std::move(rec));
  }

  void parse_cell(SchemaDef& def) {
    next();
    const Token& name = expect_identifier("cell name");
    claim_entity_name(name);
    expect_punct(':');
    const Token& rec = expect_identifier("record type");
    resolve_record(def, rec);
    expect_keyword("seqlock");
    def.cells.push_back({name.text, rec.text});
  }

  void parse_ring(SchemaDef& def) {
    next();
    const Token& name = expect_identifier("ring name");
    claim_entity_name(name);
    expect_punct(':');
    const Token& rec = expect_identifier("record type");
    resolve_record(def, rec);
    expect_keyword("capacity");
    const Token& cap_tok = peek();
    const std::uint32_t capacity = expect_number("ring capacity");
    if (capacity < kMinRingCapacity) {
      fail("ring capacity must be at least " + std::to_string(kMinRingCapacity) + ", got " +
               std::to_string(capacity),
           cap_tok);
    }
    def.rings.push_back({name.text, rec.text, capacity});
  }

  void parse_block(SchemaDef& def) {
    next();
    const Token& name = expect_identifier("block name");
    claim_entity_name(name);
    expect_punct(':');
    const ScalarType type = expect_scalar();
    expect_punct('[');
    const Token& len_tok = peek();
    const std::uint32_t length = expect_number("block length");
    if (length == 0) {
      fail("block length must be positive", len_tok);
    }
    expect_punct(']');
    def.blocks.push_back({name.text, type, length});
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  std::set<std::string, std::less<>> record_names_;
  std::set<std::string, std::less<>> entity_names_;
};

}  // namespace

std::size_t scalar_size(ScalarType type) noexcept {
  switch (type) {
    case ScalarType::u8:
      return 1;
    case ScalarType::u16:
      return 2;
    case ScalarType::u32:
    case ScalarType::i32:
    case ScalarType::f32:
      return 4;
    case ScalarType::u64:
    case ScalarType::i64:
    case ScalarType::f64:
      return 8;
  }
  return 0;
}

std::string_view scalar_name(ScalarType type) noexcept {
  for (const auto& [name, t] : kScalars) {
    if (t == type) {
      return name;
    }
  }
  return "?";
}

std::optional<ScalarType> parse_scalar(std::string_view name) noexcept {
  for (const auto& [n, t] : kScalars) {
    if (n == name) {
      return t;
    }
  }
  return std::nullopt;
}

const RecordDef* SchemaDef::find_record(std::string_view name) const noexcept {
  for (const auto& rec : records) {
    if (rec.name == name) {
      return &rec;
    }
  }
  return nullptr;
}

SchemaError::SchemaError(const std::string& what, std::size_t line, std::size_t column)
    : std::runtime_error(line == 0 ? what
                                   : std::to_string(line) + ":" + std::to_string(column) +
                                         ": " + what),
      line_(line),
      column_(column) {}

SchemaDef parse_schema(std::string_view text) {
  return Parser(tokenize(text)).run();
}

SchemaDef load_schema_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw SchemaError("cannot open schema file " + path.string(), 0, 0);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_schema(ss.str());
}

}  // namespace lithe::schema
