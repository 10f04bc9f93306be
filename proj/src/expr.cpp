/*
 * Copyright 2026 The ksynth Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "ksynth/expr.hpp"

#include <cctype>

#include "ksynth/dtype.hpp"

namespace ksynth {
namespace {

class ExprParser {
 public:
  ExprParser(std::string_view text, const DimBindings& dims) : text_(text), dims_(dims) {}

  std::int64_t parse() {
    const std::int64_t v = expr();
    skip_ws();
    if (pos_ != text_.size()) fail("trailing characters");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ValidationError("bad dimension expression '" + std::string(text_) + "': " + what);
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool eat(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  std::int64_t expr() {
    std::int64_t v = term();
    for (;;) {
      if (eat('+')) v += term();
      else if (eat('-')) v -= term();
      else return v;
    }
  }

  std::int64_t term() {
    std::int64_t v = factor();
    for (;;) {
      if (eat('*')) {
        v *= factor();
      } else if (eat('/')) {
        const std::int64_t d = factor();
        if (d == 0) fail("division by zero");
        if (v % d != 0) fail("inexact division " + std::to_string(v) + "/" + std::to_string(d));
        v /= d;
      } else {
        return v;
      }
    }
  }

  std::int64_t factor() {
    skip_ws();
    if (eat('(')) {
      const std::int64_t v = expr();
      if (!eat(')')) fail("missing ')'");
      return v;
    }
    if (eat('-')) return -factor();
    if (pos_ >= text_.size()) fail("unexpected end");
    const char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::int64_t v = 0;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        v = v * 10 + (text_[pos_++] - '0');
      }
      return v;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
        ++pos_;
      }
      const std::string name(text_.substr(start, pos_ - start));
      auto it = dims_.find(name);
      if (it == dims_.end()) fail("unbound dimension '" + name + "'");
      return it->second;
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  std::string_view text_;
  const DimBindings& dims_;
  std::size_t pos_ = 0;
};

}  // namespace

std::int64_t eval_dim_expr(std::string_view text, const DimBindings& dims) {
  return ExprParser(text, dims).parse();
}

}  // namespace ksynth
