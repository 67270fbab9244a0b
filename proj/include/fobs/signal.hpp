#pragma once

// Closed-form input signals. Every signal carries an exact derivative so the
// simulator can differentiate algebraic constraints without numeric noise.
//
// Text form, one scalar expression per component, components comma-joined:
//   sin(a*t)  exp(a*t)  poly(c0,c1,...)  const(c)
// Terms may be scaled ("2*sin(t)") and summed ("sin(t)+const(1)").

#include <cctype>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "fobs/numkit.hpp"

namespace fobs {

class ScalarSignal {
 public:
  enum class Kind { Sine, Exponential, Polynomial, Constant, Sum, Scaled };

  static ScalarSignal sine(double rate) { return ScalarSignal(Kind::Sine, {rate}); }
  static ScalarSignal exponential(double rate) { return ScalarSignal(Kind::Exponential, {rate}); }
  static ScalarSignal polynomial(std::vector<double> coeffs) { return ScalarSignal(Kind::Polynomial, std::move(coeffs)); }
  static ScalarSignal constant(double c) { return ScalarSignal(Kind::Constant, {c}); }
  static ScalarSignal sum(std::vector<ScalarSignal> terms) {
    ScalarSignal s(Kind::Sum, {});
    s.children_ = std::move(terms);
    return s;
  }
  static ScalarSignal scaled(double factor, ScalarSignal inner) {
    ScalarSignal s(Kind::Scaled, {factor});
    s.children_.push_back(std::move(inner));
    return s;
  }

  Kind kind() const { return kind_; }
  const std::vector<double>& parameters() const { return params_; }

  double value(double t) const {
    switch (kind_) {
      case Kind::Sine: return std::sin(params_[0] * t);
      case Kind::Exponential: return std::exp(params_[0] * t);
      case Kind::Polynomial: {
        double acc = 0.0;
        for (auto it = params_.rbegin(); it != params_.rend(); ++it) acc = acc * t + *it;
        return acc;
      }
      case Kind::Constant: return params_[0];
      case Kind::Sum: {
        double acc = 0.0;
        for (const auto& c : children_) acc += c.value(t);
        return acc;
      }
      case Kind::Scaled: return params_[0] * children_[0].value(t);
    }
    return 0.0;
  }

  double derivative(double t) const {
    switch (kind_) {
      case Kind::Sine: return params_[0] * std::cos(params_[0] * t);
      case Kind::Exponential: return params_[0] * std::exp(params_[0] * t);
      case Kind::Polynomial: {
        double acc = 0.0;
        for (std::size_t i = params_.size(); i-- > 1;) acc = acc * t + static_cast<double>(i) * params_[i];
        return acc;
      }
      case Kind::Constant: return 0.0;
      case Kind::Sum: {
        double acc = 0.0;
        for (const auto& c : children_) acc += c.derivative(t);
        return acc;
      }
      case Kind::Scaled: return params_[0] * children_[0].derivative(t);
    }
    return 0.0;
  }

  std::string to_string() const;

 private:
  ScalarSignal(Kind k, std::vector<double> p) : kind_(k), params_(std::move(p)) {}

  Kind kind_;
  std::vector<double> params_;
  std::vector<ScalarSignal> children_;
};

/// Vector-valued signal; one scalar expression per component.
class Signal {
 public:
  Signal() = default;
  explicit Signal(std::vector<ScalarSignal> components) : components_(std::move(components)) {}

  static Signal zero(Index dim) {
    return Signal(std::vector<ScalarSignal>(static_cast<std::size_t>(dim), ScalarSignal::constant(0.0)));
  }

  Index dimension() const { return static_cast<Index>(components_.size()); }
  const std::vector<ScalarSignal>& components() const { return components_; }

  Vector value(double t) const {
    Vector v(dimension());
    for (Index i = 0; i < dimension(); ++i) v(i) = components_[i].value(t);
    return v;
  }

  Vector derivative(double t) const {
    Vector v(dimension());
    for (Index i = 0; i < dimension(); ++i) v(i) = components_[i].derivative(t);
    return v;
  }

  std::string to_string() const {
    std::string out;
    for (std::size_t i = 0; i < components_.size(); ++i) {
      if (i) out += ",";
      out += components_[i].to_string();
    }
    return out;
  }

 private:
  std::vector<ScalarSignal> components_;
};

namespace detail {

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class SignalParser {
 public:
  explicit SignalParser(std::string_view text) : text_(text) {}

  Signal parse() {
    std::vector<ScalarSignal> comps;
    skip_ws();
    if (at_end()) fail("empty signal spec");
    comps.push_back(expression());
    skip_ws();
    while (accept(',')) {
      comps.push_back(expression());
      skip_ws();
    }
    if (!at_end()) fail("unexpected trailing input");
    return Signal(std::move(comps));
  }

 private:
  ScalarSignal expression() {
    std::vector<ScalarSignal> terms;
    terms.push_back(term());
    skip_ws();
    while (true) {
      if (accept('+')) {
        terms.push_back(term());
      } else if (peek() == '-') {
        ++pos_;
        terms.push_back(ScalarSignal::scaled(-1.0, term()));
      } else {
        break;
      }
      skip_ws();
    }
    return terms.size() == 1 ? terms.front() : ScalarSignal::sum(std::move(terms));
  }

  ScalarSignal term() {
    skip_ws();
    if (starts_number()) {
      const double factor = number();
      skip_ws();
      if (!accept('*')) fail("expected '*' after scale factor");
      return ScalarSignal::scaled(factor, atom());
    }
    if (peek() == '-') {
      ++pos_;
      return ScalarSignal::scaled(-1.0, atom());
    }
    return atom();
  }

  ScalarSignal atom() {
    skip_ws();
    const std::string name = identifier();
    skip_ws();
    if (!accept('(')) fail("expected '(' after '" + name + "'");
    ScalarSignal out = ScalarSignal::constant(0.0);
    if (name == "sin") {
      out = ScalarSignal::sine(rate());
    } else if (name == "exp") {
      out = ScalarSignal::exponential(rate());
    } else if (name == "const") {
      skip_ws();
      out = ScalarSignal::constant(number());
    } else if (name == "poly") {
      std::vector<double> coeffs;
      skip_ws();
      coeffs.push_back(number());
      skip_ws();
      while (accept(',')) {
        skip_ws();
        coeffs.push_back(number());
        skip_ws();
      }
      out = ScalarSignal::polynomial(std::move(coeffs));
    } else {
      fail("unknown signal kind '" + name + "'");
    }
    skip_ws();
    if (!accept(')')) fail("expected ')'");
    return out;
  }

  // Accepts t, -t, a*t, t*a.
  double rate() {
    skip_ws();
    double a = 1.0;
    if (peek() == 't') {
      ++pos_;
      skip_ws();
      if (accept('*')) {
        skip_ws();
        a = number();
      }
      return a;
    }
    if (peek() == '-' && pos_ + 1 < text_.size() && text_[pos_ + 1] == 't') {
      pos_ += 2;
      return -1.0;
    }
    a = number();
    skip_ws();
    if (!accept('*')) fail("expected '*t'");
    skip_ws();
    if (!accept('t')) fail("expected 't'");
    return a;
  }

  double number() {
    const std::string tmp(text_.substr(pos_));
    char* end = nullptr;
    const double v = std::strtod(tmp.c_str(), &end);
    const std::size_t used = static_cast<std::size_t>(end - tmp.c_str());
    if (used == 0) fail("expected a number");
    pos_ += used;
    if (!std::isfinite(v)) fail("non-finite number");
    return v;
  }

  std::string identifier() {
    std::string out;
    while (!at_end() && std::isalpha(static_cast<unsigned char>(peek()))) out.push_back(text_[pos_++]);
    if (out.empty()) fail("expected a signal name");
    return out;
  }

  bool starts_number() const {
    if (at_end()) return false;
    const char c = peek();
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return true;
    if ((c == '-' || c == '+') && pos_ + 1 < text_.size()) {
      const char d = text_[pos_ + 1];
      return std::isdigit(static_cast<unsigned char>(d)) || d == '.';
    }
    return false;
  }

  void skip_ws() {
    while (!at_end() && std::isspace(static_cast<unsigned char>(peek()))) ++pos_;
  }
  bool accept(char c) {
    if (!at_end() && peek() == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return at_end() ? '\0' : text_[pos_]; }
  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorCode::ParseError,
                "signal spec '" + std::string(text_) + "' at offset " + std::to_string(pos_) + ": " + msg);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string ScalarSignal::to_string() const {
  using detail::format_number;
  switch (kind_) {
    case Kind::Sine: return "sin(" + format_number(params_[0]) + "*t)";
    case Kind::Exponential: return "exp(" + format_number(params_[0]) + "*t)";
    case Kind::Polynomial: {
      std::string s = "poly(";
      for (std::size_t i = 0; i < params_.size(); ++i) s += (i ? "," : "") + format_number(params_[i]);
      return s + ")";
    }
    case Kind::Constant: return "const(" + format_number(params_[0]) + ")";
    case Kind::Sum: {
      std::string s;
      for (std::size_t i = 0; i < children_.size(); ++i) s += (i ? "+" : "") + children_[i].to_string();
      return s;
    }
    case Kind::Scaled: return format_number(params_[0]) + "*" + children_[0].to_string();
  }
  return {};
}

/// Parses the comma-joined signal grammar; an empty spec is a ParseError.
inline Signal parse_signal(std::string_view text) { return detail::SignalParser(text).parse(); }

}  // namespace fobs
