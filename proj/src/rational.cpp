#include "covbal/rational.hpp"

#include <charconv>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace covbal {

namespace {

using Wide = __int128;

std::int64_t narrow(Wide v, const char* what) {
  if (v > INT64_MAX || v < INT64_MIN) throw std::overflow_error(std::string("rational overflow in ") + what);
  return static_cast<std::int64_t>(v);
}

Wide wide_gcd(Wide a, Wide b) {
  if (a < 0) a = -a;
  if (b < 0) b = -b;
  while (b != 0) {
    Wide t = a % b;
    a = b;
    b = t;
  }
  return a;
}

std::int64_t parse_int(std::string_view text, const char* what) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw std::invalid_argument(std::string("bad ") + what + " in rational literal");
  return v;
}

}  // namespace

Rational::Rational(std::int64_t num, std::int64_t den) {
  if (den == 0) throw std::invalid_argument("rational denominator is zero");
  if (den < 0) {
    if (num == INT64_MIN || den == INT64_MIN) throw std::overflow_error("rational overflow in construction");
    num = -num;
    den = -den;
  }
  std::int64_t g = std::gcd(num, den);
  num_ = num / g;
  den_ = den / g;
}

Rational Rational::parse(std::string_view text) {
  if (text.empty()) throw std::invalid_argument("empty rational literal");
  if (auto slash = text.find('/'); slash != std::string_view::npos) {
    std::int64_t n = parse_int(text.substr(0, slash), "numerator");
    std::int64_t d = parse_int(text.substr(slash + 1), "denominator");
    return Rational(n, d);
  }
  if (auto dot = text.find('.'); dot != std::string_view::npos) {
    std::string_view whole = text.substr(0, dot);
    std::string_view frac = text.substr(dot + 1);
    if (frac.empty() || frac.size() > 18) throw std::invalid_argument("bad decimal rational literal");
    bool negative = !whole.empty() && whole.front() == '-';
    if (negative || (!whole.empty() && whole.front() == '+')) whole.remove_prefix(1);
    std::int64_t ip = whole.empty() ? 0 : parse_int(whole, "integer part");
    std::int64_t fp = parse_int(frac, "fraction part");
    if (ip < 0 || fp < 0) throw std::invalid_argument("bad decimal rational literal");
    Wide den = 1;
    for (std::size_t i = 0; i < frac.size(); ++i) den *= 10;
    Wide num = Wide(ip) * den + fp;
    if (negative) num = -num;
    Wide g = wide_gcd(num, den);
    if (g == 0) g = 1;
    return Rational(narrow(num / g, "parse"), narrow(den / g, "parse"));
  }
  return Rational(parse_int(text, "integer"), 1);
}

std::string Rational::str() const {
  if (den_ == 1) return std::to_string(num_);
  return std::to_string(num_) + "/" + std::to_string(den_);
}

Rational Rational::operator-() const {
  Rational r;
  r.num_ = narrow(-Wide(num_), "negation");
  r.den_ = den_;
  return r;
}

Rational& Rational::operator+=(const Rational& o) {
  std::int64_t g = std::gcd(den_, o.den_);
  Wide scale = o.den_ / g;
  Wide num = Wide(num_) * scale + Wide(o.num_) * (den_ / g);
  Wide den = Wide(den_) * scale;
  Wide r = wide_gcd(num, den);
  if (r == 0) r = 1;
  num_ = narrow(num / r, "addition");
  den_ = narrow(den / r, "addition");
  return *this;
}

Rational& Rational::operator-=(const Rational& o) { return *this += -o; }

Rational& Rational::operator*=(const Rational& o) {
  std::int64_t g1 = std::gcd(num_, o.den_);
  std::int64_t g2 = std::gcd(o.num_, den_);
  Wide num = Wide(num_ / g1) * (o.num_ / g2);
  Wide den = Wide(den_ / g2) * (o.den_ / g1);
  num_ = narrow(num, "multiplication");
  den_ = narrow(den, "multiplication");
  return *this;
}

Rational& Rational::operator/=(const Rational& o) {
  if (o.num_ == 0) throw std::domain_error("rational division by zero");
  Rational inv;
  inv.num_ = o.den_;
  inv.den_ = o.num_;
  if (inv.den_ < 0) {
    inv.num_ = -inv.num_;
    inv.den_ = -inv.den_;
  }
  return *this *= inv;
}

std::strong_ordering Rational::operator<=>(const Rational& o) const {
  Wide lhs = Wide(num_) * o.den_;
  Wide rhs = Wide(o.num_) * den_;
  if (lhs < rhs) return std::strong_ordering::less;
  if (lhs > rhs) return std::strong_ordering::greater;
  return std::strong_ordering::equal;
}

std::ostream& operator<<(std::ostream& os, const Rational& r) { return os << r.str(); }

std::int64_t common_denominator(const Rational* values, std::size_t count) {
  Wide q = 1;
  for (std::size_t i = 0; i < count; ++i) {
    std::int64_t d = values[i].den();
    q = q / wide_gcd(q, d) * d;
    if (q > INT64_MAX) throw std::overflow_error("common denominator overflow");
  }
  return static_cast<std::int64_t>(q);
}

}  // namespace covbal
