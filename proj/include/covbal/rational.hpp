#pragma once

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>

namespace covbal {

/* Exact rational on int64. Always kept in lowest terms with a positive
 * denominator, so equality is plain member comparison and hashing the pair
 * is sound. Arithmetic that would leave int64 after reduction throws
 * std::overflow_error instead of wrapping. */
class Rational {
 public:
  constexpr Rational() = default;
  constexpr Rational(std::int64_t value) : num_(value), den_(1) {}  // NOLINT: implicit on purpose
  Rational(std::int64_t num, std::int64_t den);

  // Accepts "7", "-3/10", and decimal literals such as "0.25" (exact).
  static Rational parse(std::string_view text);

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }
  bool is_zero() const { return num_ == 0; }
  double value() const { return static_cast<double>(num_) / static_cast<double>(den_); }
  std::string str() const;

  Rational operator-() const;
  Rational& operator+=(const Rational& o);
  Rational& operator-=(const Rational& o);
  Rational& operator*=(const Rational& o);
  Rational& operator/=(const Rational& o);

  friend Rational operator+(Rational a, const Rational& b) { return a += b; }
  friend Rational operator-(Rational a, const Rational& b) { return a -= b; }
  friend Rational operator*(Rational a, const Rational& b) { return a *= b; }
  friend Rational operator/(Rational a, const Rational& b) { return a /= b; }

  friend bool operator==(const Rational&, const Rational&) = default;
  std::strong_ordering operator<=>(const Rational& o) const;

 private:
  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

std::ostream& operator<<(std::ostream& os, const Rational& r);

// Least common multiple of the reduced denominators. Used as the exact
// integer grid that every imbalance increment lives on.
std::int64_t common_denominator(const Rational* values, std::size_t count);

}  // namespace covbal
