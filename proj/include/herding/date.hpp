#pragma once

#include <chrono>
#include <compare>
#include <optional>
#include <string>
#include <string_view>

namespace herding {

// Calendar date stored as days since 1970-01-01.
class Date {
 public:
  constexpr Date() = default;
  constexpr explicit Date(std::chrono::sys_days d)
      : days_(d.time_since_epoch().count()) {}
  static constexpr Date from_days(int days) {
    Date d;
    d.days_ = days;
    return d;
  }

  // Accepts YYYY-MM-DD, optionally followed by a 'T' or ' ' time part.
  static std::optional<Date> try_parse(std::string_view text);
  static Date parse(std::string_view text);  // throws InputError

  std::string iso() const;
  constexpr int days() const { return days_; }
  constexpr Date operator+(int n) const { return from_days(days_ + n); }

  auto operator<=>(const Date&) const = default;

 private:
  int days_ = 0;
};

}  // namespace herding
