#pragma once

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace corrdyn {

// Calendar date stored as a serial day count (days since 1970-01-01).
// Trading-time arithmetic uses a weekday-only calendar, 252 days per year.
class Date {
  public:
    Date() = default;
    explicit Date(std::int64_t serial) : serial_(serial) {}
    Date(int year, int month, int day);

    static Date parse(const std::string& iso);  // "YYYY-MM-DD"

    std::int64_t serial() const { return serial_; }
    std::string to_string() const;

    int weekday() const;  // 0 = Monday ... 6 = Sunday
    bool is_business_day() const { return weekday() < 5; }
    Date next_business_day() const;
    Date add_business_days(int n) const;

    auto operator<=>(const Date&) const = default;

  private:
    std::int64_t serial_ = 0;
};

// Number of business days in (a, b], negative if b < a.
std::int64_t business_days_between(Date a, Date b);

// Year fraction on the 252-trading-day convention.
double year_fraction(Date from, Date to);

}  // namespace corrdyn
