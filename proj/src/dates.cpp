#include "corrdyn/dates.hpp"

#include <array>
#include <cstdio>

namespace corrdyn {

namespace {

// Howard Hinnant's civil date algorithms.
std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

std::array<int, 3> civil_from_days(std::int64_t z) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    return {static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

}  // namespace

Date::Date(int year, int month, int day) : serial_(days_from_civil(year, month, day)) {
    const auto [y, m, d] = civil_from_days(serial_);
    if (y != year || m != month || d != day)
        throw std::invalid_argument("Date: invalid year/month/day");
}

Date Date::parse(const std::string& iso) {
    int y = 0, m = 0, d = 0;
    char dash1 = 0, dash2 = 0;
    if (std::sscanf(iso.c_str(), "%d%c%d%c%d", &y, &dash1, &m, &dash2, &d) != 5 ||
        dash1 != '-' || dash2 != '-')
        throw std::invalid_argument("Date: cannot parse '" + iso + "' as YYYY-MM-DD");
    return Date(y, m, d);
}

std::string Date::to_string() const {
    const auto [y, m, d] = civil_from_days(serial_);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
    return buf;
}

int Date::weekday() const {
    // 1970-01-01 was a Thursday (weekday 3 in Monday-based indexing).
    std::int64_t w = (serial_ + 3) % 7;
    if (w < 0) w += 7;
    return static_cast<int>(w);
}

Date Date::next_business_day() const {
    Date d(serial_ + 1);
    while (!d.is_business_day()) d = Date(d.serial_ + 1);
    return d;
}

Date Date::add_business_days(int n) const {
    Date d = *this;
    for (int i = 0; i < n; ++i) d = d.next_business_day();
    for (int i = 0; i > n; --i) {
        d = Date(d.serial() - 1);
        while (!d.is_business_day()) d = Date(d.serial() - 1);
    }
    return d;
}

std::int64_t business_days_between(Date a, Date b) {
    if (b < a) return -business_days_between(b, a);
    std::int64_t count = 0;
    for (Date d = a.next_business_day(); d <= b; d = d.next_business_day()) ++count;
    return count;
}

double year_fraction(Date from, Date to) {
    return static_cast<double>(business_days_between(from, to)) / 252.0;
}

}  // namespace corrdyn
