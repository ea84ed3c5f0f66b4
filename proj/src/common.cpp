#include "recomb/common.hpp"

#include <fmt/format.h>

#include <charconv>
#include <chrono>

namespace recomb {

Date Date::from_ymd(int y, unsigned m, unsigned d) {
  namespace c = std::chrono;
  const c::year_month_day ymd{c::year{y}, c::month{m}, c::day{d}};
  if (!ymd.ok()) throw Error(fmt::format("invalid date {:04}-{:02}-{:02}", y, m, d));
  return Date{static_cast<std::int32_t>(c::sys_days{ymd}.time_since_epoch().count())};
}

Date Date::parse(std::string_view text) {
  auto number = [&](std::size_t pos, std::size_t len) {
    int v = 0;
    if (pos + len > text.size()) throw Error(fmt::format("invalid date '{}'", text));
    const auto* first = text.data() + pos;
    const auto [ptr, ec] = std::from_chars(first, first + len, v);
    if (ec != std::errc{} || ptr != first + len) throw Error(fmt::format("invalid date '{}'", text));
    return v;
  };
  if (text.size() == 4) return from_ymd(number(0, 4), 1, 1);
  if (text.size() == 7 && text[4] == '-') return from_ymd(number(0, 4), static_cast<unsigned>(number(5, 2)), 1);
  if (text.size() == 10 && text[4] == '-' && text[7] == '-')
    return from_ymd(number(0, 4), static_cast<unsigned>(number(5, 2)), static_cast<unsigned>(number(8, 2)));
  throw Error(fmt::format("invalid date '{}' (expected YYYY, YYYY-MM or YYYY-MM-DD)", text));
}

int Date::year() const {
  namespace c = std::chrono;
  return static_cast<int>(c::year_month_day{c::sys_days{c::days{days}}}.year());
}

std::string Date::to_string() const {
  namespace c = std::chrono;
  const c::year_month_day ymd{c::sys_days{c::days{days}}};
  return fmt::format("{:04}-{:02}-{:02}", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                     static_cast<unsigned>(ymd.day()));
}

}  // namespace recomb
