#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace recomb {

/// Base error; `exit_code` is what the CLI returns when this escapes a stage.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, int exit_code = 1)
      : std::runtime_error(what), exit_code_(exit_code) {}
  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what, 4) {}
};

class StaleInputError : public Error {
 public:
  explicit StaleInputError(const std::string& what) : Error(what, 3) {}
};

class ValidationFailure : public Error {
 public:
  explicit ValidationFailure(const std::string& what) : Error(what, 2) {}
};

/// Calendar date stored as days since 1970-01-01.
struct Date {
  std::int32_t days = 0;

  static Date from_ymd(int y, unsigned m, unsigned d);
  /// Accepts "YYYY", "YYYY-MM" or "YYYY-MM-DD"; missing parts default to 1.
  static Date parse(std::string_view text);

  int year() const;
  std::string to_string() const;

  friend auto operator<=>(const Date&, const Date&) = default;
};

inline std::int32_t days_between(Date from, Date to) { return to.days - from.days; }

}  // namespace recomb
