#ifndef HEADLAB_ERRORS_HPP_
#define HEADLAB_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace headlab {

// Error taxonomy shared across modules. The CLI maps these onto exit codes.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& msg) : Error(msg) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

struct IndexError : Error {
  explicit IndexError(const std::string& msg) : Error(msg) {}
};

struct DataError : Error {
  explicit DataError(const std::string& msg) : Error(msg) {}
};

struct StateError : Error {
  explicit StateError(const std::string& msg) : Error(msg) {}
};

struct ScheduleError : Error {
  explicit ScheduleError(const std::string& msg) : Error(msg) {}
};

struct GranularityError : Error {
  explicit GranularityError(const std::string& msg) : Error(msg) {}
};

struct UsageError : Error {
  explicit UsageError(const std::string& msg) : Error(msg) {}
};

struct EquivalenceError : Error {
  explicit EquivalenceError(const std::string& msg) : Error(msg) {}
};

}  // namespace headlab

#endif  // HEADLAB_ERRORS_HPP_
