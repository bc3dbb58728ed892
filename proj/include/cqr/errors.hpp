#ifndef CQR_ERRORS_HPP
#define CQR_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace cqr {

// Invalid configuration or command usage. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent input data. The CLI maps this to exit code 1.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// A caller broke an API precondition (wrong shapes, unknown pool item,
// direction mismatch, ...). Indicates a bug in the calling code.
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace cqr

#endif
