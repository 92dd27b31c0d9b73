#ifndef ABGREG_ERROR_HPP_
#define ABGREG_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace abgreg {

// Failure classes. The command-line front end maps these onto exit codes
// (2 config, 3 data, 4 numerical).
enum class ErrorKind { Config, Data, Numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void config_error(const std::string& msg) {
  throw Error(ErrorKind::Config, msg);
}

[[noreturn]] inline void data_error(const std::string& msg) {
  throw Error(ErrorKind::Data, msg);
}

[[noreturn]] inline void numerical_error(const std::string& msg) {
  throw Error(ErrorKind::Numerical, msg);
}

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Data: return "data";
    case ErrorKind::Numerical: return "numerical";
  }
  return "unknown";
}

}  // namespace abgreg

#endif  // ABGREG_ERROR_HPP_
