#ifndef BLIPTEST_ERRORS_HPP
#define BLIPTEST_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace bliptest {

// Error taxonomy. The CLI maps kinds onto process exit codes:
//   usage -> 1; estimability/identifiability/statistical -> 2;
//   parse/domain/io/config -> 3.
enum class ErrorKind {
  usage,
  estimability,    // a required stratum/transition cell is empty
  identifiability, // design matrix rank deficient
  statistical,     // singular weighting, degenerate test, non-convergence
  parse,           // malformed input file
  domain,          // value outside its declared domain
  io,              // file not readable/writable
  config,          // invalid spec/config document
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

  int exit_code() const {
    switch (kind_) {
      case ErrorKind::usage: return 1;
      case ErrorKind::estimability:
      case ErrorKind::identifiability:
      case ErrorKind::statistical: return 2;
      default: return 3;
    }
  }

  // True for failures that a bootstrap replicate is allowed to swallow.
  bool replicate_recoverable() const {
    return kind_ == ErrorKind::estimability ||
           kind_ == ErrorKind::identifiability ||
           kind_ == ErrorKind::statistical;
  }

private:
  ErrorKind kind_;
};

} // namespace bliptest

#endif
