#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace renewal_lab {

enum class errc {
  invalid_parameter,
  precondition,
  nonconvergent,
  coverage,
  io
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::invalid_parameter: return "invalid_parameter";
    case errc::precondition: return "precondition";
    case errc::nonconvergent: return "nonconvergent";
    case errc::coverage: return "coverage";
    case errc::io: return "io";
  }
  return "unknown";
}

class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what, std::vector<double> trace = {})
      : std::runtime_error(what), code_(code), trace_(std::move(trace)) {}

  errc code() const noexcept { return code_; }
  // partial sums, iterates or block values leading up to the failure
  const std::vector<double>& trace() const noexcept { return trace_; }

 private:
  errc code_;
  std::vector<double> trace_;
};

}  // namespace renewal_lab
