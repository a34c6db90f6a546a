#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ldplab {

enum class ErrorKind {
  validation,
  domain_escape,
  degenerate_orbit,
  out_of_schedule,
  insufficient_samples,
  orphan_fragment,
  insufficient_depth,
  unresolved_mass,
  not_found,
  budget_exceeded,
  all_censored,
  coverage,
  non_convex,
  inconclusive,
};

std::string_view to_string(ErrorKind kind);

/// Exception carrying a machine-readable kind; the CLI maps kinds to exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace ldplab
