#pragma once

#include <stdexcept>
#include <string>

namespace flexgrid {

/// Invalid parameters, malformed input files or unknown identifiers.
class ConfigError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Optimizer failures: iteration limits, exhausted search budgets.
class SolverError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// A computed identity or invariant failed beyond its tolerance.
class NumericalConsistencyError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Backward/forward sweep did not converge.
class DivergenceError : public std::runtime_error
{
public:
  DivergenceError(std::string const &what, double last_mismatch)
    : std::runtime_error(what), last_mismatch_(last_mismatch)
  {
  }
  double last_mismatch() const { return last_mismatch_; }

private:
  double last_mismatch_;
};

} // namespace flexgrid
