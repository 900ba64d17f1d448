#pragma once

#include <stdexcept>
#include <string>

namespace certifair {

/// Malformed configuration: schema, property, training config, layer dims.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad runtime input: dimension mismatch, empty dataset, point outside a domain.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A configured cap was exceeded (e.g. the partition count).
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The LP solver could not make progress.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Broken internal invariant (shape mismatch between cooperating objects).
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace certifair
