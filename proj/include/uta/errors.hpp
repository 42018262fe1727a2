#pragma once

#include <stdexcept>
#include <string>

namespace uta {

/// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

struct SingularMatrixError : Error {
  explicit SingularMatrixError(const std::string& msg) : Error(msg) {}
};

struct InsufficientFeaturesError : Error {
  explicit InsufficientFeaturesError(const std::string& msg) : Error(msg) {}
};

struct DegenerateGeometryError : Error {
  explicit DegenerateGeometryError(const std::string& msg) : Error(msg) {}
};

struct UnsortedStreamError : Error {
  explicit UnsortedStreamError(const std::string& msg) : Error(msg) {}
};

struct OutOfBoundsError : Error {
  explicit OutOfBoundsError(const std::string& msg) : Error(msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace uta
