#pragma once

#include <stdexcept>
#include <string>

namespace dskin {

// Exit-code mapping at the CLI boundary: DataError -> 2, NumericalError -> 3.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class DimensionError : public DataError {
 public:
  explicit DimensionError(const std::string& msg) : DataError(msg) {}
};

class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

class SingularSkinningError : public NumericalError {
 public:
  explicit SingularSkinningError(const std::string& msg) : NumericalError(msg) {}
};

class SimulationDivergenceError : public NumericalError {
 public:
  explicit SimulationDivergenceError(const std::string& msg) : NumericalError(msg) {}
};

class OptimizationFailureError : public NumericalError {
 public:
  explicit OptimizationFailureError(const std::string& msg) : NumericalError(msg) {}
};

}  // namespace dskin
