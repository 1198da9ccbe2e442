#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace quadfit {

using Points3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Points2 = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

// Error categories double as CLI exit codes.
enum class ErrorKind { Input = 2, Numerical = 3, NoConsensus = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(ErrorKind::Input, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

/// Rank-deficient or otherwise ill-posed geometric configuration.
class DegenerateError : public NumericalError {
 public:
  explicit DegenerateError(const std::string& what) : NumericalError("degenerate: " + what) {}
};

class NoConsensusError : public Error {
 public:
  explicit NoConsensusError(const std::string& what)
      : Error(ErrorKind::NoConsensus, "no-consensus: " + what) {}
};

enum class Part : std::uint8_t { Head = 0, Body = 1, Feet = 2, Tail = 3 };

inline constexpr std::array<Part, 4> kAllParts{Part::Head, Part::Body, Part::Feet, Part::Tail};

inline std::string_view part_name(Part p) {
  switch (p) {
    case Part::Head: return "head";
    case Part::Body: return "body";
    case Part::Feet: return "feet";
    case Part::Tail: return "tail";
  }
  return "?";
}

inline Part parse_part(std::string_view name) {
  for (Part p : kAllParts)
    if (part_name(p) == name) return p;
  throw InputError("unknown part label '" + std::string(name) + "'");
}

inline int part_index(Part p) { return static_cast<int>(p); }

}  // namespace quadfit
