#pragma once

#include <stdexcept>
#include <string>

namespace dlvae {

// Error categories map 1:1 onto C API / CLI exit codes.
enum class ErrorCode {
  Generic = 1,
  Config = 2,
  Divergence = 3,
  Integrity = 4,
  Io = 5,
  Unsupported = 6,
  Dimension = 7,
  Domain = 8,
  Contract = 9,
  Input = 10,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error(ErrorCode::Config, m) {}
};
struct DivergenceError : Error {
  explicit DivergenceError(const std::string& m) : Error(ErrorCode::Divergence, m) {}
};
struct IntegrityError : Error {
  explicit IntegrityError(const std::string& m) : Error(ErrorCode::Integrity, m) {}
};
struct IoError : Error {
  explicit IoError(const std::string& m) : Error(ErrorCode::Io, m) {}
};
struct UnsupportedError : Error {
  explicit UnsupportedError(const std::string& m) : Error(ErrorCode::Unsupported, m) {}
};
struct DimensionError : Error {
  explicit DimensionError(const std::string& m) : Error(ErrorCode::Dimension, m) {}
};
struct DomainError : Error {
  explicit DomainError(const std::string& m) : Error(ErrorCode::Domain, m) {}
};
struct ContractError : Error {
  explicit ContractError(const std::string& m) : Error(ErrorCode::Contract, m) {}
};
struct InputError : Error {
  explicit InputError(const std::string& m) : Error(ErrorCode::Input, m) {}
};

}  // namespace dlvae
