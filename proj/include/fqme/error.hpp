#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace fqme {

// Base for every error raised by the library. `kind()` is a stable tag used by
// the CLI in diagnostics and exit-code mapping.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error("DomainError", what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error("ShapeError", what) {}
};

class InsufficientReplicates : public Error {
 public:
  explicit InsufficientReplicates(const std::string& what)
      : Error("InsufficientReplicates", what) {}
};

class SingularDesign : public Error {
 public:
  SingularDesign(const std::string& what, std::vector<int> columns)
      : Error("SingularDesign", what), columns_(std::move(columns)) {}
  // Zero-based design columns found to be linear combinations of the others.
  const std::vector<int>& columns() const noexcept { return columns_; }

 private:
  std::vector<int> columns_;
};

class MissingTruth : public Error {
 public:
  explicit MissingTruth(const std::string& what) : Error("MissingTruth", what) {}
};

class FitError : public Error {
 public:
  explicit FitError(const std::string& what) : Error("FitError", what) {}
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, long line)
      : Error("ParseError", what), line_(line) {}
  long line() const noexcept { return line_; }

 private:
  long line_;
};

class DuplicateKey : public Error {
 public:
  explicit DuplicateKey(const std::string& what) : Error("DuplicateKey", what) {}
};

class RowIntegrity : public Error {
 public:
  explicit RowIntegrity(const std::string& what) : Error("RowIntegrity", what) {}
};

class InternalError : public Error {
 public:
  explicit InternalError(const std::string& what) : Error("InternalError", what) {}
};

}  // namespace fqme
