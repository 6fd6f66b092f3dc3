#pragma once

#include <stdexcept>
#include <string>

namespace lopguard {

/// Base of every domain error raised by the library. The CLI maps these to
/// exit code 1 and prints `kind(): what()`.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "Error"; }
};

#define LOPGUARD_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                         \
   public:                                                            \
    using Error::Error;                                               \
    const char* kind() const noexcept override { return #Name; }      \
  };

LOPGUARD_DEFINE_ERROR(LengthError)
LOPGUARD_DEFINE_ERROR(ValueError)
LOPGUARD_DEFINE_ERROR(CalibError)
LOPGUARD_DEFINE_ERROR(IndexError)
LOPGUARD_DEFINE_ERROR(DomainError)
LOPGUARD_DEFINE_ERROR(DataError)
LOPGUARD_DEFINE_ERROR(EmptyPillarError)
LOPGUARD_DEFINE_ERROR(NumericsError)
LOPGUARD_DEFINE_ERROR(SizeError)
LOPGUARD_DEFINE_ERROR(GeometryError)
LOPGUARD_DEFINE_ERROR(EmptyLibraryError)
LOPGUARD_DEFINE_ERROR(PlacementError)
LOPGUARD_DEFINE_ERROR(EmptySetError)
LOPGUARD_DEFINE_ERROR(IoError)

#undef LOPGUARD_DEFINE_ERROR

/// Malformed scene/config document. `path()` is the offending field, e.g.
/// "ground_truth[2].box".
class SchemaError : public Error {
 public:
  explicit SchemaError(std::string path, const std::string& detail = "")
      : Error(detail.empty() ? path : path + ": " + detail), path_(std::move(path)) {}
  const char* kind() const noexcept override { return "SchemaError"; }
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace lopguard
