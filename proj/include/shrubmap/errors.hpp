#pragma once

#include <stdexcept>
#include <string>

namespace shrubmap
{

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// A data problem (bad file, bad geometry, degenerate statistics). The CLI
/// maps these to exit code 2.
class DataError : public Error
{
public:
  using Error::Error;
};

class InvalidGeometry : public DataError
{
public:
  using DataError::DataError;
};

class EmptyMatchSet : public Error
{
public:
  EmptyMatchSet() : Error("metric requested with an empty match set") {}
};

class NonPositiveArea : public DataError
{
public:
  explicit NonPositiveArea(double area)
  : DataError("area must be positive, got " + std::to_string(area))
  {
  }
};

class DegenerateBBox : public DataError
{
public:
  using DataError::DataError;
};

class NoDemCoverage : public DataError
{
public:
  using DataError::DataError;
};

class DetectorUnavailable : public Error
{
public:
  using Error::Error;
};

/// Raised by a detector for one tile; run_detector logs and skips it.
class DetectorFailure : public Error
{
public:
  using Error::Error;
};

class DegenerateVariance : public DataError
{
public:
  using DataError::DataError;
};

class ParseError : public DataError
{
public:
  using DataError::DataError;
};

class SchemaError : public DataError
{
public:
  using DataError::DataError;
};

class GeometryError : public DataError
{
public:
  using DataError::DataError;
};

class CrsMismatch : public DataError
{
public:
  using DataError::DataError;
};

/// Bad configuration value or command line. The CLI maps these to exit code 1.
class ConfigError : public Error
{
public:
  using Error::Error;
};

}  // namespace shrubmap
