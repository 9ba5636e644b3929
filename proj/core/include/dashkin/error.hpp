#pragma once

#include <stdexcept>
#include <string>

namespace dashkin {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input file does not follow its declared format (missing columns, bad magic, ...).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A signal layout does not fit inside the frame payload it is applied to.
class DecodeError : public Error {
 public:
  using Error::Error;
};

/// A time series or frame source does not cover the requested time range.
class CoverageError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

/// An attribute was requested as a training target on labels that invalidated it.
class InvalidTargetError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

/// Non-finite activations inside an encoder.
class EncoderError : public Error {
 public:
  using Error::Error;
};

class IncompleteTableError : public Error {
 public:
  using Error::Error;
};

class NoFiniteResultError : public Error {
 public:
  using Error::Error;
};

}  // namespace dashkin
