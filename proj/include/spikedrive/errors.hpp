// Copyright 2026 The spikedrive Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace spikedrive {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A non-finite intermediate or a degenerate normalizer.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ConversionError : public Error {
 public:
  using Error::Error;
};

/// An input violated a documented precondition of a spike operator
/// (e.g. a non-binary step handed to temporal max-pooling).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Two artifacts that must describe the same network do not.
class MismatchError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Manifest is not valid JSON, has an unknown format_version, or is
/// missing required structure.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A tensor's byte range runs past the end of the blob.
class OffsetOverflowError : public Error {
 public:
  using Error::Error;
};

/// A tensor or quantizer site required by the configuration is absent.
class IncompleteModelError : public Error {
 public:
  using Error::Error;
};

/// A stored tensor's shape disagrees with what the configuration implies.
class ShapeMismatchError : public Error {
 public:
  using Error::Error;
};

}  // namespace spikedrive
