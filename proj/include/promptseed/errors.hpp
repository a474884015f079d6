// Copyright 2026 The promptseed Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace promptseed {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or raster shapes that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A scalar argument outside its mathematical domain (e.g. a non-positive
/// temperature).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A prompt context used with the wrong prompt builder.
class StrategyError : public Error {
 public:
  using Error::Error;
};

/// Token sequence longer than the text encoder accepts.
class OverflowError : public Error {
 public:
  using Error::Error;
};

/// Gradient requested from outputs that were produced without a tape.
class GradientPathError : public Error {
 public:
  using Error::Error;
};

/// Required logit, class, or key absent from an input.
class MissingError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated file content. `offset` is the byte position at which
/// decoding failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Filesystem failure, carrying the path involved.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace promptseed
