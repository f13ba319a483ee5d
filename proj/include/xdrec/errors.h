/*
 * Copyright 2026 The xdrec Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace xdrec {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

/// Raised when filtering leaves nothing to train on.
class SparseCorpusError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

/// Batch-level failure: too many items fell back to the "Unknown" profile.
class ExtractionQualityError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss during training.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// The evaluation protocol cannot be satisfied (e.g. too few negatives).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

} // namespace xdrec
