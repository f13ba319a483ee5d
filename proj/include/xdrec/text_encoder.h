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

#include <chrono>
#include <memory>
#include <string>
#include <string_view>

#include <xdrec/autodiff.h>

namespace xdrec {

/// Maps a summary string to a fixed-dimension vector.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::size_t dim() const = 0;
  virtual RowVector encode(std::string_view text) = 0;
};

/// Offline encoder: byte trigram counts hashed (FNV-1a) into `dim` buckets,
/// then L2-normalized. Texts shorter than three bytes map to zero.
class HashedTrigramEncoder : public TextEncoder {
 public:
  explicit HashedTrigramEncoder(std::size_t dim = 384);

  std::size_t dim() const override {
    return dim_;
  }
  RowVector encode(std::string_view text) override;

 private:
  std::size_t dim_;
};

/// Embeddings endpoint (`POST {baseUrl}/embeddings`, OpenAI-style reply).
/// Throws TransportError when unreachable, ShapeError on a dimension mismatch.
class HttpTextEncoder : public TextEncoder {
 public:
  HttpTextEncoder(std::string baseUrl, std::string model, std::string apiKeyEnv,
                  std::size_t dim,
                  std::chrono::seconds timeout = std::chrono::seconds(30));

  std::size_t dim() const override {
    return dim_;
  }
  RowVector encode(std::string_view text) override;

 private:
  std::string baseUrl_;
  std::string model_;
  std::string apiKeyEnv_;
  std::size_t dim_;
  std::chrono::seconds timeout_;
};

/// Uses `primary`; on TransportError either rethrows or, when fallback is
/// enabled, switches permanently to the hashed-trigram encoder of the same
/// dimension so that all vectors of a run come from one backend.
class FallbackTextEncoder : public TextEncoder {
 public:
  FallbackTextEncoder(std::unique_ptr<TextEncoder> primary, bool allowFallback);

  std::size_t dim() const override {
    return primary_->dim();
  }
  RowVector encode(std::string_view text) override;
  bool fellBack() const {
    return fellBack_;
  }

 private:
  std::unique_ptr<TextEncoder> primary_;
  HashedTrigramEncoder fallback_;
  bool allowFallback_;
  bool fellBack_ = false;
};

} // namespace xdrec
