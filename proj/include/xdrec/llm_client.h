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

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>

namespace xdrec {

struct GenerationParams {
  double temperature = 0.0;
  int maxTokens = 512;
};

/// Text-in, text-out completion endpoint.
class LlmClient {
 public:
  virtual ~LlmClient() = default;
  /// Throws TransportError when the endpoint cannot be reached.
  virtual std::string send(const std::string& prompt,
                           const GenerationParams& params) = 0;
};

/// Chat-completions style HTTP endpoint (`POST {baseUrl}/chat/completions`).
/// The bearer token is read from the environment variable `apiKeyEnv`.
class HttpLlmClient : public LlmClient {
 public:
  HttpLlmClient(std::string baseUrl, std::string model, std::string apiKeyEnv,
                std::chrono::seconds timeout = std::chrono::seconds(60));

  std::string send(const std::string& prompt,
                   const GenerationParams& params) override;

 private:
  std::string baseUrl_;
  std::string model_;
  std::string apiKeyEnv_;
  std::chrono::seconds timeout_;
};

/// Replays canned responses from a directory. A prompt is looked up as
/// `<dir>/<sha256(prompt)>.json`, holding either one response string or an
/// array of strings returned on successive calls (the last one repeats).
/// Missing entries raise TransportError. Thread-safe.
class MockLlmClient : public LlmClient {
 public:
  explicit MockLlmClient(std::filesystem::path dir);

  std::string send(const std::string& prompt,
                   const GenerationParams& params) override;

  std::size_t calls() const {
    return calls_.load();
  }

  /// File a response sequence for `prompt` would be read from.
  static std::filesystem::path entryPath(const std::filesystem::path& dir,
                                         const std::string& prompt);

 private:
  std::filesystem::path dir_;
  std::atomic<std::size_t> calls_{0};
  std::mutex mu_;
  std::map<std::string, std::size_t> served_;
};

/// Token bucket limiting request throughput. Rate <= 0 disables limiting.
class TokenBucket {
 public:
  explicit TokenBucket(double ratePerSecond, double burst = 1.0);

  void acquire();

 private:
  double rate_;
  double burst_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
  std::mutex mu_;
};

} // namespace xdrec
