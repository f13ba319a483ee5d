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

#include <xdrec/llm_client.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include <xdrec/errors.h>
#include <xdrec/hashing.h>

namespace xdrec {

using json = nlohmann::json;

HttpLlmClient::HttpLlmClient(std::string baseUrl, std::string model,
                             std::string apiKeyEnv,
                             std::chrono::seconds timeout)
  : baseUrl_(std::move(baseUrl)),
    model_(std::move(model)),
    apiKeyEnv_(std::move(apiKeyEnv)),
    timeout_(timeout) {
  while (!baseUrl_.empty() && baseUrl_.back() == '/') {
    baseUrl_.pop_back();
  }
}

std::string HttpLlmClient::send(const std::string& prompt,
                                const GenerationParams& params) {
  // split "scheme://host[:port]/prefix" so the path prefix is preserved
  const auto schemeEnd = baseUrl_.find("://");
  const auto pathStart = baseUrl_.find('/', schemeEnd == std::string::npos
                                              ? 0
                                              : schemeEnd + 3);
  const std::string host = baseUrl_.substr(0, pathStart);
  const std::string prefix =
    pathStart == std::string::npos ? "" : baseUrl_.substr(pathStart);

  httplib::Client client(host);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  httplib::Headers headers;
  if (const char* key = std::getenv(apiKeyEnv_.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  json body = {{"model", model_},
               {"temperature", params.temperature},
               {"max_tokens", params.maxTokens},
               {"messages", {{{"role", "user"}, {"content", prompt}}}}};
  auto res = client.Post(prefix + "/chat/completions", headers, body.dump(),
                         "application/json");
  if (!res) {
    throw TransportError("LLM endpoint unreachable: " +
                         httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw TransportError("LLM endpoint returned HTTP " +
                         std::to_string(res->status));
  }
  json reply = json::parse(res->body, nullptr, false);
  if (reply.is_discarded()) {
    throw TransportError("LLM endpoint returned a non-JSON body");
  }
  try {
    return reply.at("choices").at(0).at("message").at("content")
      .get<std::string>();
  } catch (const json::exception&) {
    throw TransportError("LLM reply has no choices[0].message.content");
  }
}

MockLlmClient::MockLlmClient(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (!std::filesystem::is_directory(dir_)) {
    throw IoError("mock LLM directory not found: " + dir_.string());
  }
}

std::filesystem::path MockLlmClient::entryPath(const std::filesystem::path& dir,
                                               const std::string& prompt) {
  return dir / (sha256Hex(prompt) + ".json");
}

std::string MockLlmClient::send(const std::string& prompt,
                                const GenerationParams&) {
  ++calls_;
  const auto path = entryPath(dir_, prompt);
  std::ifstream in(path);
  if (!in) {
    throw TransportError("mock LLM has no response for this prompt (" +
                         path.filename().string() + ")");
  }
  json j = json::parse(in, nullptr, false);
  if (j.is_string()) {
    return j.get<std::string>();
  }
  if (!j.is_array() || j.empty()) {
    throw TransportError("mock LLM entry is neither a string nor an array");
  }
  std::size_t n;
  {
    std::lock_guard lock(mu_);
    n = served_[path.filename().string()]++;
  }
  const auto& r = j[std::min(n, j.size() - 1)];
  return r.is_string() ? r.get<std::string>() : r.dump();
}

TokenBucket::TokenBucket(double ratePerSecond, double burst)
  : rate_(ratePerSecond),
    burst_(std::max(burst, 1.0)),
    tokens_(std::max(burst, 1.0)),
    last_(std::chrono::steady_clock::now()) {}

void TokenBucket::acquire() {
  if (rate_ <= 0.0) {
    return;
  }
  std::unique_lock lock(mu_);
  while (true) {
    const auto now = std::chrono::steady_clock::now();
    const double elapsed =
      std::chrono::duration<double>(now - last_).count();
    last_ = now;
    tokens_ = std::min(burst_, tokens_ + elapsed * rate_);
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    const double wait = (1.0 - tokens_) / rate_;
    lock.unlock();
    std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    lock.lock();
  }
}

} // namespace xdrec
