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

#include <xdrec/text_encoder.h>

#include <cstdlib>

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <xdrec/errors.h>
#include <xdrec/hashing.h>

namespace xdrec {

using json = nlohmann::json;

HashedTrigramEncoder::HashedTrigramEncoder(std::size_t dim) : dim_(dim) {
  if (dim_ == 0) {
    throw ConfigError("text encoder dimension must be positive");
  }
}

RowVector HashedTrigramEncoder::encode(std::string_view text) {
  RowVector v = RowVector::Zero(static_cast<Index>(dim_));
  for (std::size_t i = 0; i + 3 <= text.size(); ++i) {
    v(static_cast<Index>(fnv1a64(text.substr(i, 3)) % dim_)) += 1.0;
  }
  const double norm = v.norm();
  if (norm > 0.0) {
    v /= norm;
  }
  return v;
}

HttpTextEncoder::HttpTextEncoder(std::string baseUrl, std::string model,
                                 std::string apiKeyEnv, std::size_t dim,
                                 std::chrono::seconds timeout)
  : baseUrl_(std::move(baseUrl)),
    model_(std::move(model)),
    apiKeyEnv_(std::move(apiKeyEnv)),
    dim_(dim),
    timeout_(timeout) {
  while (!baseUrl_.empty() && baseUrl_.back() == '/') {
    baseUrl_.pop_back();
  }
}

RowVector HttpTextEncoder::encode(std::string_view text) {
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
  json body = {{"model", model_}, {"input", std::string(text)}};
  auto res = client.Post(prefix + "/embeddings", headers, body.dump(),
                         "application/json");
  if (!res || res->status != 200) {
    throw TransportError("text encoder endpoint unreachable at " + baseUrl_);
  }
  json reply = json::parse(res->body, nullptr, false);
  std::vector<double> values;
  try {
    values = reply.at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const json::exception&) {
    throw TransportError("text encoder reply has no data[0].embedding");
  }
  if (values.size() != dim_) {
    throw ShapeError("text encoder returned dimension " +
                     std::to_string(values.size()) + ", expected " +
                     std::to_string(dim_));
  }
  return Eigen::Map<const RowVector>(values.data(),
                                     static_cast<Index>(values.size()));
}

FallbackTextEncoder::FallbackTextEncoder(std::unique_ptr<TextEncoder> primary,
                                         bool allowFallback)
  : primary_(std::move(primary)),
    fallback_(primary_->dim()),
    allowFallback_(allowFallback) {}

RowVector FallbackTextEncoder::encode(std::string_view text) {
  if (!fellBack_) {
    try {
      return primary_->encode(text);
    } catch (const TransportError& e) {
      if (!allowFallback_) {
        throw;
      }
      spdlog::warn("remote text encoder failed ({}); using hashed trigrams",
                   e.what());
      fellBack_ = true;
    }
  }
  return fallback_.encode(text);
}

} // namespace xdrec
