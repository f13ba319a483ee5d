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

#include <cstdlib>
#include <thread>

#include <gtest/gtest.h>

#include <xdrec/errors.h>
#include <xdrec/llm_client.h>
#include <xdrec/text_encoder.h>

#include <httplib.h>
#include <json.hpp>

namespace xdrec {
namespace {

using json = nlohmann::json;

/// OpenAI-style stub on a random local port.
class StubServer {
 public:
  StubServer() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                httplib::Response& res) {
      lastBody = json::parse(req.body);
      lastAuth = req.get_header_value("Authorization");
      if (failNext) {
        failNext = false;
        res.status = 503;
        return;
      }
      const std::string prompt = lastBody["messages"][0]["content"];
      json reply = {
        {"choices", {{{"message", {{"role", "assistant"},
                                   {"content", "echo:" + prompt}}}}}}};
      res.set_content(reply.dump(), "application/json");
    });
    server_.Post("/v1/embeddings", [](const httplib::Request& req,
                                      httplib::Response& res) {
      const std::string text = json::parse(req.body)["input"];
      std::vector<double> v(3, 0.0);
      v[text.size() % 3] = 1.0;
      res.set_content(json{{"data", {{{"embedding", v}}}}}.dump(),
                      "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/v1/";
  }

  json lastBody;
  std::string lastAuth;
  bool failNext = false;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

TEST(HttpLlmClientTest, SendsChatRequestAndReadsContent) {
  StubServer stub;
  ::setenv("XDREC_TEST_KEY", "secret", 1);
  HttpLlmClient client(stub.url(), "some-model", "XDREC_TEST_KEY",
                       std::chrono::seconds(5));
  GenerationParams params;
  params.maxTokens = 77;
  EXPECT_EQ(client.send("hello", params), "echo:hello");
  EXPECT_EQ(stub.lastBody["model"], "some-model");
  EXPECT_EQ(stub.lastBody["temperature"], 0.0);
  EXPECT_EQ(stub.lastBody["max_tokens"], 77);
  EXPECT_EQ(stub.lastAuth, "Bearer secret");

  stub.failNext = true;
  EXPECT_THROW(client.send("again", params), TransportError);
  EXPECT_EQ(client.send("again", params), "echo:again");
}

TEST(HttpLlmClientTest, UnreachableEndpointIsATransportError) {
  HttpLlmClient client("http://127.0.0.1:9", "m", "XDREC_UNSET_KEY",
                       std::chrono::seconds(1));
  EXPECT_THROW(client.send("x", {}), TransportError);
}

TEST(HttpTextEncoderTest, ReadsEmbeddingAndChecksDimension) {
  StubServer stub;
  HttpTextEncoder enc(stub.url(), "embed", "XDREC_UNSET_KEY", 3,
                      std::chrono::seconds(5));
  RowVector want(3);
  want << 0, 0, 1;
  EXPECT_EQ(enc.encode("ab"), want);
  HttpTextEncoder wrong(stub.url(), "embed", "XDREC_UNSET_KEY", 4,
                        std::chrono::seconds(5));
  EXPECT_THROW(wrong.encode("ab"), ShapeError);
}

} // namespace
} // namespace xdrec
