#pragma once

#include <cstdlib>
#include <memory>
#include <string>

#include "httplib.h"
#include "json.hpp"
#include "vsfa/arxiv.hpp"
#include "vsfa/errors.hpp"
#include "vsfa/gateway.hpp"
#include "vsfa/util.hpp"

namespace vsfa::live {

inline std::string env_or_empty(const char* name) {
    const char* v = std::getenv(name);
    return v ? v : "";
}

/// OpenAI-compatible chat completions over HTTP POST.
class HttpChatBackend final : public ChatBackend {
public:
    HttpChatBackend(std::string base_url, std::string api_key,
                    std::string path = "/v1/chat/completions")
        : base_url_(std::move(base_url)), api_key_(std::move(api_key)), path_(std::move(path)) {}

    std::string name() const override { return "live-chat"; }

    std::string complete(const ChatRequest& request) override {
        json body = {{"model", request.model_name},
                     {"messages",
                      {{{"role", "system"}, {"content", request.role_system}},
                       {{"role", "user"}, {"content", request.role_user}}}},
                     {"temperature", request.temperature}};
        if (request.max_tokens > 0) body["max_tokens"] = request.max_tokens;
        if (request.response_format == ResponseFormat::json_object)
            body["response_format"] = {{"type", "json_object"}};

        httplib::Client client(base_url_);
        client.set_connection_timeout(10);
        client.set_read_timeout(120);
        httplib::Headers headers = {{"Authorization", "Bearer " + api_key_}};
        auto res = client.Post(path_, headers, body.dump(), "application/json");
        if (!res)
            throw Error(ErrorKind::external_service,
                        "chat endpoint unreachable: " + httplib::to_string(res.error()));
        if (res->status == 429 || res->status >= 500)
            throw Error(ErrorKind::external_service,
                        "chat endpoint returned " + std::to_string(res->status));
        if (res->status != 200)
            throw Error(ErrorKind::external_service, "chat endpoint returned " +
                                                         std::to_string(res->status) + ": " +
                                                         res->body);
        try {
            json reply = json::parse(res->body);
            return reply.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception& e) {
            throw Error(ErrorKind::external_service,
                        std::string("malformed chat response: ") + e.what());
        }
    }

private:
    std::string base_url_;
    std::string api_key_;
    std::string path_;
};

/// OpenAI-compatible image generations endpoint returning base64 bytes.
class HttpImageBackend final : public ImageBackend {
public:
    HttpImageBackend(std::string base_url, std::string api_key,
                     std::string path = "/v1/images/generations")
        : base_url_(std::move(base_url)), api_key_(std::move(api_key)), path_(std::move(path)) {}

    std::string name() const override { return "live-t2i"; }

    ImageResult generate(const ImageRequest& request) override {
        json body = {{"model", request.model_name},
                     {"prompt", request.prompt_text},
                     {"size", std::to_string(request.width) + "x" + std::to_string(request.height)},
                     {"response_format", "b64_json"},
                     {"n", 1}};
        httplib::Client client(base_url_);
        client.set_connection_timeout(10);
        client.set_read_timeout(300);
        httplib::Headers headers = {{"Authorization", "Bearer " + api_key_}};
        auto res = client.Post(path_, headers, body.dump(), "application/json");
        if (!res)
            throw Error(ErrorKind::external_service,
                        "image endpoint unreachable: " + httplib::to_string(res.error()));
        if (res->status != 200)
            throw Error(ErrorKind::external_service, "image endpoint returned " +
                                                         std::to_string(res->status) + ": " +
                                                         res->body);
        try {
            json reply = json::parse(res->body);
            std::string b64 = reply.at("data").at(0).at("b64_json").get<std::string>();
            auto bytes = base64_decode(b64);
            ImageResult result;
            result.bytes.assign(bytes.begin(), bytes.end());
            result.width = request.width;
            result.height = request.height;
            return result;
        } catch (const json::exception& e) {
            throw Error(ErrorKind::external_service,
                        std::string("malformed image response: ") + e.what());
        }
    }

private:
    std::string base_url_;
    std::string api_key_;
    std::string path_;
};

/// arXiv Atom query endpoint.
class HttpFeedBackend final : public arxiv::FeedBackend {
public:
    explicit HttpFeedBackend(std::string base_url) : base_url_(std::move(base_url)) {}

    std::string fetch(const std::string& term, int max_results) override {
        std::string target = "/api/query?search_query=all:" + percent_encode("\"" + term + "\"") +
                             "&max_results=" + std::to_string(max_results) +
                             "&sortBy=relevance";
        httplib::Client client(base_url_);
        client.set_connection_timeout(10);
        client.set_read_timeout(60);
        auto res = client.Get(target);
        if (!res)
            throw Error(ErrorKind::external_service,
                        "arXiv endpoint unreachable: " + httplib::to_string(res.error()));
        if (res->status != 200)
            throw Error(ErrorKind::external_service,
                        "arXiv endpoint returned " + std::to_string(res->status));
        return res->body;
    }

private:
    std::string base_url_;
};

}  // namespace vsfa::live
