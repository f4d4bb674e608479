#include "recbm/chat.hpp"

#include "recbm/error.hpp"
#include "recbm/util.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <iostream>
#include <regex>
#include <thread>

namespace recbm {

namespace {

std::string body_from_json(const nlohmann::json& response) {
    return response.is_string() ? response.get<std::string>() : response.dump();
}

std::string truncate(const std::string& s, std::size_t n = 200) {
    return s.size() <= n ? s : s.substr(0, n) + "...";
}

}  // namespace

std::string image_hash(const std::filesystem::path& image) {
    std::error_code ec;
    if (std::filesystem::is_regular_file(image, ec)) return sha256_file(image);
    return sha256_hex("path:" + image.string());
}

std::string request_key(const ChatRequest& request) {
    nlohmann::json doc;
    doc["model"] = request.model;
    auto messages = nlohmann::json::array();
    for (const auto& m : request.messages) {
        nlohmann::json msg{{"role", m.role}, {"content", m.content}};
        if (m.image) msg["image_sha256"] = image_hash(*m.image);
        messages.push_back(std::move(msg));
    }
    doc["messages"] = std::move(messages);
    return sha256_hex(doc.dump());
}

std::string parse_chat_response(const std::string& body) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
        std::clog << "[recbm] malformed chat response: " << body << '\n';
        throw ProtocolError(fmt::format("chat response is not JSON: {}", truncate(body)));
    }
    if (!doc.is_object() || !doc.contains("content") || !doc["content"].is_string()) {
        std::clog << "[recbm] malformed chat response: " << body << '\n';
        throw ProtocolError(fmt::format("chat response lacks a string 'content': {}", truncate(body)));
    }
    return doc["content"].get<std::string>();
}

std::string ChatClient::complete(const ChatRequest& request) {
    ++requests_;
    return parse_chat_response(send(request));
}

HttpChatClient::HttpChatClient(ChatEndpointConfig cfg) : cfg_(std::move(cfg)) {
    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch match;
    if (!std::regex_match(cfg_.base_url, match, url_re)) {
        throw ConfigError(fmt::format("chat endpoint '{}' is not an http(s) URL", cfg_.base_url));
    }
    host_ = match[1].str();
    path_ = match[2].matched ? match[2].str() : "/";
}

std::string HttpChatClient::encode_request(const ChatRequest& request) {
    nlohmann::json doc;
    doc["model"] = request.model;
    auto messages = nlohmann::json::array();
    for (const auto& m : request.messages) {
        nlohmann::json msg{{"role", m.role}, {"content", m.content}};
        if (m.image) {
            const std::string bytes = read_file(*m.image);
            msg["image"] = base64_encode(
                std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()));
        }
        messages.push_back(std::move(msg));
    }
    doc["messages"] = std::move(messages);
    return doc.dump();
}

std::string HttpChatClient::send(const ChatRequest& request) {
    const std::string payload = encode_request(request);
    httplib::Client client(host_);
    const auto timeout = std::chrono::duration<double>(cfg_.timeout_seconds);
    const auto sec = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    const auto usec = std::chrono::duration_cast<std::chrono::microseconds>(timeout - sec);
    client.set_connection_timeout(sec.count(), usec.count());
    client.set_read_timeout(sec.count(), usec.count());

    std::string last_error;
    for (std::size_t attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(100 * (1 << std::min<std::size_t>(attempt, 6))));
        auto res = client.Post(path_, payload, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_error = fmt::format("HTTP {}", res->status);
            continue;
        }
        if (res->status != 200) {
            std::clog << "[recbm] chat endpoint returned HTTP " << res->status << ": " << res->body << '\n';
            throw ProtocolError(fmt::format("chat endpoint returned HTTP {}: {}", res->status, truncate(res->body)));
        }
        return res->body;
    }
    throw TransportError(fmt::format("chat endpoint {}{} unreachable after {} attempts: {}", host_, path_,
                                     cfg_.max_retries + 1, last_error));
}

MockChatClient::MockChatClient(const std::filesystem::path& transcript) { load(read_file(transcript)); }

std::unique_ptr<MockChatClient> MockChatClient::from_json(const std::string& transcript_json) {
    std::unique_ptr<MockChatClient> client(new MockChatClient());
    client->load(transcript_json);
    return client;
}

void MockChatClient::load(const std::string& json) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json);
        for (const auto& ex : doc.value("exchanges", nlohmann::json::array())) {
            exchanges_.emplace_back(ex.at("key").get<std::string>(), body_from_json(ex.at("response")));
        }
        for (const auto& r : doc.value("rules", nlohmann::json::array())) {
            Rule rule;
            if (r.contains("stage")) rule.stage = r["stage"].get<std::string>();
            if (r.contains("contains")) rule.contains = r["contains"].get<std::string>();
            if (r.contains("image_sha256")) rule.image_sha256 = r["image_sha256"].get<std::string>();
            if (r.contains("image")) rule.image = r["image"].get<std::string>();
            rule.body = body_from_json(r.at("response"));
            rules_.push_back(std::move(rule));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(fmt::format("mock transcript is malformed: {}", e.what()));
    }
}

std::string MockChatClient::send(const ChatRequest& request) {
    const std::string key = request_key(request);
    for (const auto& [k, body] : exchanges_) {
        if (k == key) return body;
    }
    std::string text;
    std::optional<std::filesystem::path> image;
    for (const auto& m : request.messages) {
        text += m.content;
        text += '\n';
        if (m.image) image = m.image;
    }
    const std::optional<std::string> hash = image ? std::optional(image_hash(*image)) : std::nullopt;
    for (const auto& rule : rules_) {
        if (rule.stage && *rule.stage != request.stage) continue;
        if (rule.contains && text.find(*rule.contains) == std::string::npos) continue;
        if (rule.image_sha256 && (!hash || *hash != *rule.image_sha256)) continue;
        if (rule.image && (!image || image->string() != *rule.image)) continue;
        return rule.body;
    }
    throw TransportError(fmt::format("mock transcript has no response for {} request {}", request.stage, key));
}

std::unique_ptr<ChatClient> make_chat_client(const ChatEndpointConfig& cfg) {
    const bool live = !cfg.base_url.empty();
    if (live == cfg.mock_transcript.has_value()) {
        throw ConfigError("exactly one of --endpoint or --mock-transcript must be given");
    }
    if (live) return std::make_unique<HttpChatClient>(cfg);
    return std::make_unique<MockChatClient>(*cfg.mock_transcript);
}

}  // namespace recbm
