#pragma once

// Minimal chat-completion client.
//
// Wire format (JSON over HTTP POST):
//   request  {"model": str, "messages": [{"role": str, "content": str, "image"?: str}]}
//   response {"content": str}
// In live mode `image` carries the base64 file payload; the mock client sees
// the file path instead and never touches the network.

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace recbm {

struct ChatMessage {
    std::string role;
    std::string content;
    std::optional<std::filesystem::path> image;
};

struct ChatRequest {
    std::string stage;  // describe | summarize | score; used for transcript matching only
    std::string model;
    std::vector<ChatMessage> messages;
};

struct ChatEndpointConfig {
    std::string base_url;  // e.g. http://127.0.0.1:8080/v1/chat
    std::string model = "default";
    double timeout_seconds = 60.0;
    std::size_t max_retries = 2;
    std::optional<std::filesystem::path> mock_transcript;
    std::size_t max_in_flight = 4;
};

/// Content hash used for cache keys: SHA-256 of the file bytes, or of the
/// path string when the file does not exist (mock transcripts only).
std::string image_hash(const std::filesystem::path& image);

/// Stable identifier of a request: SHA-256 over model, roles, contents and
/// image hashes.
std::string request_key(const ChatRequest& request);

/// Extracts `content` from a response body; ProtocolError otherwise.
std::string parse_chat_response(const std::string& body);

class ChatClient {
public:
    virtual ~ChatClient() = default;

    /// Returns the content string of the reply.
    std::string complete(const ChatRequest& request);

    std::size_t request_count() const { return requests_.load(); }

protected:
    /// Raw response body.
    virtual std::string send(const ChatRequest& request) = 0;

private:
    std::atomic<std::size_t> requests_{0};
};

class HttpChatClient final : public ChatClient {
public:
    explicit HttpChatClient(ChatEndpointConfig cfg);

    /// JSON body sent for `request` (images inlined as base64).
    static std::string encode_request(const ChatRequest& request);

protected:
    std::string send(const ChatRequest& request) override;

private:
    ChatEndpointConfig cfg_;
    std::string host_;  // scheme://host[:port]
    std::string path_;
};

/// Replays a recorded transcript:
///   {"exchanges": [{"key": <request_key>, "response": <body>}],
///    "rules": [{"stage": s, "contains": str, "image_sha256": h, "image": path,
///               "response": <body>}]}
/// Exact keys win; otherwise the first rule whose present fields all match.
/// A response given as a JSON object is serialised as the body; a string is
/// used as the raw body verbatim.
class MockChatClient final : public ChatClient {
public:
    explicit MockChatClient(const std::filesystem::path& transcript);
    static std::unique_ptr<MockChatClient> from_json(const std::string& transcript_json);

protected:
    std::string send(const ChatRequest& request) override;

private:
    MockChatClient() = default;
    void load(const std::string& json);

    struct Rule {
        std::optional<std::string> stage;
        std::optional<std::string> contains;
        std::optional<std::string> image_sha256;
        std::optional<std::string> image;
        std::string body;
    };
    std::vector<std::pair<std::string, std::string>> exchanges_;
    std::vector<Rule> rules_;
};

/// Exactly one of `base_url` / `mock_transcript` must be set.
std::unique_ptr<ChatClient> make_chat_client(const ChatEndpointConfig& cfg);

}  // namespace recbm
