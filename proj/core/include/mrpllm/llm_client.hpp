#pragma once

#include "mrpllm/util.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

namespace mrpllm {

struct ChatMessage {
    std::string role; // system | user | assistant
    std::string content;
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    std::string model = "gpt-3.5-turbo";
    double temperature = 0.0;
    int max_tokens = 1024;
    std::string tag; // cassette / instrumentation key
};

// Stable content key: tag plus FNV-1a over roles and bodies.
std::string request_key(const ChatRequest& request);

class TransportError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ApiError : public std::runtime_error {
  public:
    ApiError(int status, const std::string& body)
        : std::runtime_error("API error " + std::to_string(status) + ": " + body),
          status_(status), body_(body) {}
    int status() const { return status_; }
    const std::string& body() const { return body_; }
    bool retryable() const { return status_ == 429 || status_ >= 500; }

  private:
    int status_;
    std::string body_;
};

class ReplayMissError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class LlmBackend {
  public:
    virtual ~LlmBackend() = default;
    virtual std::string send(const ChatRequest& request) = 0;
};

struct ClientPolicy {
    std::chrono::milliseconds timeout{30000};
    int max_retries = 3;
    std::chrono::milliseconds backoff_base{250};
    std::chrono::milliseconds backoff_cap{8000};
    int max_in_flight = 4;
};

// Stateless chat-completion boundary: full message history per call, bounded
// concurrency, exponential backoff on transient failures. Shareable across
// threads.
class LlmClient {
  public:
    LlmClient(std::shared_ptr<LlmBackend> backend, ClientPolicy policy = {});

    std::string complete(const ChatRequest& request);

    const ClientPolicy& policy() const { return policy_; }
    std::shared_ptr<LlmBackend> backend() const { return backend_; }

  private:
    std::shared_ptr<LlmBackend> backend_;
    ClientPolicy policy_;
    std::mutex mu_;
    std::condition_variable cv_;
    int in_flight_ = 0;
};

// OpenAI-compatible chat-completions over HTTP(S). The credential comes from
// the LLM_API_KEY environment variable, never from config files.
class HttpBackend : public LlmBackend {
  public:
    HttpBackend(std::string base_url, std::chrono::milliseconds timeout,
                std::string api_key_env = "LLM_API_KEY");
    std::string send(const ChatRequest& request) override;

  private:
    std::string base_url_;
    std::string path_prefix_;
    std::chrono::milliseconds timeout_;
    std::string api_key_;
};

// Deterministic test double. Responses are scripted per tag (consumed in
// order, last one repeats); a fallback rule handles unscripted tags. Counts
// calls, captures prompts, tracks concurrent use and can inject failures.
class ScriptedMockBackend : public LlmBackend {
  public:
    using Rule = std::function<std::string(const ChatRequest&)>;

    void script(const std::string& tag, std::vector<std::string> responses);
    void set_rule(Rule rule) { rule_ = std::move(rule); }
    void fail_next(int times, bool retryable = true);
    void set_latency(std::chrono::milliseconds latency) { latency_ = latency; }

    std::string send(const ChatRequest& request) override;

    std::size_t calls(const std::string& tag_prefix = "") const;
    std::vector<ChatRequest> captured(const std::string& tag_prefix = "") const;
    int max_concurrency_seen() const { return max_concurrent_; }

  private:
    mutable std::mutex mu_;
    std::map<std::string, std::vector<std::string>> scripts_;
    std::map<std::string, std::size_t> cursors_;
    Rule rule_;
    int fail_budget_ = 0;
    bool fail_retryable_ = true;
    std::chrono::milliseconds latency_{0};
    std::vector<ChatRequest> captured_;
    int concurrent_ = 0;
    int max_concurrent_ = 0;
};

// Passes requests through and appends {key, request, response} NDJSON lines.
class RecordingBackend : public LlmBackend {
  public:
    RecordingBackend(std::shared_ptr<LlmBackend> inner, std::string cassette_path);
    std::string send(const ChatRequest& request) override;

  private:
    std::shared_ptr<LlmBackend> inner_;
    std::string path_;
    std::mutex mu_;
};

// Serves recorded responses by exact (tag, content-hash) key; repeated
// identical requests consume recorded entries in order, the last one repeats.
class ReplayBackend : public LlmBackend {
  public:
    explicit ReplayBackend(const std::string& cassette_path);
    std::string send(const ChatRequest& request) override;

  private:
    std::map<std::string, std::vector<std::string>> entries_;
    std::map<std::string, std::size_t> cursors_;
    std::mutex mu_;
};

// Offline heuristic backend: answers every pipeline prompt deterministically
// from the prompt text itself (echoing sequence labels, candidate tuples and
// preference lists). Makes the whole pipeline runnable without an API.
class RuleBasedMockBackend : public LlmBackend {
  public:
    std::string send(const ChatRequest& request) override;
};

struct LlmCallOptions {
    std::string model = "gpt-3.5-turbo";
    double temperature = 0.0;
    int max_tokens = 1024;
};

// Caller-side conversation state; the client itself is stateless and the full
// history is resent on every call.
class Dialogue {
  public:
    Dialogue(LlmClient& client, LlmCallOptions options = {})
        : client_(client), options_(std::move(options)) {}

    void seed_system(std::string text) { messages_.push_back({"system", std::move(text)}); }

    std::string ask(const std::string& tag, std::string user_text) {
        messages_.push_back({"user", std::move(user_text)});
        ChatRequest req{messages_, options_.model, options_.temperature, options_.max_tokens,
                        tag};
        std::string reply = client_.complete(req);
        messages_.push_back({"assistant", reply});
        return reply;
    }

    const std::vector<ChatMessage>& messages() const { return messages_; }

  private:
    LlmClient& client_;
    LlmCallOptions options_;
    std::vector<ChatMessage> messages_;
};

} // namespace mrpllm
