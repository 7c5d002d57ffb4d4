#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

namespace coder::atg {

struct LlmExchange {
  std::string prompt;
  std::string model_tag;
  std::string response;
  bool retrieved_from_cache = false;
  std::string timestamp;  // ISO-8601 UTC
};

class LlmGateway {
 public:
  virtual ~LlmGateway() = default;
  virtual LlmExchange complete(const std::string& prompt) = 0;
  virtual std::string model_tag() const = 0;
};

std::string sha256_hex(const std::string& data);

// Cache key for a (model, prompt) pair.
std::string exchange_key(const std::string& model_tag, const std::string& prompt);

std::string utc_timestamp();

// Append-only JSON-lines store of exchanges, one object per line:
// {"key", "model_tag", "prompt", "response", "timestamp"}.
class ExchangeCache {
 public:
  // Loads existing entries; a missing file is an empty cache. A torn last
  // line is skipped with a warning.
  explicit ExchangeCache(std::filesystem::path path);

  std::optional<LlmExchange> find(const std::string& model_tag,
                                  const std::string& prompt) const;
  void append(const LlmExchange& exchange);
  std::size_t size() const;

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::map<std::string, LlmExchange> entries_;
};

// Serves from the cache and falls through to `upstream` on a miss, recording
// the reply. With no upstream (offline) a miss throws CacheMiss.
class CachingGateway : public LlmGateway {
 public:
  CachingGateway(std::shared_ptr<ExchangeCache> cache, std::string model_tag,
                 std::shared_ptr<LlmGateway> upstream = nullptr);

  LlmExchange complete(const std::string& prompt) override;
  std::string model_tag() const override { return model_tag_; }

 private:
  std::shared_ptr<ExchangeCache> cache_;
  std::string model_tag_;
  std::shared_ptr<LlmGateway> upstream_;
};

struct HttpGatewayOptions {
  std::string endpoint;  // full chat-completions URL
  std::string model;
  std::string api_key;
  double temperature = 0.7;
  int retries = 3;
  std::chrono::milliseconds backoff{500};
  std::chrono::seconds timeout{60};
  int max_in_flight = 4;
  double requests_per_second = 0.0;  // 0 disables the rate limit
};

// OpenAI-compatible chat-completions client.
class HttpChatGateway : public LlmGateway {
 public:
  explicit HttpChatGateway(HttpGatewayOptions options);

  LlmExchange complete(const std::string& prompt) override;
  std::string model_tag() const override { return options_.model; }

 private:
  void acquire_token();

  HttpGatewayOptions options_;
  std::string base_;
  std::string path_;
  std::counting_semaphore<256> in_flight_;
  std::mutex bucket_mutex_;
  double tokens_ = 1.0;
  std::chrono::steady_clock::time_point last_refill_;
};

// Runs every prompt through `gateway` with at most `max_in_flight` calls at
// once. Results are indexed like `prompts`; failures are returned as the
// exception instead of the exchange.
struct CompletionResult {
  std::optional<LlmExchange> exchange;
  std::exception_ptr error;
};
std::vector<CompletionResult> complete_all(LlmGateway& gateway,
                                           const std::vector<std::string>& prompts,
                                           int max_in_flight = 4);

}  // namespace coder::atg
