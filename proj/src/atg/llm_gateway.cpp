#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "coder/atg/llm_gateway.hpp"

#include <openssl/evp.h>

#include <atomic>
#include <ctime>
#include <thread>

#include "coder/error.hpp"
#include "coder/log.hpp"
#include "json.hpp"

namespace coder::atg {

using nlohmann::json;

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::Io, "sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

std::string exchange_key(const std::string& model_tag, const std::string& prompt) {
  std::string material = model_tag;
  material += '\0';
  material += prompt;
  return sha256_hex(material);
}

std::string utc_timestamp() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

ExchangeCache::ExchangeCache(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto j = json::parse(line);
      LlmExchange e;
      e.prompt = j.at("prompt").get<std::string>();
      e.model_tag = j.at("model_tag").get<std::string>();
      e.response = j.at("response").get<std::string>();
      e.timestamp = j.value("timestamp", std::string{});
      entries_[exchange_key(e.model_tag, e.prompt)] = std::move(e);
    } catch (const json::exception& ex) {
      warn(path_.string() + ":" + std::to_string(line_no) +
           ": skipping unreadable cache line (" + ex.what() + ")");
    }
  }
}

std::optional<LlmExchange> ExchangeCache::find(const std::string& model_tag,
                                               const std::string& prompt) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(exchange_key(model_tag, prompt));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ExchangeCache::append(const LlmExchange& e) {
  auto key = exchange_key(e.model_tag, e.prompt);
  json j{{"key", key},
         {"model_tag", e.model_tag},
         {"prompt", e.prompt},
         {"response", e.response},
         {"timestamp", e.timestamp}};
  std::string line = j.dump() + "\n";

  std::lock_guard lock(mutex_);
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot append to " + path_.string());
  out.write(line.data(), static_cast<std::streamsize>(line.size()));
  out.flush();
  if (!out) throw Error(ErrorCode::Io, "append failed for " + path_.string());
  entries_[key] = e;
}

std::size_t ExchangeCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

CachingGateway::CachingGateway(std::shared_ptr<ExchangeCache> cache,
                               std::string model_tag,
                               std::shared_ptr<LlmGateway> upstream)
    : cache_(std::move(cache)),
      model_tag_(std::move(model_tag)),
      upstream_(std::move(upstream)) {}

LlmExchange CachingGateway::complete(const std::string& prompt) {
  if (auto hit = cache_->find(model_tag_, prompt)) {
    hit->retrieved_from_cache = true;
    return *hit;
  }
  if (!upstream_) {
    throw Error(ErrorCode::CacheMiss,
                "offline and no cached reply for prompt '" + prompt + "'");
  }
  auto exchange = upstream_->complete(prompt);
  exchange.model_tag = model_tag_;
  exchange.retrieved_from_cache = false;
  cache_->append(exchange);
  return exchange;
}

HttpChatGateway::HttpChatGateway(HttpGatewayOptions options)
    : options_(std::move(options)),
      in_flight_(std::clamp(options_.max_in_flight, 1, 256)),
      last_refill_(std::chrono::steady_clock::now()) {
  auto scheme = options_.endpoint.find("://");
  if (scheme == std::string::npos) {
    throw Error(ErrorCode::InvalidArgument,
                "endpoint '" + options_.endpoint + "' has no scheme");
  }
  auto slash = options_.endpoint.find('/', scheme + 3);
  base_ = options_.endpoint.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : options_.endpoint.substr(slash);
  if (options_.model.empty()) {
    throw Error(ErrorCode::InvalidArgument, "no model configured");
  }
}

void HttpChatGateway::acquire_token() {
  if (options_.requests_per_second <= 0.0) return;
  while (true) {
    std::chrono::duration<double> wait{};
    {
      std::lock_guard lock(bucket_mutex_);
      auto now = std::chrono::steady_clock::now();
      std::chrono::duration<double> elapsed = now - last_refill_;
      last_refill_ = now;
      tokens_ = std::min(1.0, tokens_ + elapsed.count() * options_.requests_per_second);
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      wait = std::chrono::duration<double>((1.0 - tokens_) /
                                           options_.requests_per_second);
    }
    std::this_thread::sleep_for(wait);
  }
}

LlmExchange HttpChatGateway::complete(const std::string& prompt) {
  json body{{"model", options_.model},
            {"temperature", options_.temperature},
            {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})}};
  std::string payload = body.dump();

  httplib::Headers headers;
  if (!options_.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + options_.api_key);
  }

  std::string last_error;
  auto delay = options_.backoff;
  for (int attempt = 0; attempt <= options_.retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
    acquire_token();
    in_flight_.acquire();
    httplib::Result res;
    {
      httplib::Client client(base_);
      client.set_connection_timeout(options_.timeout);
      client.set_read_timeout(options_.timeout);
      res = client.Post(path_, headers, payload, "application/json");
    }
    in_flight_.release();

    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw Error(ErrorCode::Gateway,
                  "HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    std::string content;
    try {
      auto reply = json::parse(res->body);
      content = reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw ParseError(std::string("malformed chat-completions reply: ") + e.what(),
                       res->body);
    }
    if (content.empty()) throw ParseError("empty completion", res->body);
    return {prompt, options_.model, content, false, utc_timestamp()};
  }
  throw Error(ErrorCode::Gateway, "giving up after " +
                                      std::to_string(options_.retries + 1) +
                                      " attempts: " + last_error);
}

std::vector<CompletionResult> complete_all(LlmGateway& gateway,
                                           const std::vector<std::string>& prompts,
                                           int max_in_flight) {
  std::vector<CompletionResult> results(prompts.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < prompts.size(); i = next++) {
      try {
        results[i].exchange = gateway.complete(prompts[i]);
      } catch (...) {
        results[i].error = std::current_exception();
      }
    }
  };
  std::size_t n = std::min<std::size_t>(std::max(max_in_flight, 1), prompts.size());
  std::vector<std::jthread> threads;
  for (std::size_t t = 1; t < n; ++t) threads.emplace_back(worker);
  worker();
  return results;
}

}  // namespace coder::atg
